import os
from dataclasses import dataclass, fields, replace
from dotenv import load_dotenv

load_dotenv()

# Runtime Configuration
THREADS = int(os.getenv("KILLING_PROBE_THREADS", "1"))
LOG_LEVEL = os.getenv("KILLING_PROBE_LOG_LEVEL", "INFO")
OUTPUT_DIR = os.getenv("KILLING_PROBE_OUTPUT_DIR", "out")

# Report Configuration
TOOL_NAME = "killing-probe"
REPORT_SCHEMA_VERSION = "1"
FLOAT_DIGITS = 17

# Geodesic Tolerances
IVP_TOL = float(os.getenv("KILLING_PROBE_IVP_TOL", "1e-11"))
BVP_TOL = float(os.getenv("KILLING_PROBE_BVP_TOL", "1e-8"))
ENERGY_DRIFT_TOL = 1e-9
LIGHT_TOL = 1e-8
MAX_ITER = 50
MAX_HALVINGS = 6
POLISH_STEPS = 3
IVP_SAMPLES = 64

# Rank Decisions
COND_MAX = float(os.getenv("KILLING_PROBE_COND_MAX", "1e8"))
GAP_MIN = float(os.getenv("KILLING_PROBE_GAP_MIN", "1e6"))
ABS_FLOOR = float(os.getenv("KILLING_PROBE_ABS_FLOOR", "1e-9"))

# Metric Model
DET_MARGIN = 1e-6
FD_STEP_FACTOR = 1e-4  # times domain_radius
CERTIFICATE_GRID = 64

# Point Configurations
DEFAULT_KAPPA = 3
POINT_RADIUS_FACTOR = 0.8
MIN_SEPARATION_FACTOR = 0.15
MAX_ATTEMPTS = 100
SCREEN_CANDIDATES = 64  # chord-screened draws per attempt

# Oracles
HOLONOMY_LOOPS = 12
HOLONOMY_SIDE_RANGE = (0.1, 0.5)  # times domain_radius
CONSERVATION_TRIALS = 20
CONSERVATION_EPS = 1e-12
CERTIFY_DRIFT = 1e-6
QUERY_GRID = 5
FIT_DEGREE = 4

# Catalog names accepted in run configs
CATALOG_NAMES = [
    "flat",
    "lorentz_flat",
    "sphere_cap",
    "liouville",
    "revolution",
    "random_analytic",
]

# Exit codes
EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2


@dataclass(frozen=True)
class Tolerances:
    """Every numerical threshold used by the pipeline, overridable per run."""

    ivp_tol: float = IVP_TOL
    bvp_tol: float = BVP_TOL
    energy_drift_tol: float = ENERGY_DRIFT_TOL
    light_tol: float = LIGHT_TOL
    max_iter: int = MAX_ITER
    max_halvings: int = MAX_HALVINGS
    polish_steps: int = POLISH_STEPS
    cond_max: float = COND_MAX
    gap_min: float = GAP_MIN
    abs_floor: float = ABS_FLOOR
    det_margin: float = DET_MARGIN

    def with_overrides(self, **overrides) -> "Tolerances":
        """Return a copy with the non-None overrides applied."""
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"Unknown tolerance keys: {', '.join(sorted(unknown))}")
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_TOLERANCES = Tolerances()
