"""
Run-config validation for killing-probe
"""

import json
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from killing_probe.config import CATALOG_NAMES, DEFAULT_KAPPA, OUTPUT_DIR
from killing_probe.utils.errors import ConfigError, UnknownMetric, UsageError


class SupportModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    center: List[float]
    radius: float = Field(gt=0)


class PerturbationModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    amplitude: float = Field(ge=0)
    frequency_cutoff: int = Field(default=3, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    support: Optional[SupportModel] = None


class MetricSpecModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    params: Dict[str, Any] = Field(default_factory=dict)
    domain_radius: float = Field(default=1.0, gt=0)
    deriv_mode: str = "analytic"
    signature: Optional[List[int]] = None
    perturbations: List[PerturbationModel] = Field(default_factory=list)

    @field_validator("deriv_mode")
    @classmethod
    def check_deriv_mode(cls, value: str) -> str:
        if value not in ("analytic", "finite-difference"):
            raise ValueError("deriv_mode must be 'analytic' or 'finite-difference'")
        return value

    @field_validator("signature")
    @classmethod
    def check_signature(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is not None and any(s not in (-1, 1) for s in value):
            raise ValueError("signature entries must be +1 or -1")
        return value


class ToleranceOverrides(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ivp_tol: Optional[float] = Field(default=None, gt=0)
    bvp_tol: Optional[float] = Field(default=None, gt=0)
    max_iter: Optional[int] = Field(default=None, ge=1)
    cond_max: Optional[float] = Field(default=None, gt=1)
    gap_min: Optional[float] = Field(default=None, gt=1)
    abs_floor: Optional[float] = Field(default=None, gt=0)
    energy_drift_tol: Optional[float] = Field(default=None, gt=0)
    light_tol: Optional[float] = Field(default=None, gt=0)


class OracleToggles(BaseModel):
    model_config = ConfigDict(extra="forbid")

    collocation: bool = True
    holonomy: bool = True
    x_degree: Optional[int] = Field(default=None, ge=0)
    collocation_form: str = "momentum"
    holonomy_loops: int = Field(default=12, ge=1)

    @field_validator("collocation_form")
    @classmethod
    def check_form(cls, value: str) -> str:
        if value not in ("momentum", "velocity"):
            raise ValueError("collocation_form must be 'momentum' or 'velocity'")
        return value


class SweepModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    amplitudes: List[float] = Field(default_factory=list)
    frequency_cutoff: int = Field(default=3, ge=1)
    seed: int = Field(default=0, ge=0)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    metric: MetricSpecModel
    degrees: List[int]
    kappa: int = Field(default=DEFAULT_KAPPA, ge=2)
    seeds: List[int]
    scheme: str = "composition"
    tolerances: ToleranceOverrides = Field(default_factory=ToleranceOverrides)
    oracles: OracleToggles = Field(default_factory=OracleToggles)
    sweep: Optional[SweepModel] = None
    output: str = OUTPUT_DIR

    @field_validator("scheme")
    @classmethod
    def check_scheme(cls, value: str) -> str:
        if value not in ("composition", "direct"):
            raise ValueError("scheme must be 'composition' or 'direct'")
        return value


def validate_metric_name(name: Any) -> Tuple[bool, str]:
    """Validate catalog metric name."""
    if not isinstance(name, str):
        return False, "Metric name must be a string"

    if name not in CATALOG_NAMES:
        return False, f"Unknown metric '{name}'. Must be one of: {', '.join(CATALOG_NAMES)}"

    return True, ""


def validate_degrees(degrees: Any) -> Tuple[bool, str]:
    """Validate the list of polynomial degrees."""
    if not isinstance(degrees, list) or not degrees:
        return False, "At least one degree is required"

    if any(not isinstance(d, int) or isinstance(d, bool) for d in degrees):
        return False, "Degrees must be integers"

    if min(degrees) < 1:
        return False, "Degrees must be at least 1"

    if max(degrees) > 6:
        return False, "Degrees above 6 are not supported"

    return True, ""


def validate_seeds(seeds: Any) -> Tuple[bool, str]:
    """Validate configuration seeds."""
    if not isinstance(seeds, list) or not seeds:
        return False, "At least one seed is required"

    if any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in seeds):
        return False, "Seeds must be non-negative integers"

    return True, ""


def validate_amplitudes(amplitudes: Any) -> Tuple[bool, str]:
    """Validate a sweep amplitude grid."""
    if not isinstance(amplitudes, list) or len(amplitudes) < 2:
        return False, "Sweep needs at least two amplitudes"

    if any(a < 0 for a in amplitudes):
        return False, "Amplitudes cannot be negative"

    if any(b <= a for a, b in zip(amplitudes, amplitudes[1:])):
        return False, "Amplitudes must be strictly ascending"

    return True, ""


def validate_run_config(raw: Dict[str, Any]) -> Dict[str, List[str]]:
    """Validate the fields pydantic does not cover and return validation errors."""
    errors = {}

    metric = raw.get("metric")
    if isinstance(metric, dict) and "name" in metric:
        is_valid, error = validate_metric_name(metric["name"])
        if not is_valid:
            errors["metric.name"] = [error]

    if "degrees" in raw:
        is_valid, error = validate_degrees(raw["degrees"])
        if not is_valid:
            errors["degrees"] = [error]

    if "seeds" in raw:
        is_valid, error = validate_seeds(raw["seeds"])
        if not is_valid:
            errors["seeds"] = [error]

    return errors


def _pydantic_errors(exc: ValidationError) -> Dict[str, List[str]]:
    errors: Dict[str, List[str]] = {}
    for item in exc.errors():
        key = ".".join(str(part) for part in item["loc"]) or "config"
        errors.setdefault(key, []).append(item["msg"])
    return errors


def parse_run_config(raw: Any) -> RunConfig:
    """Validate a decoded config document; raises UnknownMetric or ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("Run config must be a JSON object")

    errors = validate_run_config(raw)
    if "metric.name" in errors:
        raise UnknownMetric(errors["metric.name"][0], {"name": raw["metric"]["name"]})

    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        errors.update(_pydantic_errors(e))
        raise ConfigError("Invalid run config", {"errors": errors})
    if errors:
        raise ConfigError("Invalid run config", {"errors": errors})
    return config


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}", {"path": path})
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file is not valid JSON: {e}", {"path": path})
    return parse_run_config(raw)


def require_sweep(config: RunConfig) -> List[float]:
    """Amplitude grid of a sweep config; UsageError when missing or malformed."""
    amplitudes = config.sweep.amplitudes if config.sweep else []
    is_valid, error = validate_amplitudes(amplitudes)
    if not is_valid:
        raise UsageError(error, {"amplitudes": amplitudes})
    return amplitudes
