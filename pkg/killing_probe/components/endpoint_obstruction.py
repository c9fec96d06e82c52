"""
Endpoint-transport obstruction for degree-d integrals

Unknowns are the restrictions (alpha_1, ..., alpha_N) of a candidate integral
to the points A_1..A_N, each written in the orthonormal frame of its point and
concatenated in point order, so vectors have length N^2. Transport maps send
such data from one point set to another by matching polynomial values on the
endpoint velocities of the connecting geodesics.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg

from killing_probe.config import (
    DEFAULT_TOLERANCES,
    MAX_ATTEMPTS,
    MIN_SEPARATION_FACTOR,
    POINT_RADIUS_FACTOR,
    SCREEN_CANDIDATES,
    Tolerances,
)
from killing_probe.utils.errors import (
    RESAMPLE_ERRORS,
    ConfigurationExhausted,
    IllConditioned,
)
from killing_probe.utils.geodesic_engine import GeodesicSegment, batch_connect, solve_bvp
from killing_probe.utils.metric_model import MetricField, orthonormal_frame
from killing_probe.utils.sym_poly import (
    SymPolyElement,
    SymPolySpace,
    frame_hamiltonian_power,
    induced_map,
    is_decisive,
    veronese,
)

logger = logging.getLogger(__name__)

LEGS = ("AB", "BC", "BA", "CB", "AC")
SCHEMES = ("composition", "direct")


@dataclass
class PointConfiguration:
    """A, B_1..B_kappa, C point sets with their connecting geodesics and frames."""

    space: SymPolySpace
    A: np.ndarray  # (N, n)
    B: np.ndarray  # (kappa, N, n)
    C: np.ndarray  # (N, n)
    kappa: int
    seg_AB: List[List[List[GeodesicSegment]]]  # [l][i][j]: A_i -> B_{l,j}
    seg_BC: List[List[List[GeodesicSegment]]]  # [l][i][j]: B_{l,i} -> C_j
    frames_A: np.ndarray  # (N, n, n)
    frames_B: np.ndarray  # (kappa, N, n, n)
    frames_C: np.ndarray  # (N, n, n)
    frame_signature: tuple
    decisive_certs: Dict[str, List[float]]
    seed: int
    attempts: int = 1
    seg_AC: Optional[List[List[GeodesicSegment]]] = None  # [i][j]: A_i -> C_j

    @property
    def N(self) -> int:
        return self.space.N

    @property
    def max_condition(self) -> float:
        return max(max(v) for v in self.decisive_certs.values())

    @property
    def max_bvp_residual(self) -> float:
        worst = 0.0
        for grid in list(self.seg_AB) + list(self.seg_BC) + ([self.seg_AC] if self.seg_AC else []):
            for row in grid:
                for seg in row:
                    worst = max(worst, seg.bvp_residual)
        return worst

    def points(self) -> Dict[str, Any]:
        return {"A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist()}


@dataclass
class KernelSpectrum:
    singular_values: np.ndarray
    rank: Optional[int]
    dimension: Optional[int]
    gap_ratio: float
    basis: np.ndarray  # (dimension, cols); empty when indeterminate

    @property
    def determinate(self) -> bool:
        return self.dimension is not None


@dataclass
class ObstructionReport:
    metric_label: str
    n: int
    d: int
    kappa: int
    scheme: str
    config_seed: int
    singular_values: np.ndarray
    raw_kernel_dim: Optional[int]
    nontrivial_kernel_dim: Optional[int]
    gap_ratio: float
    kernel_basis: np.ndarray
    matrix_norm: float
    tolerances: Dict[str, Any] = field(default_factory=dict)
    trivial_residual: Optional[float] = None
    deflation_gap: Optional[float] = None
    max_condition: Optional[float] = None
    max_bvp_residual: Optional[float] = None
    attempts: int = 1

    @property
    def determinate(self) -> bool:
        return self.raw_kernel_dim is not None and self.nontrivial_kernel_dim is not None

    @property
    def rank(self) -> Optional[int]:
        if self.raw_kernel_dim is None:
            return None
        return self.kernel_basis.shape[1] - self.raw_kernel_dim


# Point sampling -----------------------------------------------------------


def _draw_points(rng: np.random.Generator, count: int, n: int, radius: float, separation: float) -> np.ndarray:
    points: List[np.ndarray] = []
    tries = 0
    while len(points) < count:
        tries += 1
        if tries > 1000 * count:
            raise ConfigurationExhausted(f"could not place {count} points with separation {separation:g}")
        direction = rng.normal(size=n)
        direction /= np.linalg.norm(direction)
        candidate = direction * radius * rng.uniform() ** (1.0 / n)
        if all(np.linalg.norm(candidate - p) >= separation for p in points):
            points.append(candidate)
    return np.array(points)


def _unit(u: np.ndarray, signature) -> np.ndarray:
    """Scale frame vectors (last axis) to |sum_k sig_k u_k^2| = 1."""
    norm2 = np.abs(np.einsum("...k,k,...k->...", u, np.asarray(signature, dtype=float), u))
    return u / np.sqrt(norm2)[..., None]


def _frame_velocities(segments, frames_src, frames_tgt, signature):
    """Unit frame coordinates of (outgoing, incoming) velocities, each (rows, cols, n).

    Each endpoint is normalized by its own frame energy, so H^q takes the same
    value at both ends of every segment regardless of integration drift.
    """
    rows, cols = len(segments), len(segments[0])
    n = frames_src.shape[-1]
    out = np.empty((rows, cols, n))
    inc = np.empty((rows, cols, n))
    for i in range(rows):
        for j in range(cols):
            seg = segments[i][j]
            out[i, j] = np.linalg.solve(frames_src[i], seg.v_start)
            inc[i, j] = np.linalg.solve(frames_tgt[j], seg.v_end)
    return _unit(out, signature), _unit(inc, signature)


def _chord_condition(space: SymPolySpace, src, tgt, frames_src, frames_tgt, signature) -> float:
    """Worst Veronese condition number of a leg with chords standing in for geodesics."""
    chords = tgt[None, :, :] - src[:, None, :]
    out = np.einsum("iab,ijb->ija", np.linalg.inv(frames_src), chords)
    inc = np.einsum("jab,ijb->ija", np.linalg.inv(frames_tgt), chords)
    with np.errstate(divide="ignore", invalid="ignore"):
        out, inc = _unit(out, signature), _unit(inc, signature)
        conds = np.concatenate([
            np.linalg.cond(veronese(space, np.swapaxes(inc, 0, 1))),
            np.linalg.cond(veronese(space, out)),
        ])
    if not np.all(np.isfinite(conds)):
        return float("inf")
    return float(np.max(conds))


def _screen(m: MetricField, space: SymPolySpace, rng: np.random.Generator, kappa: int,
            with_direct: bool, radius: float, separation: float):
    """Best of SCREEN_CANDIDATES point draws by chord condition; returns (score, A, B, C, frames)."""
    N, n = space.N, m.dim
    sig = m.frame_signature
    best = None
    for _ in range(SCREEN_CANDIDATES):
        pts = _draw_points(rng, (kappa + 2) * N, n, radius, separation)
        A, C = pts[:N], pts[N:2 * N]
        B = pts[2 * N:].reshape(kappa, N, n)
        frames_A = np.array([orthonormal_frame(m, p) for p in A])
        frames_C = np.array([orthonormal_frame(m, p) for p in C])
        frames_B = np.array([[orthonormal_frame(m, p) for p in Bl] for Bl in B])
        legs = [(A, B[ell], frames_A, frames_B[ell]) for ell in range(kappa)]
        legs += [(B[ell], C, frames_B[ell], frames_C) for ell in range(kappa)]
        if with_direct:
            legs.append((A, C, frames_A, frames_C))
        score = max(_chord_condition(space, *leg, sig) for leg in legs)
        if best is None or score < best[0]:
            best = (score, A, B, C, frames_A, frames_B, frames_C)
    return best


def _certify_leg(space: SymPolySpace, segments, frames_src, frames_tgt, signature, cond_max: float,
                 name: str, certs):
    out, inc = _frame_velocities(segments, frames_src, frames_tgt, signature)
    incoming = []
    for j in range(inc.shape[1]):
        ok, cond = is_decisive(space, inc[:, j], cond_max)
        if not ok:
            raise IllConditioned(f"{name}: incoming velocities at target {j} not decisive (cond {cond:.3e})",
                                 {"leg": name, "target": j, "cond": cond})
        incoming.append(cond)
    outgoing = []
    for i in range(out.shape[0]):
        ok, cond = is_decisive(space, out[i], cond_max)
        if not ok:
            raise IllConditioned(f"{name}: outgoing velocities at source {i} not decisive (cond {cond:.3e})",
                                 {"leg": name, "source": i, "cond": cond})
        outgoing.append(cond)
    certs[f"{name}:in"] = incoming
    certs[f"{name}:out"] = outgoing


def sample_configuration(
    m: MetricField,
    space: SymPolySpace,
    kappa: int,
    seed: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
    with_direct: bool = False,
    n_jobs: Optional[int] = None,
    max_attempts: int = MAX_ATTEMPTS,
) -> PointConfiguration:
    """Draw A, B_l, C, connect them, and certify decisiveness; resample on failure.

    Each attempt screens SCREEN_CANDIDATES draws by the Veronese conditioning of
    their chord directions and shoots geodesics only for the best one.
    """
    if kappa < 2:
        raise ValueError("kappa must be at least 2")
    if space.n != m.dim:
        raise ValueError(f"polynomial space has n={space.n} but metric has dimension {m.dim}")

    radius = POINT_RADIUS_FACTOR * m.domain_radius
    separation = MIN_SEPARATION_FACTOR * m.domain_radius
    sig = m.frame_signature
    last_error = None

    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        score, A, B, C, frames_A, frames_B, frames_C = _screen(m, space, rng, kappa, with_direct, radius, separation)
        logger.info(f"Sampling configuration: attempt {attempt + 1}, chord condition {score:.3e}")
        try:
            seg_AB, seg_BC = [], []
            certs: Dict[str, List[float]] = {}
            for ell in range(kappa):
                seg_AB.append(batch_connect(m, A, B[ell], tol, n_jobs))
                seg_BC.append(batch_connect(m, B[ell], C, tol, n_jobs))
                _certify_leg(space, seg_AB[ell], frames_A, frames_B[ell], sig, tol.cond_max, f"AB[{ell}]", certs)
                _certify_leg(space, seg_BC[ell], frames_B[ell], frames_C, sig, tol.cond_max, f"BC[{ell}]", certs)
            seg_AC = None
            if with_direct:
                seg_AC = batch_connect(m, A, C, tol, n_jobs)
                _certify_leg(space, seg_AC, frames_A, frames_C, sig, tol.cond_max, "AC", certs)
        except RESAMPLE_ERRORS as e:
            last_error = e
            logger.warning(f"Resampling configuration after {e.kind}: {e.message}")
            continue

        logger.info(f"Configuration accepted after {attempt + 1} attempt(s)")
        return PointConfiguration(
            space=space,
            A=A,
            B=B,
            C=C,
            kappa=kappa,
            seg_AB=seg_AB,
            seg_BC=seg_BC,
            frames_A=frames_A,
            frames_B=frames_B,
            frames_C=frames_C,
            frame_signature=m.frame_signature,
            decisive_certs=certs,
            seed=seed,
            attempts=attempt + 1,
            seg_AC=seg_AC,
        )

    logger.error(f"No admissible configuration for '{m.label}' after {max_attempts} attempts")
    raise ConfigurationExhausted(
        f"no admissible configuration after {max_attempts} attempts",
        {"seed": seed, "last_error": None if last_error is None else last_error.to_dict()},
    )


# Transport maps -----------------------------------------------------------


def _leg_map(space: SymPolySpace, segments, frames_src, frames_tgt, signature, cond_max: float) -> np.ndarray:
    """Block row j = M_j^-1 R_j for segments[i][j] running from source i to target j."""
    N = space.N
    out, inc = _frame_velocities(segments, frames_src, frames_tgt, signature)
    rows, cols = out.shape[:2]
    phi = np.zeros((cols * N, rows * N))
    for j in range(cols):
        M_j = veronese(space, inc[:, j])
        cond = float(np.linalg.cond(M_j))
        if not np.isfinite(cond) or cond > cond_max:
            raise IllConditioned(f"target {j}: incoming Veronese matrix has cond {cond:.3e}",
                                 {"target": j, "cond": cond})
        R_j = np.zeros((rows, rows * N))
        for i in range(rows):
            R_j[i, i * N:(i + 1) * N] = veronese(space, out[i, j])
        phi[j * N:(j + 1) * N] = linalg.solve(M_j, R_j)
    return phi


def _transposed(segments):
    return [[segments[i][j].reversed() for i in range(len(segments))] for j in range(len(segments[0]))]


def transport_map(cfg: PointConfiguration, ell: int, leg: str, cond_max: Optional[float] = None) -> np.ndarray:
    """Phi for one leg; ell is the 0-based index of B_l (ignored for AC)."""
    if cond_max is None:
        cond_max = DEFAULT_TOLERANCES.cond_max
    if leg not in LEGS:
        raise ValueError(f"leg must be one of {LEGS}, got {leg!r}")
    if leg != "AC" and not 0 <= ell < cfg.kappa:
        raise ValueError(f"ell must be in [0, {cfg.kappa}), got {ell}")
    space, sig = cfg.space, cfg.frame_signature
    if leg == "AB":
        return _leg_map(space, cfg.seg_AB[ell], cfg.frames_A, cfg.frames_B[ell], sig, cond_max)
    if leg == "BC":
        return _leg_map(space, cfg.seg_BC[ell], cfg.frames_B[ell], cfg.frames_C, sig, cond_max)
    if leg == "BA":
        return _leg_map(space, _transposed(cfg.seg_AB[ell]), cfg.frames_B[ell], cfg.frames_A, sig, cond_max)
    if leg == "CB":
        return _leg_map(space, _transposed(cfg.seg_BC[ell]), cfg.frames_C, cfg.frames_B[ell], sig, cond_max)
    if cfg.seg_AC is None:
        raise ValueError("configuration was sampled without direct A->C geodesics")
    return _leg_map(space, cfg.seg_AC, cfg.frames_A, cfg.frames_C, sig, cond_max)


def composed_transport(cfg: PointConfiguration, ell: int, cond_max: Optional[float] = None) -> np.ndarray:
    return transport_map(cfg, ell, "BC", cond_max) @ transport_map(cfg, ell, "AB", cond_max)


def obstruction_matrix(cfg: PointConfiguration, scheme: str = "composition", cond_max: Optional[float] = None) -> np.ndarray:
    """Stack of Phi_l^BC Phi_l^AB - Phi_1^BC Phi_1^AB (l >= 2), or of Phi_l^BC Phi_l^AB - Phi^AC."""
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    paths = [composed_transport(cfg, ell, cond_max) for ell in range(cfg.kappa)]
    if scheme == "composition":
        blocks = [p - paths[0] for p in paths[1:]]
    else:
        direct = transport_map(cfg, 0, "AC", cond_max)
        blocks = [p - direct for p in paths]
    return np.vstack(blocks)


def compose_reverse_check(cfg: PointConfiguration, ell: int = 0, cond_max: Optional[float] = None) -> float:
    """max |Phi^BA Phi^AB - I|; zero up to solver error."""
    product = transport_map(cfg, ell, "BA", cond_max) @ transport_map(cfg, ell, "AB", cond_max)
    return float(np.max(np.abs(product - np.eye(product.shape[0]))))


# Kernel ------------------------------------------------------------------


def kernel_analysis(
    M,
    gap_min: float = DEFAULT_TOLERANCES.gap_min,
    abs_floor: float = DEFAULT_TOLERANCES.abs_floor,
    scale: float = 0.0,
) -> KernelSpectrum:
    """Numerical kernel by the spectral-gap rank rule; Indeterminate when no clean cut exists.

    Singular values s (descending, padded with zeros up to the column count,
    s[cols] = 0) are cut at the largest r with s[r-1] / s[r] >= gap_min and
    s[r] < floor, where floor = abs_floor * max(s[0], scale). The retained
    s[r-1] must itself be at or above the floor, which leaves the first sub-floor
    index as the only candidate; a spectrum with nothing below the floor is cut
    at r = cols (empty kernel, infinite ratio).
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    rows, cols = M.shape
    if rows < cols:
        M = np.vstack([M, np.zeros((cols - rows, cols))])
    _, s, vt = linalg.svd(M, full_matrices=False)

    ref = max(float(s[0]) if len(s) else 0.0, scale)
    if ref == 0.0:
        return KernelSpectrum(s, 0, cols, float("inf"), np.eye(cols))
    floor = abs_floor * ref

    padded = np.append(s, 0.0)
    cut = int(np.argmax(padded < floor))
    prev = ref if cut == 0 else float(padded[cut - 1])
    ratio = prev / padded[cut] if padded[cut] > 0 else float("inf")
    if ratio >= gap_min:
        return KernelSpectrum(s, cut, cols - cut, ratio, vt[cut:].copy())
    return KernelSpectrum(s, None, None, ratio, np.zeros((0, cols)))


def trivial_vector(cfg: PointConfiguration) -> np.ndarray:
    """(H^q|A_1, ..., H^q|A_N) in frame coordinates; zero for odd d."""
    space = cfg.space
    if space.d % 2:
        return np.zeros(space.N * space.N)
    hq = frame_hamiltonian_power(space.n, cfg.frame_signature, space.d // 2)
    return np.tile(hq.coeffs, space.N)


def restriction_vector(cfg: PointConfiguration, integral: Callable[[np.ndarray], Any]) -> np.ndarray:
    """Frame-coordinate restrictions at A of a field x -> chart coefficients (or SymPolyElement)."""
    space = cfg.space
    parts = []
    for point, frame in zip(cfg.A, cfg.frames_A):
        value = integral(point)
        coeffs = value.coeffs if isinstance(value, SymPolyElement) else np.asarray(value, dtype=float)
        parts.append(induced_map(space, frame.T) @ coeffs)
    return np.concatenate(parts)


def deflate_trivial(report: ObstructionReport, m: MetricField, cfg: PointConfiguration,
                    tol: Tolerances = DEFAULT_TOLERANCES, M: Optional[np.ndarray] = None) -> Optional[int]:
    """Kernel dimension after removing the H^q ray (even d); odd d is unchanged.

    When H^q passes the floor test on M the kernel splits as span(t) + (kernel on t-perp),
    so the projected kernel is the kernel of M restricted to the orthogonal
    complement of t, decided by the same gap rule against the same floor.
    Otherwise the projection removes nothing.
    """
    raw = report.raw_kernel_dim
    if cfg.space.d % 2 or raw is None or raw == 0:
        report.nontrivial_kernel_dim = raw
        return raw
    if M is None:
        M = obstruction_matrix(cfg, report.scheme, tol.cond_max)
    t = trivial_vector(cfg)
    t = t / np.linalg.norm(t)
    ref = float(report.singular_values[0])
    if np.linalg.norm(M @ t) >= tol.abs_floor * ref:
        logger.warning(f"H^q is not in the numerical kernel for '{m.label}', d={cfg.space.d}")
        report.nontrivial_kernel_dim = raw
        return raw
    complement = linalg.null_space(t[None, :])
    spectrum = kernel_analysis(M @ complement, tol.gap_min, tol.abs_floor, scale=ref)
    report.deflation_gap = spectrum.gap_ratio
    if spectrum.dimension is None or spectrum.dimension not in (raw - 1, raw):
        logger.warning(f"Deflation of the trivial ray is indeterminate for '{m.label}', d={cfg.space.d}")
        report.nontrivial_kernel_dim = None
        return None
    report.nontrivial_kernel_dim = spectrum.dimension
    return report.nontrivial_kernel_dim


# Reconstruction ----------------------------------------------------------


def reconstruct_fields(kernel_vecs, cfg: PointConfiguration, m: MetricField, x,
                       tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Chart coefficients at x of every candidate in kernel_vecs (rows), shape (k, N)."""
    space = cfg.space
    N = space.N
    vecs = np.atleast_2d(np.asarray(kernel_vecs, dtype=float))
    x = np.asarray(x, dtype=float)
    segments = [[solve_bvp(m, a, x, tol)] for a in cfg.A]
    frame_x = orthonormal_frame(m, x)
    out, inc = _frame_velocities(segments, cfg.frames_A, frame_x[None], cfg.frame_signature)
    M_x = veronese(space, inc[:, 0])
    ok, cond = is_decisive(space, inc[:, 0], tol.cond_max)
    if not ok:
        raise IllConditioned(f"incoming velocities at {x.tolist()} not decisive (cond {cond:.3e})",
                             {"point": x.tolist(), "cond": cond})
    rows = veronese(space, out[:, 0])  # (N, N): row i evaluates alpha_i
    alphas = vecs.reshape(len(vecs), N, N)
    values = np.einsum("ia,kia->ki", rows, alphas)
    frame_coeffs = linalg.solve(M_x, values.T).T
    to_chart = induced_map(space, np.linalg.inv(frame_x).T)
    return frame_coeffs @ to_chart.T


def reconstruct_integral(kernel_vec, cfg: PointConfiguration, m: MetricField, x,
                         tol: Tolerances = DEFAULT_TOLERANCES) -> SymPolyElement:
    """Candidate integral at x (chart coordinates) from its restrictions at A."""
    coeffs = reconstruct_fields(kernel_vec, cfg, m, x, tol)[0]
    return cfg.space.element(coeffs)


def analyze_obstruction(
    m: MetricField,
    space: SymPolySpace,
    kappa: int,
    seed: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
    scheme: str = "composition",
    n_jobs: Optional[int] = None,
    cfg: Optional[PointConfiguration] = None,
):
    """Sample (unless cfg is given), assemble, analyse and deflate; returns (cfg, report)."""
    if cfg is None:
        cfg = sample_configuration(m, space, kappa, seed, tol, with_direct=scheme == "direct", n_jobs=n_jobs)
    logger.info(f"Assembling obstruction matrix ({scheme}) for '{m.label}', d={space.d}, kappa={cfg.kappa}")
    M = obstruction_matrix(cfg, scheme, tol.cond_max)
    spectrum = kernel_analysis(M, tol.gap_min, tol.abs_floor)
    report = ObstructionReport(
        metric_label=m.label,
        n=space.n,
        d=space.d,
        kappa=cfg.kappa,
        scheme=scheme,
        config_seed=seed,
        singular_values=spectrum.singular_values,
        raw_kernel_dim=spectrum.dimension,
        nontrivial_kernel_dim=None,
        gap_ratio=spectrum.gap_ratio,
        kernel_basis=spectrum.basis,
        matrix_norm=float(np.linalg.norm(M, 2)),
        tolerances=tol.as_dict(),
        max_condition=cfg.max_condition,
        max_bvp_residual=cfg.max_bvp_residual,
        attempts=cfg.attempts,
    )
    if space.d % 2 == 0:
        t = trivial_vector(cfg)
        report.trivial_residual = float(np.linalg.norm(M @ t) / (np.linalg.norm(t) * max(report.matrix_norm, 1e-300)))
    deflate_trivial(report, m, cfg, tol, M)
    logger.info(
        f"Obstruction for '{m.label}', d={space.d}: raw kernel {report.raw_kernel_dim}, "
        f"nontrivial {report.nontrivial_kernel_dim}, gap {report.gap_ratio:.3e}"
    )
    return cfg, report
