"""
Metrics on a disc D in R^n: coefficient evaluators, catalog, perturbations
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import linalg

from killing_probe.config import CERTIFICATE_GRID, DET_MARGIN, FD_STEP_FACTOR
from killing_probe.utils.errors import (
    ConfigError,
    DegenerateResult,
    OutOfDomain,
    SingularMetric,
    UnknownMetric,
)

logger = logging.getLogger(__name__)


# Coefficient sources ------------------------------------------------------
#
# Every source evaluates on batches: values(x) maps (..., n) -> (..., n, n) and
# derivatives(x) maps (..., n) -> (..., n, n, n) with layout [..., k, i, j] for
# d g_ij / d x^k. Sources are plain module-level classes so that metrics
# pickle cleanly into worker processes.


class ConstantSource:
    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)

    def values(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape).copy()

    def derivatives(self, x):
        x = np.asarray(x, dtype=float)
        n = self.matrix.shape[0]
        return np.zeros(x.shape[:-1] + (n, n, n))


class ConformalSphereSource:
    """Round sphere of radius a in stereographic coordinates: 4a^4/(a^2+|x|^2)^2 delta."""

    def __init__(self, n: int, sphere_radius: float = 1.0):
        self.n = n
        self.a = float(sphere_radius)

    def _factor(self, x):
        s = self.a ** 2 + np.sum(x * x, axis=-1)
        return 4.0 * self.a ** 4 / s ** 2, -16.0 * self.a ** 4 / s ** 3

    def values(self, x):
        x = np.asarray(x, dtype=float)
        lam, _ = self._factor(x)
        return lam[..., None, None] * np.eye(self.n)

    def derivatives(self, x):
        x = np.asarray(x, dtype=float)
        _, dlam_coeff = self._factor(x)
        grad = dlam_coeff[..., None] * x
        return grad[..., :, None, None] * np.eye(self.n)


class LiouvilleSource:
    """(f(x1) + h(x2)) (dx1^2 + dx2^2) with polynomial f, h (ascending coefficients)."""

    def __init__(self, f_coeffs, h_coeffs):
        self.f = np.asarray(f_coeffs, dtype=float)
        self.h = np.asarray(h_coeffs, dtype=float)
        self.df = P.polyder(self.f)
        self.dh = P.polyder(self.h)

    def values(self, x):
        x = np.asarray(x, dtype=float)
        conf = P.polyval(x[..., 0], self.f) + P.polyval(x[..., 1], self.h)
        return conf[..., None, None] * np.eye(2)

    def derivatives(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, :, :] = P.polyval(x[..., 0], self.df)[..., None, None] * np.eye(2)
        out[..., 1, :, :] = P.polyval(x[..., 1], self.dh)[..., None, None] * np.eye(2)
        return out


class RevolutionSource:
    """dr^2 + rho(r)^2 dtheta^2 in the chart (r, theta), rho polynomial."""

    def __init__(self, rho_coeffs):
        self.rho = np.asarray(rho_coeffs, dtype=float)
        self.drho = P.polyder(self.rho)

    def values(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = P.polyval(x[..., 0], self.rho) ** 2
        return out

    def derivatives(self, x):
        x = np.asarray(x, dtype=float)
        r = x[..., 0]
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 1, 1] = 2.0 * P.polyval(r, self.rho) * P.polyval(r, self.drho)
        return out


class TrigPerturbation:
    """Symmetric trigonometric polynomial delta g, optionally cut off by a bump."""

    def __init__(self, freqs, cos_coef, sin_coef, radius, bump=None):
        self.freqs = np.asarray(freqs, dtype=float)  # (F, n)
        self.cos_coef = np.asarray(cos_coef, dtype=float)  # (n, n, F)
        self.sin_coef = np.asarray(sin_coef, dtype=float)
        self.radius = float(radius)
        self.bump = bump  # (center, bump_radius) or None

    def _phases(self, x):
        return x @ self.freqs.T / self.radius

    def _bump(self, x):
        center, rb = self.bump
        s = np.sum((x - center) ** 2, axis=-1) / rb ** 2
        inside = s < 1.0
        safe = np.where(inside, s, 0.0)
        psi = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)
        dpsi_ds = np.where(inside, -psi / (1.0 - safe) ** 2, 0.0)
        grad = dpsi_ds[..., None] * 2.0 * (x - center) / rb ** 2
        return psi, grad

    def _trig(self, x):
        ph = self._phases(x)
        dg = np.einsum("...f,ijf->...ij", np.cos(ph), self.cos_coef)
        return dg + np.einsum("...f,ijf->...ij", np.sin(ph), self.sin_coef)

    def values(self, x):
        x = np.asarray(x, dtype=float)
        dg = self._trig(x)
        if self.bump is not None:
            psi, _ = self._bump(x)
            dg = dg * psi[..., None, None]
        return dg

    def derivatives(self, x):
        x = np.asarray(x, dtype=float)
        ph = self._phases(x)
        # d/dx^k cos(k.x/R) = -sin(k.x/R) k_k / R
        wk = self.freqs / self.radius
        out = np.einsum("...f,fk,ijf->...kij", -np.sin(ph), wk, self.cos_coef)
        out = out + np.einsum("...f,fk,ijf->...kij", np.cos(ph), wk, self.sin_coef)
        if self.bump is not None:
            psi, grad = self._bump(x)
            out = out * psi[..., None, None, None] + grad[..., :, None, None] * self._trig(x)[..., None, :, :]
        return out


class SumSource:
    def __init__(self, base, extra):
        self.base = base
        self.extra = extra

    def values(self, x):
        return self.base.values(x) + self.extra.values(x)

    def derivatives(self, x):
        return self.base.derivatives(x) + self.extra.derivatives(x)


# Domain types -------------------------------------------------------------


@dataclass(frozen=True)
class MetricField:
    """A smooth metric on the disc |x| < domain_radius."""

    dim: int
    signature: Tuple[int, ...]
    source: Any = field(repr=False)
    deriv_mode: str = "analytic"
    domain_radius: float = 1.0
    label: str = ""
    params: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def fd_step(self) -> float:
        return FD_STEP_FACTOR * self.domain_radius

    @property
    def is_indefinite(self) -> bool:
        return len(set(self.signature)) > 1

    @property
    def frame_signature(self) -> Tuple[int, ...]:
        return tuple(sorted(self.signature))

    def coefficients(self, x) -> np.ndarray:
        """g_ij at x without the domain check (batched)."""
        return self.source.values(x)

    def derivatives(self, x) -> np.ndarray:
        """d_k g_ij at x as [..., k, i, j] without the domain check (batched)."""
        if self.deriv_mode == "analytic":
            return self.source.derivatives(x)
        return finite_difference(self.coefficients, x, self.fd_step)


@dataclass(frozen=True)
class PerturbationSpec:
    amplitude: float
    frequency_cutoff: int = 3
    seed: int = 0
    support: Optional[Tuple[Tuple[float, ...], float]] = None  # None = global

    def c2_bound(self, domain_radius: float = 1.0) -> float:
        return self.amplitude * (1.0 + self.frequency_cutoff / domain_radius) ** 2


def finite_difference(fn, x, h: float) -> np.ndarray:
    """4th-order central differences of fn at x, stacked on a new axis before the value axes."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    parts = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        parts.append((-fn(x + 2 * e) + 8 * fn(x + e) - 8 * fn(x - e) + fn(x - 2 * e)) / (12 * h))
    base_ndim = x.ndim - 1
    return np.stack(parts, axis=base_ndim)


# Operations ---------------------------------------------------------------


def _check_domain(m: MetricField, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (m.dim,):
        raise ValueError(f"expected a point of dimension {m.dim}, got shape {x.shape}")
    if np.linalg.norm(x) >= m.domain_radius:
        raise OutOfDomain(
            f"point {x.tolist()} outside disc of radius {m.domain_radius}",
            {"point": x.tolist(), "domain_radius": m.domain_radius},
        )
    return x


def eval_metric(m: MetricField, x) -> np.ndarray:
    """g_ij(x), symmetrized exactly."""
    x = _check_domain(m, x)
    g = m.coefficients(x)
    return 0.5 * (g + g.T)


def _christoffel_from(g, dg) -> np.ndarray:
    # T[i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
    t = dg + np.swapaxes(dg, -3, -2) - np.moveaxis(dg, -3, -1)
    ginv = np.linalg.inv(g)
    gamma = 0.5 * np.einsum("...kl,...ijl->...kij", ginv, t)
    return 0.5 * (gamma + np.swapaxes(gamma, -1, -2))


def christoffel_unchecked(m: MetricField, x) -> np.ndarray:
    """Gamma^k_ij as [..., k, i, j]; no domain or determinant checks (hot path)."""
    return _christoffel_from(m.coefficients(x), m.derivatives(x))


def christoffel(m: MetricField, x) -> np.ndarray:
    x = _check_domain(m, x)
    g = m.coefficients(x)
    if abs(np.linalg.det(g)) < DET_MARGIN:
        raise SingularMetric(f"|det g| below {DET_MARGIN} at {x.tolist()}", {"point": x.tolist()})
    return _christoffel_from(g, m.derivatives(x))


def christoffel_derivatives(m: MetricField, x) -> np.ndarray:
    """d_m Gamma^k_ij as [m, k, i, j] by 4th-order central differences."""
    x = np.asarray(x, dtype=float)
    return finite_difference(lambda y: christoffel_unchecked(m, y), x, m.fd_step)


def riemann(m: MetricField, x) -> np.ndarray:
    """R^r_{s mu nu} with [nabla_mu, nabla_nu] V^r = R^r_{s mu nu} V^s, as [r, s, mu, nu]."""
    x = _check_domain(m, x)
    gam = christoffel_unchecked(m, x)
    dgam = christoffel_derivatives(m, x)
    term = np.einsum("mrns->rsmn", dgam) - np.einsum("nrms->rsmn", dgam)
    term = term + np.einsum("rml,lns->rsmn", gam, gam) - np.einsum("rnl,lms->rsmn", gam, gam)
    return term


def lowered_riemann(m: MetricField, x) -> np.ndarray:
    """R_{r s mu nu} = g_{r a} R^a_{s mu nu}."""
    return np.einsum("ra,asmn->rsmn", eval_metric(m, x), riemann(m, x))


def gaussian_curvature(m: MetricField, x) -> float:
    if m.dim != 2:
        raise ValueError("Gaussian curvature is defined here for n = 2 only")
    g = eval_metric(m, x)
    return float(lowered_riemann(m, x)[0, 1, 0, 1] / np.linalg.det(g))


def orthonormal_frame(m: MetricField, x) -> np.ndarray:
    """E with E^T g(x) E = diag(sorted signature); columns are the frame vectors."""
    g = eval_metric(m, x)
    evals, evecs = linalg.eigh(g)
    if np.min(np.abs(evals)) < DET_MARGIN:
        raise SingularMetric(f"metric nearly degenerate at {np.asarray(x).tolist()}")
    # eigh sorts ascending, so negative directions come first as in the sorted signature
    return evecs / np.sqrt(np.abs(evals))


def certify_nondegenerate(m: MetricField, grid: Optional[int] = None) -> Dict[str, float]:
    """Scan a grid over the disc for |det g| >= margin and the declared signature."""
    if grid is None:
        grid = CERTIFICATE_GRID if m.dim <= 2 else max(8, int(CERTIFICATE_GRID ** (2.0 / m.dim)))
    axis = np.linspace(-m.domain_radius, m.domain_radius, grid)
    mesh = np.stack(np.meshgrid(*([axis] * m.dim), indexing="ij"), axis=-1).reshape(-1, m.dim)
    mesh = mesh[np.linalg.norm(mesh, axis=1) < m.domain_radius]
    g = m.coefficients(mesh)
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    dets = np.abs(np.linalg.det(g))
    evals = np.linalg.eigvalsh(g)
    negatives = np.sum(evals < 0, axis=-1)
    expected = sum(1 for s in m.signature if s < 0)
    min_det = float(np.min(dets))
    if min_det < DET_MARGIN:
        raise DegenerateResult(
            f"metric '{m.label}' has |det g| = {min_det:.3e} below margin {DET_MARGIN}",
            {"min_det": min_det},
        )
    if np.any(negatives != expected):
        raise DegenerateResult(
            f"metric '{m.label}' changes signature on the sample grid",
            {"expected_negative": expected},
        )
    return {"min_det": min_det, "points": int(len(mesh))}


def _frequency_vectors(n: int, cutoff: int) -> np.ndarray:
    grids = np.stack(np.meshgrid(*([np.arange(-cutoff, cutoff + 1)] * n), indexing="ij"), axis=-1)
    freqs = grids.reshape(-1, n)
    keep = []
    for k in freqs:
        nonzero = k[k != 0]
        if len(nonzero) and nonzero[0] > 0:
            keep.append(k)
    return np.array(keep, dtype=float).reshape(-1, n)


def make_perturbation(n: int, spec: PerturbationSpec, domain_radius: float) -> TrigPerturbation:
    """Seeded trigonometric polynomial with sup |delta g_ij| <= amplitude."""
    rng = np.random.default_rng(spec.seed)
    freqs = _frequency_vectors(n, spec.frequency_cutoff)
    nf = len(freqs)
    cos_coef = np.zeros((n, n, nf))
    sin_coef = np.zeros((n, n, nf))
    for i in range(n):
        for j in range(i, n):
            a = rng.uniform(-1.0, 1.0, nf)
            b = rng.uniform(-1.0, 1.0, nf)
            total = np.sum(np.abs(a)) + np.sum(np.abs(b))
            scale = spec.amplitude / total if total > 0 else 0.0
            cos_coef[i, j] = cos_coef[j, i] = a * scale
            sin_coef[i, j] = sin_coef[j, i] = b * scale
    bump = None
    if spec.support is not None:
        center, rb = spec.support
        bump = (np.asarray(center, dtype=float), float(rb))
    return TrigPerturbation(freqs, cos_coef, sin_coef, domain_radius, bump)


def perturb(m: MetricField, spec: PerturbationSpec) -> MetricField:
    """m + delta g, delta g a seeded trigonometric polynomial."""
    if spec.amplitude < 0:
        raise ValueError("perturbation amplitude must be non-negative")
    delta = make_perturbation(m.dim, spec, m.domain_radius)
    perturbed = MetricField(
        dim=m.dim,
        signature=m.signature,
        source=SumSource(m.source, delta),
        deriv_mode=m.deriv_mode,
        domain_radius=m.domain_radius,
        label=f"{m.label}+perturb(a={spec.amplitude:g},c={spec.frequency_cutoff},seed={spec.seed})",
        params={**m.params, "perturbation": {
            "amplitude": spec.amplitude,
            "frequency_cutoff": spec.frequency_cutoff,
            "seed": spec.seed,
            "support": None if spec.support is None else [list(spec.support[0]), spec.support[1]],
        }},
    )
    certify_nondegenerate(perturbed)
    logger.debug(f"Perturbed '{m.label}' with amplitude {spec.amplitude:g}, seed {spec.seed}")
    return perturbed


# Catalog ------------------------------------------------------------------

CATALOG_DESCRIPTIONS: Dict[str, str] = {
    "flat": "g = identity (n >= 2)",
    "lorentz_flat": "g = diag(-1, 1, ..., 1)",
    "sphere_cap": "g = 4 a^4 / (a^2 + |x|^2)^2 * identity (round sphere, stereographic chart)",
    "liouville": "g = (f(x1) + h(x2)) (dx1^2 + dx2^2), n = 2",
    "revolution": "g = dr^2 + rho(r)^2 dtheta^2 in the chart (r, theta), n = 2",
    "random_analytic": "g = identity + seeded trigonometric perturbation",
}

CATALOG_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "flat": {"n": 2},
    "lorentz_flat": {"n": 2},
    "sphere_cap": {"n": 2, "sphere_radius": 1.0},
    "liouville": {"f": [1.0, 0.0, 1.0], "h": [1.0, 0.0, 0.0, 0.0, 1.0]},
    "revolution": {"rho": [1.0, 0.0, 0.25]},
    "random_analytic": {"n": 2, "amplitude": 0.05, "frequency_cutoff": 3, "seed": 0},
}


def catalog(name: str, domain_radius: float = 1.0, deriv_mode: str = "analytic", **params) -> MetricField:
    """Build a catalog metric by name; unknown parameters are rejected."""
    if name not in CATALOG_DEFAULTS:
        raise UnknownMetric(
            f"Unknown metric '{name}'. Must be one of: {', '.join(CATALOG_DEFAULTS)}",
            {"name": name},
        )
    merged = {**CATALOG_DEFAULTS[name], **params}
    unknown = set(merged) - set(CATALOG_DEFAULTS[name])
    if unknown:
        raise UnknownMetric(
            f"Metric '{name}' does not take parameters: {', '.join(sorted(unknown))}",
            {"name": name, "parameters": sorted(unknown)},
        )
    if deriv_mode not in ("analytic", "finite-difference"):
        raise ConfigError(f"deriv_mode must be 'analytic' or 'finite-difference', got {deriv_mode!r}")

    n = int(merged.get("n", 2))
    if n < 2:
        raise ConfigError("metrics need dimension n >= 2", {"name": name, "n": n})
    signature: List[int] = [1] * n
    if name == "flat":
        source = ConstantSource(np.eye(n))
    elif name == "lorentz_flat":
        signature = [-1] + [1] * (n - 1)
        source = ConstantSource(np.diag(signature).astype(float))
    elif name == "sphere_cap":
        source = ConformalSphereSource(n, merged["sphere_radius"])
    elif name == "liouville":
        n = 2
        signature = [1, 1]
        source = LiouvilleSource(merged["f"], merged["h"])
    elif name == "revolution":
        n = 2
        signature = [1, 1]
        source = RevolutionSource(merged["rho"])
    else:
        base = MetricField(n, tuple(signature), ConstantSource(np.eye(n)), deriv_mode, domain_radius, "flat")
        spec = PerturbationSpec(merged["amplitude"], int(merged["frequency_cutoff"]), int(merged["seed"]))
        metric = perturb(base, spec)
        return MetricField(
            dim=n,
            signature=tuple(signature),
            source=metric.source,
            deriv_mode=deriv_mode,
            domain_radius=domain_radius,
            label="random_analytic",
            params=merged,
        )

    metric = MetricField(
        dim=n,
        signature=tuple(signature),
        source=source,
        deriv_mode=deriv_mode,
        domain_radius=float(domain_radius),
        label=name,
        params=merged,
    )
    certify_nondegenerate(metric)
    return metric


def list_catalog() -> List[Dict[str, Any]]:
    """Catalog entries with their closed forms and default parameters."""
    return [
        {"name": name, "description": CATALOG_DESCRIPTIONS[name], "defaults": dict(CATALOG_DEFAULTS[name])}
        for name in CATALOG_DEFAULTS
    ]
