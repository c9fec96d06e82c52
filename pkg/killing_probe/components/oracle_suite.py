"""
Independent checks on the obstruction kernel: Killing-equation collocation,
conservation audit along geodesics, and d=1 holonomy of the prolongation
connection.
"""

import itertools
import logging
from dataclasses import dataclass
from math import comb, factorial
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.integrate import solve_ivp

from killing_probe.config import (
    CONSERVATION_EPS,
    CONSERVATION_TRIALS,
    DEFAULT_TOLERANCES,
    HOLONOMY_LOOPS,
    HOLONOMY_SIDE_RANGE,
    Tolerances,
)
from killing_probe.components.endpoint_obstruction import KernelSpectrum, kernel_analysis
from killing_probe.utils.errors import LeftDomain, StepFailure
from killing_probe.utils.geodesic_engine import integrate_ivp
from killing_probe.utils.metric_model import (
    MetricField,
    christoffel_unchecked,
    lowered_riemann,
)
from killing_probe.utils.sym_poly import (
    SymPolyElement,
    SymPolySpace,
    veronese,
    veronese_jacobian,
)

logger = logging.getLogger(__name__)

FORMS = ("momentum", "velocity")
HOLONOMY_RTOL = 1e-12
# collocation points stay inside this fraction of the disc
SAMPLE_RADIUS_FACTOR = 0.9
# relative least-squares residual below which H^q counts as found
TRIVIAL_SPAN_TOL = 1e-6


# Rank formula ------------------------------------------------------------


def rank_formula(n: int, d: int) -> Tuple[int, int]:
    """Rank of the prolongation bundle and the jet order d + 1 + rank, exactly."""
    if n < 2 or d < 1:
        raise ValueError("rank formula needs n >= 2 and d >= 1")
    numerator = factorial(n + d - 1) * factorial(n + d)
    denominator = factorial(n - 1) * factorial(n) * factorial(d) * factorial(d + 1)
    rank = numerator // denominator
    return rank, d + 1 + rank


# Collocation -------------------------------------------------------------


@dataclass(frozen=True)
class KillingAnsatz:
    """Coefficients K_alpha(x) as Chebyshev polynomials of total degree <= x_degree in x / R."""

    space: SymPolySpace
    x_degree: int
    domain_radius: float = 1.0

    @property
    def position_basis(self) -> List[Tuple[int, ...]]:
        n = self.space.n
        return [b for b in itertools.product(range(self.x_degree + 1), repeat=n) if sum(b) <= self.x_degree]

    @property
    def unknowns(self) -> int:
        return self.space.N * comb(self.space.n + self.x_degree, self.x_degree)

    def position_values(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """T_beta(x/R) as (S, B) and its x-gradient as (S, B, n)."""
        y = np.atleast_2d(np.asarray(x, dtype=float)) / self.domain_radius
        n = self.space.n
        eye = np.eye(self.x_degree + 1)
        # per-axis T_j(y_k) and T_j'(y_k), shape (S, n, degree+1)
        vals = np.stack([C.chebval(y, e) for e in eye], axis=-1)
        ders = np.stack([C.chebval(y, C.chebder(e)) for e in eye], axis=-1)
        idx = np.array(self.position_basis)  # (B, n)
        factors = vals[:, np.arange(n)[None, :], idx]  # (S, B, n)
        T = np.prod(factors, axis=-1)
        grad = np.empty(T.shape + (n,))
        for k in range(n):
            others = np.prod(np.delete(factors, k, axis=-1), axis=-1)
            grad[..., k] = ders[:, k, idx[:, k]] * others / self.domain_radius
        return T, grad

    def evaluate(self, coeffs, x, w) -> np.ndarray:
        """F(x, w) for coefficient vectors shaped (k, unknowns); returns (k, S)."""
        T, _ = self.position_values(x)
        ver = veronese(self.space, np.atleast_2d(w))
        c = np.asarray(coeffs, dtype=float).reshape(-1, self.space.N, T.shape[1])
        return np.einsum("sa,sb,kab->ks", ver, T, c)


def _phase_velocity(m: MetricField, x, w, form: str):
    """(x', w') of the geodesic flow at samples (x, w)."""
    g = m.coefficients(x)
    if form == "velocity":
        gamma = christoffel_unchecked(m, x)
        return w, -np.einsum("skij,si,sj->sk", gamma, w, w)
    u = np.linalg.solve(g, w[..., None])[..., 0]
    dg = m.derivatives(x)
    return u, 0.5 * np.einsum("si,skij,sj->sk", u, dg, u)


def _hamiltonian(m: MetricField, x, w, form: str) -> np.ndarray:
    g = m.coefficients(x)
    if form == "velocity":
        return 0.5 * np.einsum("si,sij,sj->s", w, g, w)
    u = np.linalg.solve(g, w[..., None])[..., 0]
    return 0.5 * np.einsum("si,si->s", u, w)


def _phase_samples(m: MetricField, count: int, rng: np.random.Generator):
    n = m.dim
    direction = rng.normal(size=(count, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = SAMPLE_RADIUS_FACTOR * m.domain_radius * rng.uniform(size=(count, 1)) ** (1.0 / n)
    return direction * radius, rng.normal(size=(count, n))


@dataclass
class CollocationResult:
    dimension: Optional[int]
    nontrivial_dimension: Optional[int]
    gap_ratio: float
    unknowns: int
    samples: int
    x_degree: int
    form: str
    contains_trivial: Optional[bool] = None

    @property
    def determinate(self) -> bool:
        return self.dimension is not None


def collocation_system(m: MetricField, ansatz: KillingAnsatz, x, w, form: str) -> np.ndarray:
    """Rows d/dt F(x, w) = 0 along the flow, one per sample, normalized."""
    xdot, wdot = _phase_velocity(m, x, w, form)
    T, gradT = ansatz.position_values(x)
    ver = veronese(ansatz.space, w)
    jver = veronese_jacobian(ansatz.space, w)
    along_x = np.einsum("sbk,sk->sb", gradT, xdot)
    along_w = np.einsum("sak,sk->sa", jver, wdot)
    rows = ver[:, :, None] * along_x[:, None, :] + along_w[:, :, None] * T[:, None, :]
    rows = rows.reshape(len(x), -1)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return rows / np.where(norms > 0, norms, 1.0)


def collocation_kernel_dim(
    m: MetricField,
    space: SymPolySpace,
    x_degree: int,
    sample_count: Optional[int] = None,
    gap_min: Optional[float] = None,
    seed: int = 0,
    form: str = "momentum",
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> CollocationResult:
    """Count degree-d integrals whose coefficients are polynomials of degree <= x_degree."""
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}, got {form!r}")
    if space.n != m.dim:
        raise ValueError(f"polynomial space has n={space.n} but metric has dimension {m.dim}")
    ansatz = KillingAnsatz(space, x_degree, m.domain_radius)
    unknowns = ansatz.unknowns
    if sample_count is None:
        sample_count = 4 * unknowns
    if sample_count < 3 * unknowns:
        raise ValueError(f"need at least {3 * unknowns} samples for {unknowns} unknowns")
    gap_min = tol.gap_min if gap_min is None else gap_min

    rng = np.random.default_rng(seed)
    x, w = _phase_samples(m, sample_count, rng)
    rows = collocation_system(m, ansatz, x, w, form)
    spectrum = kernel_analysis(rows, gap_min, tol.abs_floor)
    logger.info(
        f"Collocation for '{m.label}', d={space.d}, m={x_degree} ({form}): "
        f"{unknowns} unknowns, kernel {spectrum.dimension}"
    )

    result = CollocationResult(
        dimension=spectrum.dimension,
        nontrivial_dimension=spectrum.dimension,
        gap_ratio=spectrum.gap_ratio,
        unknowns=unknowns,
        samples=sample_count,
        x_degree=x_degree,
        form=form,
    )
    if spectrum.dimension is None:
        result.nontrivial_dimension = None
    elif space.d % 2 == 0 and spectrum.dimension > 0:
        contains = _spans_trivial(m, ansatz, spectrum.basis, form, rng)
        result.contains_trivial = contains
        result.nontrivial_dimension = spectrum.dimension - int(contains)
    return result


def _spans_trivial(m: MetricField, ansatz: KillingAnsatz, basis, form: str, rng) -> bool:
    """Whether H^q is (numerically) a combination of the recovered integrals."""
    count = max(3 * len(basis), 3 * ansatz.space.N)
    x, w = _phase_samples(m, count, rng)
    values = ansatz.evaluate(basis, x, w).T  # (S, k)
    target = _hamiltonian(m, x, w, form) ** (ansatz.space.d // 2)
    coef, *_ = np.linalg.lstsq(values, target, rcond=None)
    residual = np.linalg.norm(values @ coef - target) / np.linalg.norm(target)
    return bool(residual < TRIVIAL_SPAN_TOL)


# Conservation audit ------------------------------------------------------


def _coefficients_of(value) -> np.ndarray:
    if isinstance(value, SymPolyElement):
        return value.coeffs
    return np.asarray(value, dtype=float)


def conservation_drifts(
    m: MetricField,
    K: Callable[[np.ndarray], Any],
    space: SymPolySpace,
    trials: int = CONSERVATION_TRIALS,
    seed: int = 0,
    tol: Tolerances = DEFAULT_TOLERANCES,
    start_radius: Optional[float] = None,
    speed: Optional[float] = None,
) -> np.ndarray:
    """Per-geodesic max |F(t) - F(0)| / (|F(0)| + eps) with F(t) = K(x(t)) . ver(x'(t)).

    Geodesics start inside `start_radius` (default R/2) with chart speed `speed` (default 0.3R)
    and run for unit time.
    """
    rng = np.random.default_rng(seed)
    radius = 0.5 * m.domain_radius if start_radius is None else start_radius
    speed = 0.3 * m.domain_radius if speed is None else speed
    drifts = []
    for _ in range(trials):
        direction = rng.normal(size=m.dim)
        direction /= np.linalg.norm(direction)
        x0 = direction * radius * rng.uniform() ** (1.0 / m.dim)
        v0 = rng.normal(size=m.dim)
        v0 *= speed / np.linalg.norm(v0)
        seg = integrate_ivp(m, x0, v0, 1.0, tol)
        coeffs = np.array([_coefficients_of(K(x)) for x in seg.x])
        F = np.einsum("sa,sa->s", coeffs, veronese(space, seg.v))
        drifts.append(float(np.max(np.abs(F - F[0])) / (abs(F[0]) + CONSERVATION_EPS)))
    return np.array(drifts)


def conservation_residual(
    m: MetricField,
    K: Callable[[np.ndarray], Any],
    space: SymPolySpace,
    trials: int = CONSERVATION_TRIALS,
    seed: int = 0,
    tol: Tolerances = DEFAULT_TOLERANCES,
    start_radius: Optional[float] = None,
    speed: Optional[float] = None,
) -> float:
    """Max relative drift of K along `trials` seeded geodesics."""
    return float(np.max(conservation_drifts(m, K, space, trials, seed, tol, start_radius, speed)))


# d=1 holonomy ------------------------------------------------------------


def fiber_dimension(n: int) -> int:
    return n * (n + 1) // 2


def _unpack(state: np.ndarray, n: int):
    K = state[:n]
    L = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    L[iu] = state[n:]
    return K, L - L.T


def _pack(K: np.ndarray, L: np.ndarray) -> np.ndarray:
    n = len(K)
    return np.concatenate([K, L[np.triu_indices(n, 1)]])


def prolongation_matrix(m: MetricField, x, u) -> np.ndarray:
    """Generator of transport of (K, L = nabla K) along direction u at x."""
    n = m.dim
    f = fiber_dimension(n)
    gam = christoffel_unchecked(m, x)
    R = lowered_riemann(m, x)
    ginv = np.linalg.inv(m.coefficients(x))
    A = np.empty((f, f))
    for c, e in enumerate(np.eye(f)):
        K, L = _unpack(e, n)
        dK = u @ L + np.einsum("i,kij,k->j", u, gam, K)
        dL = (
            np.einsum("m,rsmn,n->sr", u, R, ginv @ K)
            + np.einsum("m,lms,lr->sr", u, gam, L)
            + np.einsum("m,lmr,sl->sr", u, gam, L)
        )
        A[:, c] = _pack(dK, dL)
    return A


def transport_along(m: MetricField, points: Sequence, rtol: float = HOLONOMY_RTOL) -> np.ndarray:
    """Fiber transport matrix along the polygon through `points` (straight chart edges)."""
    f = fiber_dimension(m.dim)
    total = np.eye(f)
    points = [np.asarray(p, dtype=float) for p in points]
    # corners inside the disc keep every straight edge inside
    for p in points:
        if np.linalg.norm(p) > m.domain_radius:
            raise LeftDomain(
                f"holonomy loop corner {p.tolist()} lies outside the disc of radius {m.domain_radius:g}",
                {"corner": p.tolist(), "domain_radius": m.domain_radius},
            )
    for p, q in zip(points[:-1], points[1:]):
        u = q - p

        def rhs(t, y, p=p, u=u):
            return (prolongation_matrix(m, p + t * u, u) @ y.reshape(f, f)).ravel()

        res = solve_ivp(rhs, (0.0, 1.0), np.eye(f).ravel(), method="RK45", rtol=rtol, atol=1e-2 * rtol)
        if res.status != 0:
            raise StepFailure(f"prolongation transport failed: {res.message}")
        total = res.y[:, -1].reshape(f, f) @ total
    return total


def _rectangle(rng: np.random.Generator, n: int, x0, radius: float, side_range=HOLONOMY_SIDE_RANGE):
    i, j = sorted(rng.choice(n, size=2, replace=False))
    a, b = rng.uniform(*side_range, size=2) * radius * rng.choice([-1.0, 1.0], size=2)
    ei = np.zeros(n)
    ei[i] = a
    ej = np.zeros(n)
    ej[j] = b
    return [x0, x0 + ei, x0 + ei + ej, x0 + ej, x0]


def holonomy_kernel_dim_d1(
    m: MetricField,
    loop_count: int = HOLONOMY_LOOPS,
    seed: int = 0,
    gap_min: Optional[float] = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
    side_range: Tuple[float, float] = HOLONOMY_SIDE_RANGE,
) -> KernelSpectrum:
    """Dimension of the joint fixed space of loop holonomies at the origin (Killing vectors).

    Loops are coordinate rectangles with sides drawn from side_range times the
    domain radius; a loop with a corner outside the disc raises LeftDomain.
    """
    if m.dim < 2:
        raise ValueError("holonomy oracle needs n >= 2")
    gap_min = tol.gap_min if gap_min is None else gap_min
    rng = np.random.default_rng(seed)
    x0 = np.zeros(m.dim)
    f = fiber_dimension(m.dim)
    blocks = []
    for k in range(loop_count):
        corners = _rectangle(rng, m.dim, x0, m.domain_radius, side_range)
        blocks.append(transport_along(m, corners) - np.eye(f))
        logger.debug(f"Holonomy loop {k + 1}/{loop_count} done")
    spectrum = kernel_analysis(np.vstack(blocks), gap_min, tol.abs_floor, scale=1.0)
    logger.info(f"Holonomy for '{m.label}': {loop_count} loops, kernel {spectrum.dimension}")
    return spectrum
