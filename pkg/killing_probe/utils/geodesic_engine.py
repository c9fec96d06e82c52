"""
Geodesic integration and two-point shooting
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import solve_ivp

from killing_probe.config import DEFAULT_TOLERANCES, IVP_SAMPLES, THREADS, Tolerances
from killing_probe.utils.errors import (
    KillingProbeError,
    LeftDomain,
    LightLike,
    NoConvergence,
    StepFailure,
)
from killing_probe.utils.metric_model import MetricField, christoffel_unchecked, eval_metric

logger = logging.getLogger(__name__)

# Jacobian columns are integrated at this looser relative tolerance
JACOBIAN_RTOL = 1e-9
JACOBIAN_STEP = 1e-6
# polishing stops once the residual is this far below bvp_tol
POLISH_FLOOR = 1e-4


@dataclass(frozen=True)
class GeodesicSegment:
    """A solved geodesic on [0, t_end] with its sampled trajectory."""

    start: np.ndarray
    end: np.ndarray
    v_start: np.ndarray
    v_end: np.ndarray
    energy: float
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    bvp_residual: float = 0.0
    energy_drift: float = 0.0
    iterations: int = 0

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def samples(self) -> List[Tuple[float, np.ndarray, np.ndarray]]:
        return [(float(t), x, v) for t, x, v in zip(self.t, self.x, self.v)]

    def reversed(self) -> "GeodesicSegment":
        """The same curve traversed from end to start."""
        return replace(
            self,
            start=self.end,
            end=self.start,
            v_start=-self.v_end,
            v_end=-self.v_start,
            t=self.t_end - self.t[::-1],
            x=self.x[::-1],
            v=-self.v[::-1],
        )


def _geodesic_rhs(m: MetricField):
    n = m.dim

    def rhs(t, y):
        x, v = y[:n], y[n:]
        gamma = christoffel_unchecked(m, x)
        return np.concatenate([v, -np.einsum("kij,i,j->k", gamma, v, v)])

    return rhs


def _exit_event(m: MetricField):
    n = m.dim

    def event(t, y):
        return np.linalg.norm(y[:n]) - m.domain_radius

    event.terminal = True
    event.direction = 1
    return event


def _run(m: MetricField, x0, v0, t_end: float, rtol: float, t_eval=None):
    y0 = np.concatenate([np.asarray(x0, dtype=float), np.asarray(v0, dtype=float)])
    res = solve_ivp(
        _geodesic_rhs(m),
        (0.0, t_end),
        y0,
        method="RK45",
        rtol=rtol,
        atol=1e-2 * rtol,
        t_eval=t_eval,
        events=[_exit_event(m)],
    )
    if res.status == 1:
        t_exit = float(res.t_events[0][0])
        raise LeftDomain(
            f"geodesic from {np.asarray(x0).tolist()} left the disc at t={t_exit:.6g}",
            {"x0": np.asarray(x0).tolist(), "v0": np.asarray(v0).tolist(), "t_exit": t_exit},
        )
    if res.status != 0:
        raise StepFailure(f"integrator failed: {res.message}", {"x0": np.asarray(x0).tolist()})
    return res


def integrate_ivp(
    m: MetricField,
    x0,
    v0,
    t_end: float,
    tol: Tolerances = DEFAULT_TOLERANCES,
    samples: int = IVP_SAMPLES,
) -> GeodesicSegment:
    """Solve x'' + Gamma(x', x') = 0 from (x0, v0) up to t_end."""
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    g0 = eval_metric(m, x0)
    if not np.any(v0):
        raise ValueError("initial velocity must be nonzero")

    t_eval = np.linspace(0.0, t_end, max(samples, 2))
    res = _run(m, x0, v0, t_end, tol.ivp_tol, t_eval=t_eval)
    n = m.dim
    xs = res.y[:n].T
    vs = res.y[n:].T

    energy = float(v0 @ g0 @ v0)
    g = m.coefficients(xs)
    energies = np.einsum("si,sij,sj->s", vs, g, vs)
    drift = float(np.max(np.abs(energies - energy)))
    if drift > tol.energy_drift_tol * (1.0 + abs(energy)):
        logger.warning(f"Energy drift {drift:.3e} above tolerance on geodesic from {x0.tolist()}")

    return GeodesicSegment(
        start=x0,
        end=xs[-1].copy(),
        v_start=v0,
        v_end=vs[-1].copy(),
        energy=energy,
        t=res.t,
        x=xs,
        v=vs,
        energy_drift=drift,
    )


def _endpoint(m: MetricField, x0, v0, rtol: float) -> np.ndarray:
    res = _run(m, x0, v0, 1.0, rtol)
    return res.y[: m.dim, -1]


def _jacobian(m: MetricField, x0, v0, step: float) -> np.ndarray:
    """Forward-difference Jacobian of the endpoint map at v0."""
    n = m.dim
    base = _endpoint(m, x0, v0, JACOBIAN_RTOL)
    jac = np.empty((n, n))
    for k in range(n):
        dv = np.zeros(n)
        dv[k] = step
        jac[:, k] = (_endpoint(m, x0, v0 + dv, JACOBIAN_RTOL) - base) / step
    return jac


def _shooting_jacobian(m: MetricField, xA, v, where) -> np.ndarray:
    step = JACOBIAN_STEP * max(1.0, float(np.linalg.norm(v)))
    try:
        return _jacobian(m, xA, v, step)
    except (LeftDomain, StepFailure) as e:
        raise NoConvergence(f"Jacobian evaluation failed: {e}", where)


def _damped_step(m: MetricField, xA, xB, v, jac, residual, err, tol: Tolerances, halvings: int):
    """Newton step with step halving; None when no trial lowers the residual."""
    try:
        dv = np.linalg.solve(jac, -residual)
    except np.linalg.LinAlgError:
        return None
    lam = 1.0
    for _ in range(halvings + 1):
        trial = v + lam * dv
        try:
            trial_residual = _endpoint(m, xA, trial, tol.ivp_tol) - xB
        except (LeftDomain, StepFailure):
            lam *= 0.5
            continue
        trial_err = float(np.linalg.norm(trial_residual))
        if trial_err < err:
            return trial, trial_residual, trial_err
        lam *= 0.5
    return None


def solve_bvp(
    m: MetricField,
    xA,
    xB,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> GeodesicSegment:
    """Geodesic on [0, 1] from xA to xB by damped Newton shooting on the initial velocity."""
    xA = np.asarray(xA, dtype=float)
    xB = np.asarray(xB, dtype=float)
    eval_metric(m, xA)
    eval_metric(m, xB)
    if np.allclose(xA, xB, rtol=0.0, atol=1e-14):
        raise ValueError("boundary points must be distinct")

    v = xB - xA
    where = {"xA": xA.tolist(), "xB": xB.tolist()}
    try:
        residual = _endpoint(m, xA, v, tol.ivp_tol) - xB
    except (LeftDomain, StepFailure) as e:
        raise NoConvergence(f"initial shot failed: {e}", where)
    err = float(np.linalg.norm(residual))

    iterations = 0
    jac = None
    while err > tol.bvp_tol:
        if iterations >= tol.max_iter:
            logger.error(f"Shooting from {xA.tolist()} to {xB.tolist()} did not converge (residual {err:.3e})")
            raise NoConvergence(
                f"shooting did not converge after {tol.max_iter} iterations (residual {err:.3e})",
                {**where, "residual": err},
            )
        jac = _shooting_jacobian(m, xA, v, where)
        step = _damped_step(m, xA, xB, v, jac, residual, err, tol, tol.max_halvings)
        if step is None:
            raise NoConvergence(f"damped Newton stalled at residual {err:.3e}", {**where, "residual": err})
        v, residual, err = step
        iterations += 1

    for _ in range(tol.polish_steps):
        if err <= POLISH_FLOOR * tol.bvp_tol:
            break
        if jac is None:
            jac = _shooting_jacobian(m, xA, v, where)
        step = _damped_step(m, xA, xB, v, jac, residual, err, tol, 0)
        if step is None:
            break
        v, residual, err = step

    segment = integrate_ivp(m, xA, v, 1.0, tol)
    speed2 = float(v @ v)
    if m.is_indefinite and abs(segment.energy) < tol.light_tol * speed2:
        raise LightLike(
            f"geodesic from {xA.tolist()} to {xB.tolist()} is light-like (energy {segment.energy:.3e})",
            {"xA": xA.tolist(), "xB": xB.tolist(), "energy": segment.energy},
        )
    return replace(
        segment,
        bvp_residual=float(np.linalg.norm(segment.end - xB)),
        iterations=iterations,
    )


def _connect_one(m, xa, xb, tol):
    try:
        return solve_bvp(m, xa, xb, tol), None
    except (KillingProbeError, ValueError) as e:
        return None, e


def batch_connect(
    m: MetricField,
    sources: Sequence,
    targets: Sequence,
    tol: Tolerances = DEFAULT_TOLERANCES,
    n_jobs: Optional[int] = None,
) -> List[List[GeodesicSegment]]:
    """Entry [i][j] is solve_bvp(m, sources[i], targets[j]); solves may run in parallel."""
    pairs = [(i, j) for i in range(len(sources)) for j in range(len(targets))]
    workers = THREADS if n_jobs is None else n_jobs
    results = Parallel(n_jobs=workers, backend="loky")(
        delayed(_connect_one)(m, sources[i], targets[j], tol) for i, j in pairs
    )

    grid: List[List[GeodesicSegment]] = [[None] * len(targets) for _ in sources]
    for (i, j), (segment, error) in zip(pairs, results):
        if error is not None:
            if isinstance(error, KillingProbeError):
                raise type(error)(error.message, {**error.details, "pair": [i, j]})
            raise ValueError(f"pair ({i}, {j}): {error}")
        grid[i][j] = segment
    return grid
