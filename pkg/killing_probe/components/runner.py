"""
Run orchestration: analyze, sweep and crossvalidate
"""

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from killing_probe import __version__
from killing_probe.config import (
    CERTIFY_DRIFT,
    CONSERVATION_TRIALS,
    DEFAULT_TOLERANCES,
    FIT_DEGREE,
    QUERY_GRID,
    REPORT_SCHEMA_VERSION,
    TOOL_NAME,
    Tolerances,
)
from killing_probe.components.endpoint_obstruction import (
    ObstructionReport,
    PointConfiguration,
    analyze_obstruction,
    reconstruct_fields,
    trivial_vector,
)
from killing_probe.components.oracle_suite import (
    KillingAnsatz,
    collocation_kernel_dim,
    conservation_drifts,
    holonomy_kernel_dim_d1,
    rank_formula,
)
from killing_probe.utils.errors import ConfigError, KillingProbeError, to_error_object
from killing_probe.utils.metric_model import MetricField, PerturbationSpec, catalog, perturb
from killing_probe.utils.sym_poly import SymPolySpace
from killing_probe.utils.validators import MetricSpecModel, PerturbationModel, RunConfig, require_sweep

logger = logging.getLogger(__name__)

INDETERMINATE = "INDETERMINATE"
TRIVIAL_ONLY = "TRIVIAL_ONLY"
QUERY_EXTENT = 0.55  # query grid spans [-QUERY_EXTENT, QUERY_EXTENT] * R per axis
AUDIT_START_RADIUS = 0.3
AUDIT_SPEED = 0.2
COINCIDENT_TOL = 1e-6  # times domain_radius


@dataclass
class RunReport:
    command: str
    config: Dict[str, Any]
    metric: Dict[str, Any]
    cells: List[Dict[str, Any]]
    verdicts: Dict[str, str]
    rank_formula: Dict[str, Dict[str, int]]
    amplitude: Optional[float] = None
    crossvalidation: Optional[List[Dict[str, Any]]] = None
    timings: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "tool": TOOL_NAME,
            "version": __version__,
            "schema_version": REPORT_SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "metric": self.metric,
            "rank_formula": self.rank_formula,
            "cells": self.cells,
            "verdicts": self.verdicts,
        }
        if self.amplitude is not None:
            out["amplitude"] = self.amplitude
        if self.crossvalidation is not None:
            out["crossvalidation"] = self.crossvalidation
        out["timings"] = self.timings
        return out


def tolerances_for(config: RunConfig) -> Tolerances:
    return DEFAULT_TOLERANCES.with_overrides(**config.tolerances.model_dump())


def _perturbation_spec(model: PerturbationModel) -> PerturbationSpec:
    support = None
    if model.support is not None:
        support = (tuple(model.support.center), model.support.radius)
    return PerturbationSpec(model.amplitude, model.frequency_cutoff, model.seed, support)


def build_metric(spec: MetricSpecModel) -> MetricField:
    """Catalog metric with the configured perturbations applied in order."""
    metric = catalog(spec.name, spec.domain_radius, spec.deriv_mode, **spec.params)
    if spec.signature is not None and tuple(spec.signature) != metric.signature:
        raise ConfigError(
            f"declared signature {spec.signature} does not match '{spec.name}' ({list(metric.signature)})",
            {"declared": spec.signature, "catalog": list(metric.signature)},
        )
    for model in spec.perturbations:
        if model.amplitude > 0:
            metric = perturb(metric, _perturbation_spec(model))
    return metric


def _obstruction_dict(report: ObstructionReport) -> Dict[str, Any]:
    return {
        "raw_kernel_dim": report.raw_kernel_dim,
        "nontrivial_kernel_dim": report.nontrivial_kernel_dim,
        "gap_ratio": report.gap_ratio,
        "singular_values": report.singular_values,
        "kernel_basis": report.kernel_basis,
        "matrix_norm": report.matrix_norm,
        "trivial_residual": report.trivial_residual,
        "deflation_gap": report.deflation_gap,
        "max_condition": report.max_condition,
        "max_bvp_residual": report.max_bvp_residual,
        "attempts": report.attempts,
        "kappa": report.kappa,
        "scheme": report.scheme,
        "config_seed": report.config_seed,
        "tolerances": report.tolerances,
    }


def cell_verdict(nontrivial: Optional[int], oracle_dims: Dict[str, Optional[int]]) -> str:
    """DIM=k / TRIVIAL_ONLY when the obstruction is determinate and every enabled oracle agrees."""
    if nontrivial is None:
        return INDETERMINATE
    if any(value != nontrivial for value in oracle_dims.values()):
        return INDETERMINATE
    return TRIVIAL_ONLY if nontrivial == 0 else f"DIM={nontrivial}"


def degree_verdict(cell_verdicts: List[str]) -> str:
    """Verdict held by a strict majority of the cells, else INDETERMINATE."""
    if not cell_verdicts:
        return INDETERMINATE
    verdict, count = Counter(cell_verdicts).most_common(1)[0]
    if verdict == INDETERMINATE or 2 * count <= len(cell_verdicts):
        return INDETERMINATE
    return verdict


def _run_oracles(metric: MetricField, space: SymPolySpace, seed: int, config: RunConfig, tol: Tolerances):
    oracles: Dict[str, Any] = {}
    dims: Dict[str, Optional[int]] = {}
    toggles = config.oracles
    if toggles.collocation:
        x_degree = toggles.x_degree if toggles.x_degree is not None else space.d + 2
        result = collocation_kernel_dim(metric, space, x_degree, seed=seed, form=toggles.collocation_form, tol=tol)
        oracles["collocation"] = {
            "dimension": result.dimension,
            "nontrivial_dimension": result.nontrivial_dimension,
            "gap_ratio": result.gap_ratio,
            "x_degree": result.x_degree,
            "form": result.form,
            "unknowns": result.unknowns,
            "samples": result.samples,
            "contains_trivial": result.contains_trivial,
        }
        dims["collocation"] = result.nontrivial_dimension
    if toggles.holonomy and space.d == 1:
        spectrum = holonomy_kernel_dim_d1(metric, toggles.holonomy_loops, seed=seed, tol=tol)
        oracles["holonomy"] = {
            "dimension": spectrum.dimension,
            "gap_ratio": spectrum.gap_ratio,
            "loops": toggles.holonomy_loops,
            "singular_values": spectrum.singular_values,
        }
        dims["holonomy"] = spectrum.dimension
    return oracles, dims


def run_cell(metric: MetricField, d: int, seed: int, config: RunConfig, tol: Tolerances,
             n_jobs: Optional[int] = None):
    """One (d, seed) cell: obstruction, deflation, oracles, verdict. Returns (cell, cfg, report)."""
    space = SymPolySpace(metric.dim, d)
    started = time.perf_counter()
    cfg, report = analyze_obstruction(metric, space, config.kappa, seed, tol, config.scheme, n_jobs)
    obstruction_time = time.perf_counter() - started

    started = time.perf_counter()
    oracles, dims = _run_oracles(metric, space, seed, config, tol)
    oracle_time = time.perf_counter() - started

    verdict = cell_verdict(report.nontrivial_kernel_dim, dims)
    cell = {
        "d": d,
        "seed": seed,
        "N": space.N,
        "obstruction": _obstruction_dict(report),
        "oracles": oracles,
        "verdict": verdict,
        "timings": {"obstruction": obstruction_time, "oracles": oracle_time},
    }
    if verdict == INDETERMINATE and report.nontrivial_kernel_dim is not None:
        cell["disagreement"] = {"obstruction": report.nontrivial_kernel_dim, **dims}
    return cell, cfg, report


def _failed_cell(label: str, dim: int, d: int, seed: int, error: KillingProbeError) -> Dict[str, Any]:
    logger.error(f"Cell d={d}, seed={seed} on '{label}' failed: {error.kind}: {error.message}")
    return {
        "d": d,
        "seed": seed,
        "N": SymPolySpace(dim, d).N,
        "obstruction": None,
        "oracles": {},
        "verdict": INDETERMINATE,
        "error": to_error_object(error),
        "timings": {},
    }


def _metric_dict(metric: MetricField) -> Dict[str, Any]:
    return {
        "label": metric.label,
        "dim": metric.dim,
        "signature": list(metric.signature),
        "deriv_mode": metric.deriv_mode,
        "domain_radius": metric.domain_radius,
        "params": metric.params,
    }


def _rank_formulas(n: int, degrees: List[int]) -> Dict[str, Dict[str, int]]:
    out = {}
    for d in degrees:
        rank, jet_order = rank_formula(n, d)
        out[str(d)] = {"rank": rank, "jet_order": jet_order}
    return out


def _verdicts(cells: List[Dict[str, Any]], degrees: List[int]) -> Dict[str, str]:
    return {str(d): degree_verdict([c["verdict"] for c in cells if c["d"] == d]) for d in degrees}


def _analyze_metric(metric: MetricField, config: RunConfig, command: str, keep_going: bool,
                    n_jobs: Optional[int] = None, amplitude: Optional[float] = None):
    tol = tolerances_for(config)
    started = time.perf_counter()
    cells, runs = [], []
    for d in config.degrees:
        for seed in config.seeds:
            logger.info(f"Running cell d={d}, seed={seed} on '{metric.label}'")
            try:
                cell, cfg, report = run_cell(metric, d, seed, config, tol, n_jobs)
            except KillingProbeError as e:
                if not keep_going:
                    logger.error(f"Analysis of '{metric.label}' failed: {e.kind}: {e.message}")
                    raise
                cells.append(_failed_cell(metric.label, metric.dim, d, seed, e))
                continue
            cells.append(cell)
            runs.append((cell, cfg, report))

    run_report = RunReport(
        command=command,
        config=config.model_dump(),
        metric=_metric_dict(metric),
        cells=cells,
        verdicts=_verdicts(cells, config.degrees),
        rank_formula=_rank_formulas(metric.dim, config.degrees),
        amplitude=amplitude,
        timings={"total": time.perf_counter() - started},
    )
    return run_report, runs


def run_analyze(config: RunConfig, n_jobs: Optional[int] = None) -> RunReport:
    """Obstruction, deflation and enabled oracles for every (d, seed); hard failures propagate."""
    metric = build_metric(config.metric)
    report, _ = _analyze_metric(metric, config, "analyze", keep_going=False, n_jobs=n_jobs)
    logger.info(f"Analysis complete: {report.verdicts}")
    return report


def run_sweep(config: RunConfig, n_jobs: Optional[int] = None) -> List[RunReport]:
    """One report per amplitude of the sweep grid; failing cells are recorded and skipped."""
    amplitudes = require_sweep(config)
    sweep = config.sweep
    base = build_metric(config.metric)
    reports = []
    for amplitude in amplitudes:
        logger.info(f"Sweep amplitude {amplitude:g}")
        try:
            metric = base
            if amplitude > 0:
                metric = perturb(base, PerturbationSpec(amplitude, sweep.frequency_cutoff, sweep.seed))
        except KillingProbeError as e:
            logger.error(f"Sweep amplitude {amplitude:g} skipped: {e.kind}: {e.message}")
            cells = [
                _failed_cell(base.label, base.dim, d, seed, e)
                for d in config.degrees
                for seed in config.seeds
            ]
            reports.append(RunReport(
                command="sweep",
                config=config.model_dump(),
                metric=_metric_dict(base),
                cells=cells,
                verdicts=_verdicts(cells, config.degrees),
                rank_formula=_rank_formulas(base.dim, config.degrees),
                amplitude=amplitude,
            ))
            continue
        report, _ = _analyze_metric(metric, config, "sweep", keep_going=True, n_jobs=n_jobs, amplitude=amplitude)
        reports.append(report)
    return reports


def query_points(metric: MetricField, grid: int = QUERY_GRID) -> np.ndarray:
    """Regular grid over [-0.55 R, 0.55 R]^n, restricted to the sampling radius."""
    axis = np.linspace(-QUERY_EXTENT, QUERY_EXTENT, grid) * metric.domain_radius
    mesh = np.stack(np.meshgrid(*([axis] * metric.dim), indexing="ij"), axis=-1).reshape(-1, metric.dim)
    return mesh[np.linalg.norm(mesh, axis=1) < 0.8 * metric.domain_radius]


class FittedField:
    """Chart coefficient field x -> (N,) from a least-squares Chebyshev fit."""

    def __init__(self, ansatz: KillingAnsatz, coeffs: np.ndarray):
        self.ansatz = ansatz
        self.coeffs = coeffs  # (B, N)

    def __call__(self, x) -> np.ndarray:
        T, _ = self.ansatz.position_values(np.atleast_2d(x))
        return (T @ self.coeffs)[0]


def fit_fields(metric: MetricField, space: SymPolySpace, points: np.ndarray, values: np.ndarray,
               degree: int = FIT_DEGREE) -> List[FittedField]:
    """Fit every candidate's coefficients (values: (P, k, N)) by Chebyshev polynomials in x."""
    ansatz = KillingAnsatz(space, degree, metric.domain_radius)
    T, _ = ansatz.position_values(points)
    fitted = []
    for j in range(values.shape[1]):
        coeffs, *_ = np.linalg.lstsq(T, values[:, j, :], rcond=None)
        fitted.append(FittedField(ansatz, coeffs))
    return fitted


def crossvalidate_cell(metric: MetricField, cfg: PointConfiguration, report: ObstructionReport,
                       tol: Tolerances, trials: int = CONSERVATION_TRIALS, seed: int = 0) -> Dict[str, Any]:
    """Reconstruct each kernel vector on the query grid, fit it, and audit conservation."""
    space = cfg.space
    entry = {"d": space.d, "seed": report.config_seed, "vectors": [], "status": "ok"}
    if report.nontrivial_kernel_dim is None:
        entry["status"] = "indeterminate"
        return entry
    if report.nontrivial_kernel_dim == 0:
        entry["status"] = "nothing to certify"
        return entry

    basis = report.kernel_basis
    points, values = [], []
    for x in query_points(metric):
        # no geodesic connects a point to itself
        if np.min(np.linalg.norm(cfg.A - x, axis=1)) < COINCIDENT_TOL * metric.domain_radius:
            logger.warning(f"Skipping query point {x.tolist()}: coincides with a point of A")
            continue
        try:
            values.append(reconstruct_fields(basis, cfg, metric, x, tol))
            points.append(x)
        except KillingProbeError as e:
            logger.warning(f"Skipping query point {x.tolist()}: {e.kind}")
    if not points:
        entry["status"] = "no query point could be reconstructed"
        return entry
    entry["query_points"] = len(points)
    fields = fit_fields(metric, space, np.array(points), np.array(values))

    t = trivial_vector(cfg)
    t_norm = np.linalg.norm(t)
    for k, fitted in enumerate(fields):
        drifts = conservation_drifts(
            metric, fitted, space, trials, seed, tol,
            start_radius=AUDIT_START_RADIUS * metric.domain_radius,
            speed=AUDIT_SPEED * metric.domain_radius,
        )
        drift = float(np.max(drifts))
        entry["vectors"].append({
            "index": k,
            "drift": drift,
            "certified": bool(drift < CERTIFY_DRIFT),
            "trivial_overlap": float(abs(basis[k] @ t) / t_norm) if t_norm > 0 else 0.0,
        })
    entry["certified"] = sum(v["certified"] for v in entry["vectors"])
    logger.info(f"Cross-validation d={space.d}: {entry['certified']}/{len(fields)} vectors certified")
    return entry


def run_crossvalidate(config: RunConfig, n_jobs: Optional[int] = None) -> RunReport:
    """Analyze, then certify kernel vectors by reconstruction and conservation audit."""
    metric = build_metric(config.metric)
    tol = tolerances_for(config)
    report, runs = _analyze_metric(metric, config, "crossvalidate", keep_going=False, n_jobs=n_jobs)
    started = time.perf_counter()
    report.crossvalidation = [
        crossvalidate_cell(metric, cfg, obstruction, tol, seed=cell["seed"])
        for cell, cfg, obstruction in runs
    ]
    report.timings["crossvalidation"] = time.perf_counter() - started
    return report
