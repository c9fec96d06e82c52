"""End-to-end checks on the catalog metrics with known integrals."""

from __future__ import annotations

import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from killing_probe.components.endpoint_obstruction import (
    analyze_obstruction,
    obstruction_matrix,
    restriction_vector,
    sample_configuration,
)
from killing_probe.components.oracle_suite import collocation_kernel_dim, holonomy_kernel_dim_d1
from killing_probe.components.runner import run_analyze, run_crossvalidate
from killing_probe.utils.metric_model import PerturbationSpec, catalog, eval_metric, perturb
from killing_probe.utils.sym_poly import SymPolySpace
from killing_probe.utils.validators import parse_run_config

from tests.helpers import load_sample_config

pytestmark = pytest.mark.slow

LIOUVILLE_F = [1.0, 0.0, 1.0]
LIOUVILLE_H = [1.0, 0.0, 0.0, 0.0, 1.0]


def _liouville_integral(x):
    f = P.polyval(x[0], LIOUVILLE_F)
    h = P.polyval(x[1], LIOUVILLE_H)
    return np.array([(f + h) * h, 0.0, -(f + h) * f])


def _sphere_rotation(sphere):
    def field(x):
        lam = eval_metric(sphere, x)[0, 0]
        return np.array([-lam * x[1], lam * x[0]])

    return field


@pytest.fixture(scope="module")
def liouville():
    return catalog("liouville", f=LIOUVILLE_F, h=LIOUVILLE_H)


@pytest.mark.parametrize(("d", "raw", "nontrivial"), [(1, 3, 3), (2, 6, 5)])
def test_sphere_attains_the_flat_bound(sphere, d: int, raw: int, nontrivial: int) -> None:
    _, report = analyze_obstruction(sphere, SymPolySpace(2, d), 3, 1)
    assert report.raw_kernel_dim == raw
    assert report.nontrivial_kernel_dim == nontrivial
    assert report.gap_ratio >= 1e6


def test_flat_three_space_has_six_killing_vectors() -> None:
    flat3 = catalog("flat", n=3)
    _, report = analyze_obstruction(flat3, SymPolySpace(3, 1), 3, 1)
    assert report.raw_kernel_dim == 6


def test_lorentz_plane_boost_and_translations(lorentz) -> None:
    _, report = analyze_obstruction(lorentz, SymPolySpace(2, 1), 3, 1)
    assert report.raw_kernel_dim == 3


def test_sphere_rotation_lies_in_the_kernel(sphere) -> None:
    cfg = sample_configuration(sphere, SymPolySpace(2, 1), kappa=3, seed=2)
    M = obstruction_matrix(cfg)
    r = restriction_vector(cfg, _sphere_rotation(sphere))
    assert np.linalg.norm(M @ r) < 1e-7 * np.linalg.norm(M, 2) * np.linalg.norm(r)


def test_liouville_quadratic_integral(liouville) -> None:
    cfg, report = analyze_obstruction(liouville, SymPolySpace(2, 2), 3, 1)
    assert report.raw_kernel_dim == 2
    assert report.nontrivial_kernel_dim == 1
    M = obstruction_matrix(cfg)
    r = restriction_vector(cfg, _liouville_integral)
    assert np.linalg.norm(M @ r) < 1e-7 * np.linalg.norm(M, 2) * np.linalg.norm(r)


def test_liouville_collocation_in_velocity_form(liouville) -> None:
    result = collocation_kernel_dim(liouville, SymPolySpace(2, 2), 8, form="velocity")
    assert result.dimension == 2
    assert result.nontrivial_dimension == 1


def test_liouville_sample_config_verdict() -> None:
    report = run_analyze(parse_run_config(load_sample_config("liouville.json")), n_jobs=1)
    assert report.verdicts == {"2": "DIM=1"}


def test_revolution_clairaut_integral_is_certified() -> None:
    report = run_crossvalidate(parse_run_config(load_sample_config("revolution.json")), n_jobs=1).to_dict()
    cell = report["cells"][0]
    assert cell["obstruction"]["nontrivial_kernel_dim"] >= 1
    (entry,) = report["crossvalidation"]
    assert entry["certified"] >= 1


def test_revolution_clairaut_restriction() -> None:
    metric = catalog("revolution", rho=[1.0, 0.0, 0.25])
    cfg = sample_configuration(metric, SymPolySpace(2, 1), kappa=3, seed=1)
    M = obstruction_matrix(cfg)
    r = restriction_vector(cfg, lambda x: np.array([0.0, P.polyval(x[0], [1.0, 0.0, 0.25]) ** 2]))
    assert np.linalg.norm(M @ r) < 1e-7 * np.linalg.norm(M, 2) * np.linalg.norm(r)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_perturbed_plane_has_only_trivial_integrals(flat, d: int) -> None:
    metric = perturb(flat, PerturbationSpec(0.01, seed=7))
    dims = [analyze_obstruction(metric, SymPolySpace(2, d), 3, seed)[1].nontrivial_kernel_dim for seed in range(1, 11)]
    assert sum(dim == 0 for dim in dims) >= 9


def test_perturbed_plane_sample_config_verdict() -> None:
    report = run_analyze(parse_run_config(load_sample_config("perturbed_flat.json")), n_jobs=1)
    assert report.verdicts == {"1": "TRIVIAL_ONLY", "2": "TRIVIAL_ONLY"}


def test_perturbed_plane_holonomy(flat) -> None:
    metric = perturb(flat, PerturbationSpec(0.01, seed=7))
    assert holonomy_kernel_dim_d1(metric, loop_count=12).dimension == 0


def test_geodesics_conserve_energy(sphere) -> None:
    cfg = sample_configuration(sphere, SymPolySpace(2, 1), kappa=3, seed=1)
    for grid in list(cfg.seg_AB) + list(cfg.seg_BC):
        for row in grid:
            for segment in row:
                assert segment.energy_drift < 1e-9 * (1.0 + abs(segment.energy))


def test_collapsed_verdict_survives_a_further_small_perturbation(flat) -> None:
    collapsed = perturb(flat, PerturbationSpec(0.01, seed=7))
    nearby = perturb(collapsed, PerturbationSpec(1e-4, seed=11))
    dims = [analyze_obstruction(nearby, SymPolySpace(2, 1), 3, seed)[1].nontrivial_kernel_dim for seed in range(1, 11)]
    assert dims == [0] * 10


@pytest.mark.parametrize("kappa", [3, 4])
@pytest.mark.parametrize(
    ("name", "params", "d", "raw"),
    [
        ("sphere_cap", {}, 2, 6),
        ("liouville", {"f": LIOUVILLE_F, "h": LIOUVILLE_H}, 2, 2),
        ("revolution", {"rho": [1.0, 0.0, 0.25]}, 1, 1),
    ],
)
def test_raw_dimension_is_independent_of_kappa_and_seed(name: str, params: dict, d: int, raw: int, kappa: int) -> None:
    metric = catalog(name, **params)
    for seed in range(1, 6):
        _, report = analyze_obstruction(metric, SymPolySpace(2, d), kappa, seed)
        assert report.raw_kernel_dim == raw, f"seed {seed}"
