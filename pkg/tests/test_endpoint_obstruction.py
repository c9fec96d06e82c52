from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from killing_probe.components.endpoint_obstruction import (
    _chord_condition,
    _frame_velocities,
    analyze_obstruction,
    compose_reverse_check,
    deflate_trivial,
    kernel_analysis,
    obstruction_matrix,
    reconstruct_fields,
    reconstruct_integral,
    restriction_vector,
    sample_configuration,
    transport_map,
    trivial_vector,
)
from killing_probe.utils.sym_poly import SymPolySpace

from tests.helpers import flat_killing_fields


def test_kernel_of_clean_gap() -> None:
    spectrum = kernel_analysis(np.diag([1.0, 0.5, 1e-12]))
    assert spectrum.dimension == 1
    assert spectrum.rank == 2
    assert spectrum.gap_ratio == pytest.approx(0.5e12)
    assert spectrum.basis.shape == (1, 3)
    assert_allclose(np.abs(spectrum.basis[0]), [0.0, 0.0, 1.0], atol=1e-12)


def test_full_rank_matrix_has_empty_kernel() -> None:
    spectrum = kernel_analysis(np.diag([1.0, 0.3, 0.1]))
    assert spectrum.dimension == 0
    assert spectrum.determinate
    assert spectrum.gap_ratio == float("inf")
    assert spectrum.basis.shape == (0, 3)


def test_identity_and_appended_zero_column() -> None:
    assert kernel_analysis(np.eye(4)).dimension == 0
    spectrum = kernel_analysis(np.hstack([np.eye(4), np.zeros((4, 1))]))
    assert spectrum.dimension == 1
    assert_allclose(np.abs(spectrum.basis[0]), [0.0, 0.0, 0.0, 0.0, 1.0], atol=1e-12)


def test_zero_matrix_kernel_is_everything() -> None:
    spectrum = kernel_analysis(np.zeros((4, 3)))
    assert spectrum.dimension == 3


def test_roundoff_matrix_with_scale_is_all_kernel() -> None:
    noise = np.zeros((6, 3))
    noise[0, 1] = 3e-16
    noise[2, 0] = 1e-16
    assert kernel_analysis(noise, scale=1.0).dimension == 3


def test_small_values_above_the_floor_are_retained() -> None:
    spectrum = kernel_analysis(np.diag([1.0, 1e-5, 5e-9]))
    assert spectrum.dimension == 0


def test_small_gap_below_floor_is_indeterminate() -> None:
    spectrum = kernel_analysis(np.diag([1.0, 1e-8, 1e-12]))
    assert spectrum.dimension is None
    assert not spectrum.determinate
    assert spectrum.gap_ratio == pytest.approx(1e4)


def test_gaps_between_sub_floor_values_are_not_cuts() -> None:
    # 1e-10 / 1e-17 is a large ratio, but both values sit below the floor
    spectrum = kernel_analysis(np.diag([1.0, 1e-10, 1e-17]))
    assert spectrum.dimension == 2
    assert spectrum.gap_ratio == pytest.approx(1e10)


def test_gap_min_and_floor_are_honoured() -> None:
    values = np.diag([1.0, 1e-3, 1e-11])
    assert kernel_analysis(values).dimension == 1
    assert kernel_analysis(values, gap_min=1e9).dimension is None
    assert kernel_analysis(values, abs_floor=1e-2).dimension is None
    assert kernel_analysis(values, abs_floor=1e-12).dimension == 0


def test_wide_matrices_are_padded() -> None:
    assert kernel_analysis(np.array([[1.0, 0.0, 0.0]])).dimension == 2


def test_non_finite_entries_rejected() -> None:
    with pytest.raises(ValueError):
        kernel_analysis(np.array([[1.0, np.nan]]))


def test_configuration_shapes(flat_cfg_d1) -> None:
    cfg = flat_cfg_d1
    assert cfg.A.shape == (2, 2)
    assert cfg.B.shape == (3, 2, 2)
    assert cfg.C.shape == (2, 2)
    assert len(cfg.seg_AB) == 3
    assert cfg.max_bvp_residual < 1e-8
    assert cfg.max_condition < 1e8
    assert set(cfg.points()) == {"A", "B", "C"}


def test_configuration_is_seed_deterministic(flat) -> None:
    space = SymPolySpace(2, 1)
    a = sample_configuration(flat, space, kappa=2, seed=9)
    b = sample_configuration(flat, space, kappa=2, seed=9)
    assert_allclose(a.A, b.A)
    assert_allclose(a.B, b.B)


def test_configuration_arguments_checked(flat) -> None:
    with pytest.raises(ValueError):
        sample_configuration(flat, SymPolySpace(2, 1), kappa=1, seed=0)
    with pytest.raises(ValueError):
        sample_configuration(flat, SymPolySpace(3, 1), kappa=3, seed=0)


def test_obstruction_matrix_shape(flat_cfg_d1) -> None:
    M = obstruction_matrix(flat_cfg_d1)
    assert M.shape == (8, 4)


def test_transport_leg_validation(flat_cfg_d1) -> None:
    with pytest.raises(ValueError):
        transport_map(flat_cfg_d1, 0, "CA")
    with pytest.raises(ValueError):
        transport_map(flat_cfg_d1, 3, "AB")
    with pytest.raises(ValueError):
        transport_map(flat_cfg_d1, 0, "AC")
    with pytest.raises(ValueError):
        obstruction_matrix(flat_cfg_d1, scheme="direct")


def test_reverse_leg_inverts_forward_leg(flat_cfg_d1, flat_cfg_d2) -> None:
    assert compose_reverse_check(flat_cfg_d1, 0) < 1e-8
    assert compose_reverse_check(flat_cfg_d2, 2) < 1e-8


def test_flat_killing_vectors_satisfy_the_system(flat_cfg_d1) -> None:
    M = obstruction_matrix(flat_cfg_d1)
    norm = np.linalg.norm(M, 2)
    for field in flat_killing_fields():
        r = restriction_vector(flat_cfg_d1, field)
        assert np.linalg.norm(M @ r) < 1e-7 * norm * np.linalg.norm(r)


def test_flat_plane_has_three_killing_vectors(flat, flat_cfg_d1) -> None:
    _, report = analyze_obstruction(flat, SymPolySpace(2, 1), 3, 1, cfg=flat_cfg_d1)
    assert report.raw_kernel_dim == 3
    assert report.nontrivial_kernel_dim == 3
    assert report.rank == 1
    assert report.gap_ratio >= 1e6
    assert report.trivial_residual is None
    assert report.kernel_basis.shape == (3, 4)


def test_flat_plane_quadratic_integrals(flat, flat_cfg_d2) -> None:
    _, report = analyze_obstruction(flat, SymPolySpace(2, 2), 3, 1, cfg=flat_cfg_d2)
    assert report.raw_kernel_dim == 6
    assert report.nontrivial_kernel_dim == 5
    assert report.trivial_residual < 1e-9
    assert report.determinate


def test_trivial_vector_is_zero_for_odd_degree(flat_cfg_d1, flat_cfg_d2) -> None:
    assert not np.any(trivial_vector(flat_cfg_d1))
    assert_allclose(trivial_vector(flat_cfg_d2), np.tile([0.5, 0.0, 0.5], 3))


def test_direct_scheme_agrees_with_composition(flat) -> None:
    space = SymPolySpace(2, 1)
    cfg, report = analyze_obstruction(flat, space, 3, 2, scheme="direct")
    assert cfg.seg_AC is not None
    assert report.scheme == "direct"
    assert report.raw_kernel_dim == 3
    assert obstruction_matrix(cfg, "direct").shape == (12, 4)


def test_rotation_field_is_reconstructed(flat, flat_cfg_d1) -> None:
    rotation = flat_killing_fields()[2]
    r = restriction_vector(flat_cfg_d1, rotation)
    x = np.array([0.2, -0.1])
    element = reconstruct_integral(r, flat_cfg_d1, flat, x)
    assert_allclose(element.coeffs, rotation(x), atol=1e-7)


def test_kernel_vectors_reconstruct_to_killing_fields(flat, flat_cfg_d1) -> None:
    _, report = analyze_obstruction(flat, SymPolySpace(2, 1), 3, 1, cfg=flat_cfg_d1)
    x = np.array([-0.3, 0.25])
    y = np.array([0.4, 0.1])
    fx = reconstruct_fields(report.kernel_basis, flat_cfg_d1, flat, x)
    fy = reconstruct_fields(report.kernel_basis, flat_cfg_d1, flat, y)
    assert fx.shape == (3, 2)
    # flat Killing fields are a + b * (-x2, x1): fit (a1, a2, b) to both points
    design = np.array([
        [1.0, 0.0, -x[1]],
        [0.0, 1.0, x[0]],
        [1.0, 0.0, -y[1]],
        [0.0, 1.0, y[0]],
    ])
    values = np.hstack([fx, fy]).T
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    assert_allclose(design @ coef, values, atol=1e-7)
    assert np.linalg.matrix_rank(coef, tol=1e-6) == 3


def test_deflation_of_flat_quadratics_has_a_clean_gap(flat, flat_cfg_d2) -> None:
    _, report = analyze_obstruction(flat, SymPolySpace(2, 2), 3, 1, cfg=flat_cfg_d2)
    assert report.deflation_gap >= 1e6


def test_deflation_removes_only_a_trivial_ray_in_the_kernel(flat, flat_cfg_d2) -> None:
    _, report = analyze_obstruction(flat, SymPolySpace(2, 2), 3, 1, cfg=flat_cfg_d2)
    t = trivial_vector(flat_cfg_d2)
    t /= np.linalg.norm(t)
    w = np.zeros(9)
    w[1] = 1.0  # orthogonal to t, whose entries sit on the v1^2 and v2^2 slots
    fake = replace(report, raw_kernel_dim=1, singular_values=np.ones(9))
    assert deflate_trivial(fake, flat, flat_cfg_d2, M=np.eye(9) - np.outer(t, t)) == 0
    fake = replace(report, raw_kernel_dim=1, singular_values=np.ones(9))
    assert deflate_trivial(fake, flat, flat_cfg_d2, M=np.eye(9) - np.outer(w, w)) == 1


def test_chord_screening_scores_spread_and_collinear_points() -> None:
    space = SymPolySpace(2, 1)
    frames = np.stack([np.eye(2)] * 2)
    A = np.array([[0.5, 0.0], [0.0, 0.5]])
    B = np.array([[0.0, 0.0], [-0.3, -0.3]])
    assert _chord_condition(space, A, B, frames, frames, (1, 1)) < 10.0
    line_A = np.array([[0.1, 0.0], [0.3, 0.0]])
    line_B = np.array([[0.5, 0.0], [0.7, 0.0]])
    assert _chord_condition(space, line_A, line_B, frames, frames, (1, 1)) > 1e12


def test_endpoint_velocities_have_unit_frame_energy(flat_cfg_d2) -> None:
    cfg = flat_cfg_d2
    out, inc = _frame_velocities(cfg.seg_AB[0], cfg.frames_A, cfg.frames_B[0], cfg.frame_signature)
    assert_allclose(np.sum(out ** 2, axis=-1), 1.0, atol=1e-14)
    assert_allclose(np.sum(inc ** 2, axis=-1), 1.0, atol=1e-14)
