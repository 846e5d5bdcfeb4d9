"""trace 경로 (닫힌 식, 텐서 축약, 격자 오라클) 와 목표 지수."""

import math

import numpy as np
import pytest

from scripts.mfa.dyadic import cube_containing, neighborhood_cubes
from scripts.mfa.errors import ShapeMismatchError
from scripts.mfa.synthesis import DenseField, SaturatingField
from scripts.mfa.trace import (
    TraceRoute,
    compare_traces,
    gamma_target,
    grid_trace,
    interior_mask,
    k_index,
    leader_sandwich,
    saturating_trace,
    tensor_trace,
    trace_from_grid,
)
from scripts.mfa.wavelet import OffsetSchedule, build_spec


def test_k_index():
    sched = OffsetSchedule.periodic([[2]], 10, 0.1, 7)
    k, valid = k_index(sched, [0.5], 5)
    assert k.tolist() == [16] and valid
    k, valid = k_index(sched, [0.5], 2)
    assert k.tolist() == [2] and valid
    k, valid = k_index(sched, [0.5], 1)
    assert k.tolist() == [-5] and not valid


def test_interior_mask():
    assert np.flatnonzero(interior_mask(4, 7)).tolist() == [7, 8]
    assert interior_mask(5, 7, 2).sum() == 18 * 18


class TestRoutes:
    def test_closed_form_matches_tensor(self, mu, nu, xi, db4, schedule):
        a, J = 0.6, 10
        closed = saturating_trace(mu, nu, schedule, db4, 2.0, [a], J, r=1.0)
        tensor = tensor_trace(SaturatingField(xi, 2.0, J, schedule), [a], db4, r=1.0)
        assert closed.route == TraceRoute.CLOSED_FORM
        assert tensor.route == TraceRoute.TENSOR

        valid = [j for j in range(1, J + 1) if k_index(schedule, [a], j)[1]]
        assert closed.first_valid_level == valid[0]
        report = compare_traces(closed.field, tensor.field, valid)
        assert report["max_rel_error"].max() <= 1e-8
        for j in set(range(1, J + 1)) - set(valid):
            np.testing.assert_array_equal(closed.field.level(j), 0.0)
        # saturating 계수장은 l′ = 1 방향에만 있으므로 d^G 가 없다
        for g in tensor.dG_profile:
            np.testing.assert_array_equal(g, 0.0)

    def test_tensor_matches_grid_interior(self, xi, db4, schedule):
        a, J = 0.6, 6
        field = SaturatingField(xi, 2.0, J, schedule)
        tensor = tensor_trace(field, [a], db4)
        samples = grid_trace(field, [a], J + 1, db4)
        assert samples.shape == (1 << (J + 1),)
        recovered = trace_from_grid(samples, db4)
        levels = [j for j in range(J + 1) if (1 << j) > 2 * db4.support_length]
        report = compare_traces(tensor.field, recovered.details, levels, K=db4.support_length)
        assert report["max_rel_error"].max() <= 1e-3

    def test_scaling_coefficient_goes_to_dG(self, db4):
        levels = [np.zeros((1 << j,) * 2 + (3,)) for j in range(3)]
        field = DenseField(levels, scaling_coefficient=2.0)
        result = tensor_trace(field, [0.5], db4)
        assert result.dG_profile[0][0] == pytest.approx(2.0 * float(np.interp(0.5, db4.grid, db4.phi_table)))
        np.testing.assert_array_equal(result.field.level(2), 0.0)

    def test_heights_checked(self, mu, nu, db4, schedule):
        with pytest.raises(ShapeMismatchError):
            saturating_trace(mu, nu, schedule, db4, 2.0, [0.0], 4)
        with pytest.raises(ShapeMismatchError):
            saturating_trace(mu, nu, schedule, db4, 2.0, [1.5], 4)
        with pytest.raises(ShapeMismatchError):
            saturating_trace(mu, nu, schedule, build_spec("haar", 10), 2.0, [0.5], 4)

    def test_compare_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            compare_traces(DenseField.zeros(1, 3), {3: np.zeros((4, 1))}, [3])

    def test_sidecar(self, mu, nu, db4, schedule):
        result = saturating_trace(mu, nu, schedule, db4, 2.0, [0.6], 6)
        sidecar = result.sidecar()
        assert sidecar["route"] == "closed-form"
        assert sidecar["r"] is None
        assert sidecar["has_dG"] is False


def test_gamma_target(nu, baseline):
    values = baseline["values"]
    tol = baseline["tolerances"]["central_difference"]
    assert gamma_target(nu, 0.0, 1.0) == pytest.approx(values["nu_gamma_p1_r0"], abs=tol)
    assert gamma_target(nu, 0.0, math.inf) == pytest.approx(values["nu_h_0"], abs=tol)


def test_leader_sandwich(mu):
    x, h, m = [0.3], 0.8, 4
    leader_levels = []
    for j in range(11):
        cube = cube_containing(x, j)
        mass = sum(mu.mass(c) for c in neighborhood_cubes(cube, 3))
        leader_levels.append(np.full(1 << j, mass * 2.0 ** (-j * h)))
    fit = leader_sandwich(leader_levels, mu, x, h, m, list(range(4, 11)), 2)
    assert fit.c_upper == pytest.approx(0.5)
    assert fit.c_lower == pytest.approx(2.0)
    assert fit.lower_levels == [4, 6, 8, 10]
