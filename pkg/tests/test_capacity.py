"""capacity 모델, 스케일링 함수, 보조 측도, 진단."""

import math

import numpy as np
import pytest

from scripts.mfa.capacity import (
    AuxiliaryCapacity,
    CascadeCapacity,
    GibbsCapacity,
    Potential,
    PowerCapacity,
    ProductCapacity,
    ShiftedCapacity,
    auxiliary_model,
    auxiliary_sandwich,
    ball_local_dimension,
    cascade_pattern_exponent,
    default_q_grid,
    diagnostics,
    dim_aux,
    good_set_report,
    h_of_r,
    holder_exponents,
    lebesgue,
    level_set_cubes,
    local_dimension,
    sample_points,
    scaling_function,
)
from scripts.mfa.dyadic import DyadicCube, pattern_point
from scripts.mfa.errors import ConfigError, DomainError, PreconditionError, SamplingError

Q_COARSE = default_q_grid(-5.0, 5.0, 0.25)


def binomial_tau(q: np.ndarray, w: tuple[float, float]) -> np.ndarray:
    return -np.log2(w[0] ** q + w[1] ** q)


class TestCascade:
    def test_masses_multiply_along_path(self, mu):
        assert mu.mass(DyadicCube(2, (3,))) == pytest.approx(0.5625)
        assert mu.mass(DyadicCube(3, (2,))) == pytest.approx(0.25 * 0.75 * 0.25)
        assert mu.level_masses(10).sum() == pytest.approx(1.0)

    def test_log_mass_matches_level_array(self, mu):
        level = mu.log_level_masses(8)
        for k in (0, 17, 200, 255):
            assert mu.log_mass(DyadicCube(8, (k,))) == pytest.approx(level[k])

    @pytest.mark.parametrize("weights", [[0.3, 0.3], [1.2, -0.2], [0.5, 0.25, 0.25]])
    def test_rejects_malformed_weights(self, weights):
        with pytest.raises(ConfigError):
            CascadeCapacity(weights)

    def test_lebesgue_uniform(self):
        leb = lebesgue(2)
        np.testing.assert_allclose(leb.level_masses(3), np.full((8, 8), 1 / 64))

    def test_zero_weight_child(self):
        dirac = CascadeCapacity([1.0, 0.0])
        assert dirac.log_mass(DyadicCube(3, (1,))) == -math.inf
        lo, hi = dirac.log_mass_extremes(4)
        assert lo == hi == 0.0


class TestScaling:
    def test_tau_oracle(self, mu):
        table = scaling_function(mu, Q_COARSE, 12)
        np.testing.assert_allclose(table.tau, binomial_tau(Q_COARSE, (0.25, 0.75)), atol=1e-10)
        assert table.tau_at(1.0) == pytest.approx(0.0, abs=1e-10)
        assert table.tau_at(0.0) == pytest.approx(-1.0, abs=1e-10)

    def test_deep_level_uses_factorized_sum(self, mu):
        # 레벨 20 은 dense 스캔 한도를 넘는다
        table = scaling_function(mu, Q_COARSE, 20)
        np.testing.assert_allclose(table.tau, binomial_tau(Q_COARSE, (0.25, 0.75)), atol=1e-10)

    def test_regression_values(self, mu, nu, baseline):
        values = baseline["values"]
        tol = baseline["tolerances"]["central_difference"]
        table = scaling_function(mu, default_q_grid(), 12)
        assert table.tau_at(2.0) == pytest.approx(values["mu_tau_2"], abs=1e-10)
        assert table.h_at(2.0) == pytest.approx(values["mu_tau_prime_2"], abs=tol)
        assert table.dim_at(2.0) == pytest.approx(values["mu_dim_aux_2"], abs=tol)
        assert h_of_r(nu, 0.0) == pytest.approx(values["nu_h_0"], abs=tol)
        assert dim_aux(nu, 0.0) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("r", [-2.0, -1.0, 0.0, 1.0, 2.0])
    def test_legendre_duality(self, mu, r):
        table = scaling_function(mu, default_q_grid(), 12)
        h = table.h_at(r)
        star = table.legendre(np.array([h]))[0]
        assert star == pytest.approx(r * h - table.tau_at(r), abs=1e-4)

    def test_tau_concave_and_h_range(self, mu):
        table = scaling_function(mu, default_q_grid(), 12)
        assert table.is_concave()
        assert table.h_min == pytest.approx(-math.log2(0.75), abs=0.02)
        assert table.h_max == pytest.approx(2.0, abs=0.02)

    def test_lebesgue_tau_star_single_point(self):
        table = scaling_function(lebesgue(1), default_q_grid(), 10)
        assert len(table.h_grid) == 1
        assert table.h_grid[0] == pytest.approx(1.0)
        assert table.tau_star[0] == pytest.approx(1.0)

    def test_product_additivity(self, xi):
        full = scaling_function(xi, Q_COARSE, 12, exhaustive=True).tau
        left = scaling_function(xi.left, Q_COARSE, 12).tau
        right = scaling_function(xi.right, Q_COARSE, 12).tau
        assert np.max(np.abs(full - left - right)) <= 1e-10

    def test_q_grid_validation(self, mu):
        with pytest.raises(DomainError):
            scaling_function(mu, [1.0, 0.0], 4)
        with pytest.raises(DomainError):
            scaling_function(mu, Q_COARSE, 0)
        with pytest.raises(DomainError):
            scaling_function(mu, Q_COARSE, 8).h_at(7.0)


class TestTransforms:
    def test_power_and_shift(self, mu):
        cube = DyadicCube(4, (5,))
        assert PowerCapacity(mu, 2.0).log_mass(cube) == pytest.approx(2 * mu.log_mass(cube))
        shifted = ShiftedCapacity(mu, 0.5)
        assert shifted.log_mass(cube) == pytest.approx(mu.log_mass(cube) - 2.0)
        np.testing.assert_allclose(shifted.log_level_masses(4), mu.log_level_masses(4) - 2.0)

    def test_negative_shift_bounded_by_s1(self, mu):
        ShiftedCapacity(mu, -0.2)
        with pytest.raises(PreconditionError):
            ShiftedCapacity(mu, -0.5)

    def test_power_exponent_positive(self, mu):
        with pytest.raises(ConfigError):
            PowerCapacity(mu, 0.0)

    def test_product_block_matches_level(self, xi):
        full = xi.log_level_masses(5)
        block = xi.block_log_masses(5, (3, 10), (9, 20))
        np.testing.assert_allclose(block, full[3:9, 10:20])
        cube = DyadicCube(5, (7, 12))
        assert xi.log_mass(cube) == pytest.approx(full[7, 12])
        assert xi.dim == 2

    def test_gibbs_constant_potential_is_lebesgue(self):
        gibbs = GibbsCapacity(Potential(constant=0.3), dim=1, max_depth=12)
        np.testing.assert_allclose(gibbs.level_masses(6), np.full(64, 1 / 64))

    def test_gibbs_masses_normalized(self):
        potential = Potential.from_dict({"modes": [{"frequency": [1], "cos": 0.8}]})
        gibbs = GibbsCapacity(potential, dim=1, max_depth=12)
        masses = gibbs.level_masses(9)
        assert masses.sum() == pytest.approx(1.0)
        assert masses.min() > 0
        with pytest.raises(DomainError):
            gibbs.log_level_masses(13)


class TestAuxiliary:
    def test_r_zero_is_lebesgue(self, mu):
        aux = auxiliary_model(mu, 0.0)
        assert isinstance(aux, CascadeCapacity)
        np.testing.assert_allclose(aux.weights, [0.5, 0.5], atol=1e-12)

    def test_cascade_weights_powered(self, nu):
        aux = auxiliary_model(nu, 2.0)
        expected = np.array([0.09, 0.49]) / 0.58
        np.testing.assert_allclose(aux.weights, expected)

    def test_sandwich_spread(self, mu):
        report = auxiliary_sandwich(mu, 1.5, 12)
        assert report["spread"] <= 2.0
        assert len(report["levels"]) == 12

    def test_gibbs_auxiliary_is_renormalized(self):
        potential = Potential.from_dict({"modes": [{"frequency": [1], "sin": 0.5}]})
        gibbs = GibbsCapacity(potential, max_depth=10)
        aux = auxiliary_model(gibbs, 0.0)
        assert isinstance(aux, AuxiliaryCapacity)
        np.testing.assert_allclose(aux.level_masses(5), np.full(32, 1 / 32))

    def test_rejects_product_base(self, xi):
        with pytest.raises(PreconditionError):
            auxiliary_model(xi, 1.0)


class TestLocal:
    def test_pattern_exponent(self, mu, baseline):
        assert cascade_pattern_exponent(mu, "01") == pytest.approx(
            baseline["values"]["mu_local_dimension_01"]
        )
        assert cascade_pattern_exponent(mu, "1") == pytest.approx(-math.log2(0.75))
        assert cascade_pattern_exponent(mu, "0001") == pytest.approx(
            (3 * 2.0 - math.log2(0.75)) / 4
        )

    def test_local_dimension_at_pattern_point(self, mu):
        x = [pattern_point("01", 30)]
        est = local_dimension(mu, x, 4, 20)
        assert est.ls_slope == pytest.approx(cascade_pattern_exponent(mu, "01"), abs=0.05)

    @pytest.mark.parametrize("pattern, expected", [("0", 2.0), ("1", -math.log2(0.75))])
    def test_ball_dimension_at_endpoints(self, mu, pattern, expected):
        # 끝점에서는 이웃 큐브가 하나뿐이다
        x = [pattern_point(pattern, 30)]
        ball = ball_local_dimension(mu, x, 4, 16).ls_slope
        assert ball == pytest.approx(expected, abs=1e-9)


    def test_level_set(self, mu):
        assert level_set_cubes(mu, 2, (0.4, 0.45)) == [DyadicCube(2, (3,))]
        assert level_set_cubes(mu, 2, (0.2, 0.3)) == []
        assert len(level_set_cubes(mu, 2, (1.2, 1.21))) == 2

    def test_good_set_mass(self, mu):
        report = good_set_report(mu, 0.0, n=10, m=2, K=7, j_range=(16, 16))
        assert report.violating_mass[0] < 0.05
        assert report.neighborhood_mass[0] >= report.violating_mass[0]
        assert report.h_r == pytest.approx((2.0 - math.log2(0.75)) / 2, abs=1e-4)

    def test_good_set_violators_shrink_with_level(self, mu):
        report = good_set_report(mu, 1.0, n=10, m=4, K=7, j_range=(10, 20))
        assert report.levels[0] == 10 and report.levels[-1] == 20
        assert report.violating_mass[-1] <= report.violating_mass[0]
        assert report.h_r == pytest.approx(report.dim_r, abs=1e-2)


class TestSampling:
    def test_points_in_unit_cube(self, xi):
        points = sample_points(xi, 10, 50, 3)
        assert points.shape == (50, 2)
        assert np.all((points >= 0) & (points < 1))
        np.testing.assert_allclose(points * 1024, np.round(points * 1024))

    def test_deterministic_seed(self, mu):
        np.testing.assert_array_equal(sample_points(mu, 12, 5, 9), sample_points(mu, 12, 5, 9))

    def test_dirac_cascade_samples_origin(self):
        points = sample_points(CascadeCapacity([1.0, 0.0]), 8, 10, 0)
        np.testing.assert_array_equal(points, np.zeros((10, 1)))

    def test_frequencies_follow_weights(self, mu):
        points = sample_points(mu, 1, 4000, 1)
        assert np.mean(points[:, 0] >= 0.5) == pytest.approx(0.75, abs=0.03)

    def test_zero_mass_parent(self):
        class Broken(CascadeCapacity):
            def conditional_log_weights(self, level, parents):
                return np.full((len(parents), 2), -np.inf)

        with pytest.raises(SamplingError):
            sample_points(Broken([0.5, 0.5]), 3, 2, 0)

    def test_depth_positive(self, mu):
        with pytest.raises(DomainError):
            sample_points(mu, 0, 2, 0)


class TestDiagnostics:
    def test_cascade_is_quasi_bernoulli(self, mu):
        report = diagnostics(mu, 8)
        assert report.quasi_bernoulli == pytest.approx(1.0)
        assert report.doubling >= 1.0
        assert report.s1 == pytest.approx(-math.log2(0.75), abs=1e-9)
        assert report.s2 == pytest.approx(2.0, abs=1e-9)

    def test_product_holder_exponents(self, xi):
        s1, s2 = holder_exponents(xi, 10)
        assert s1 == pytest.approx(-math.log2(0.75) - math.log2(0.7), abs=1e-9)
        assert s2 == pytest.approx(2.0 - math.log2(0.3), abs=1e-9)
