"""웨이블릿 테이블, property (R), offset 스케줄, 주기 DWT."""

import numpy as np
import polars as pl
import pytest

from scripts.mfa.errors import ConfigError, PreconditionError, ShapeMismatchError
from scripts.mfa.wavelet import (
    OffsetSchedule,
    _two_scale_psi,
    build_spec,
    certify_schedule,
    check_property_R,
    dwt_periodic,
    eval_G,
    eval_phi,
    eval_psi,
    filter_bank,
    find_offset_schedule,
    highpass_from,
    idwt_periodic,
    load_taps,
    orientations,
    refinement_errors,
    refinement_rate,
    spec_from_tables,
)


class TestTables:
    def test_db4_metadata(self, db4):
        assert db4.support_length == 7
        assert db4.vanishing_moments == 4
        assert len(db4.psi_table) == 7 * (1 << 14) + 1
        assert db4.lowpass_taps.sum() == pytest.approx(np.sqrt(2.0))

    def test_filters_orthogonal(self, db4):
        h, g = db4.lowpass_taps, db4.highpass_taps
        assert np.dot(h, h) == pytest.approx(1.0)
        assert np.dot(h, g) == pytest.approx(0.0, abs=1e-12)
        assert g.sum() == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("x", [0.0, 0.3, 0.71875])
    def test_partition_of_unity(self, db4, x):
        total = sum(float(eval_phi(db4, x + k)) for k in range(db4.support_length))
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_psi_moments_vanish(self, db4):
        assert db4.moment(0) == pytest.approx(0.0, abs=1e-8)
        assert db4.moment(1) == pytest.approx(0.0, abs=1e-6)

    def test_outside_support_is_zero(self, db4):
        np.testing.assert_array_equal(eval_psi(db4, [-0.5, 7.0, 9.0]), [0.0, 0.0, 0.0])

    def test_G_is_periodic(self, db4):
        x = np.array([0.25, 1.5, 6.125])
        np.testing.assert_allclose(eval_G(db4, x), eval_G(db4, x + 7))
        np.testing.assert_allclose(eval_G(db4, x), eval_psi(db4, x))

    def test_refinement_converges(self):
        errors = refinement_errors("db4", [10, 11])
        assert errors[1] < errors[0]
        assert refinement_rate([10, 11], errors) > 0.5

    def test_psi_table_matches_two_scale_relation(self, db4):
        reference = _two_scale_psi(
            highpass_from(db4.lowpass_taps), db4.phi_table, db4.support_length, db4.table_resolution
        )
        assert np.corrcoef(db4.psi_table, reference)[0, 1] > 0.999
        np.testing.assert_allclose(db4.psi_table, reference, atol=1e-2 * np.abs(reference).max())


class TestTaps:
    def test_load_taps(self, tmp_path, db4):
        path = tmp_path / "taps.csv"
        pl.DataFrame({"tap": db4.lowpass_taps}).write_csv(path)
        spec = build_spec(load_taps(path), 10, name="file-db4")
        np.testing.assert_allclose(spec.lowpass_taps, db4.lowpass_taps)
        assert spec.name == "file-db4"

    def test_load_taps_needs_column(self, tmp_path):
        path = tmp_path / "taps.csv"
        pl.DataFrame({"h": [0.5, 0.5]}).write_csv(path)
        with pytest.raises(ConfigError):
            load_taps(path)

    @pytest.mark.parametrize(
        "source, R",
        [([0.5, 0.5], 12), ([1.0, 0.414, 0.0], 12), ("db4", 8), ("sym4", 12), ("db99", 12)],
    )
    def test_rejects_bad_input(self, source, R):
        with pytest.raises(ConfigError):
            build_spec(source, R)

    def test_table_shape_checked(self):
        with pytest.raises(ShapeMismatchError):
            spec_from_tables("bad", np.zeros(10), 1, 4)


class TestPropertyR:
    def test_db4_passes(self, db4):
        report = check_property_R(db4, 14)
        assert report.passed
        assert report.min_s > 0
        assert report.to_dict()["certification"] == "grid scan only"

    def test_haar_fails_regularity(self):
        report = check_property_R(build_spec("haar", 10), 10)
        assert not report.r1
        assert report.r3
        assert not report.passed

    def test_vanishing_wavelet_fails_r2_and_r3(self):
        # 지지의 절반에서 0 인 합성 ψ
        values = np.concatenate([np.ones(512), np.zeros(513)])
        spec = spec_from_tables("half", values, 1, 10, regularity=2.0)
        report = check_property_R(spec, 10)
        assert not report.r2
        assert not report.r3
        with pytest.raises(PreconditionError):
            find_offset_schedule(spec, 1, 4, grid_resolution=10)


class TestSchedule:
    def test_search_certifies(self, db4, schedule):
        assert schedule.alpha > 0
        assert schedule.d_prime == 1
        assert schedule.support_length == 7
        assert 1 <= schedule.window <= 4
        assert schedule.max_level == 16
        assert np.all((schedule.offsets >= 0) & (schedule.offsets < 7))

    def test_recertify_on_finer_grid(self, db4, schedule):
        report = certify_schedule(db4, schedule, 13, schedule.alpha / 2)
        assert report.passed
        assert report.floor > 0

    def test_periodic_pattern(self):
        sched = OffsetSchedule.periodic([[1], [3]], 5, 0.1, 7)
        assert sched.window == 2
        assert sched.offsets[:, 0].tolist() == [1, 3, 1, 3, 1, 3]
        restored = OffsetSchedule.from_dict(sched.to_dict())
        np.testing.assert_array_equal(restored.offsets, sched.offsets)
        with pytest.raises(PreconditionError):
            sched.offset(6)
        with pytest.raises(PreconditionError):
            sched.require(6)


class TestDwt:
    def test_orientations(self):
        assert orientations(1) == [(1,)]
        assert orientations(2) == [(0, 1), (1, 0), (1, 1)]

    def test_filter_bank_is_orthogonal_pair(self, db4):
        bank = filter_bank(db4)
        np.testing.assert_allclose(bank.rec_lo, db4.lowpass_taps)
        np.testing.assert_allclose(bank.dec_hi, db4.highpass_taps[::-1])

    def test_matches_direct_filter_sum(self, db4):
        """d_k = Σ h_m g_n x_{2k+m, 2k'+n} (주기), L∞ 스케일 포함."""
        x = np.random.default_rng(5).normal(size=(16, 16))
        h, g = db4.lowpass_taps, db4.highpass_taps
        J, P = 4, 16
        scaled = x * 2.0 ** (-2 * J / 2)
        expected = np.zeros((P // 2, P // 2))
        for k1 in range(P // 2):
            for k2 in range(P // 2):
                for m, hm in enumerate(h):
                    for n, gn in enumerate(g):
                        expected[k1, k2] += hm * gn * scaled[(2 * k1 + m) % P, (2 * k2 + n) % P]
        result = dwt_periodic(x, db4, 1)
        # orientations(2)[0] == (0, 1): 축 0 lowpass, 축 1 highpass
        np.testing.assert_allclose(result.details[3][..., 0], expected * 2.0**3, atol=1e-12)

    def test_haar_coefficient_normalization(self):
        haar = build_spec("haar", 10)
        samples = np.array([0, 0, 0, 0, 1, 1, -1, -1], dtype=float)
        result = dwt_periodic(samples, haar)
        assert result.details[1][1, 0] == pytest.approx(1.0)
        assert result.details[1][0, 0] == pytest.approx(0.0)
        np.testing.assert_allclose(result.details[2], 0.0, atol=1e-14)
        np.testing.assert_allclose(result.details[0], 0.0, atol=1e-14)

    def test_constant_has_no_details(self, db4):
        result = dwt_periodic(np.full((16, 16), 3.0), db4, 2, prefilter=True)
        for j in (2, 3):
            np.testing.assert_allclose(result.details[j], 0.0, atol=1e-10)

    @pytest.mark.parametrize("shape, prefilter", [((64,), False), ((32, 32), True)])
    def test_reconstruction(self, db4, shape, prefilter):
        samples = np.random.default_rng(0).normal(size=shape)
        result = dwt_periodic(samples, db4, 2, prefilter=prefilter)
        assert result.approx_level == int(np.log2(shape[0])) - 2
        np.testing.assert_allclose(idwt_periodic(result, db4), samples, atol=1e-10)

    def test_shape_checks(self, db4):
        with pytest.raises(ShapeMismatchError):
            dwt_periodic(np.zeros(6), db4)
        with pytest.raises(ShapeMismatchError):
            dwt_periodic(np.zeros(4), db4)
        with pytest.raises(ShapeMismatchError):
            dwt_periodic(np.zeros((8, 16)), db4)
