"""trace-lab CLI: 종료 코드와 출력 파일."""

import json
from pathlib import Path

import numpy as np
import polars as pl
import pytest
from click.testing import CliRunner

from scripts.mfa.analysis import leaders
from scripts.mfa.synthesis import DenseField
from scripts.trace_lab import cli, leaders_frame, leaders_from_frame, main

BINOMIAL = {
    "mu": {"kind": "cascade", "weights": [0.25, 0.75]},
    "nu": {"kind": "cascade", "weights": [0.3, 0.7]},
}


def write_config(path: Path, **overrides) -> str:
    data = {
        "name": "cli-test",
        "kind": "saturating-shift",
        "capacities": BINOMIAL,
        "wavelet": {"name": "db4", "resolution": 10, "grid_resolution": 10},
        "J": 6,
        "seed": 7,
    }
    data.update(overrides)
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


class TestTau:
    def test_product_additivity(self, runner, tmp_path):
        config = write_config(
            tmp_path / "add.json",
            kind="additivity",
            capacities={**BINOMIAL, "xi": {"kind": "product", "left": {"ref": "mu"}, "right": {"ref": "nu"}}},
        )
        out = tmp_path / "tau"
        result = runner.invoke(cli, ["tau", "--config", config, "--out", str(out), "--level", "6"])
        assert result.exit_code == 0, result.output
        for name in ("tau.csv", "tau_star.csv", "additivity.csv", "manifest.json"):
            assert (out / name).exists()
        residual = pl.read_csv(out / "additivity.csv")["residual"].abs().max()
        assert residual < 1e-10
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["claims"] == ["prop-2.13"]

    def test_missing_capacities(self, runner, tmp_path):
        config = tmp_path / "empty.json"
        config.write_text(json.dumps({"name": "x"}))
        result = runner.invoke(cli, ["tau", "--config", str(config), "--out", str(tmp_path / "o")])
        assert result.exit_code == 2

    def test_bad_weights(self, runner, tmp_path):
        config = write_config(
            tmp_path / "bad.json", capacities={"mu": {"kind": "cascade", "weights": [0.5, 0.6]}}
        )
        result = runner.invoke(cli, ["tau", "--config", config, "--out", str(tmp_path / "o")])
        assert result.exit_code == 2

    def test_missing_file(self, tmp_path):
        assert main(["tau", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_malformed_defaults(runner, tmp_path):
    bad = tmp_path / "default.toml"
    bad.write_text("[numerics\nq_min = ", encoding="utf-8")
    config = write_config(tmp_path / "c.json")
    result = runner.invoke(
        cli, ["--defaults", str(bad), "tau", "--config", config, "--out", str(tmp_path / "o")]
    )
    assert result.exit_code == 2


class TestCheckWavelet:
    def test_haar_rejected(self, runner, tmp_path):
        config = write_config(
            tmp_path / "haar.json", wavelet={"name": "haar", "resolution": 10, "grid_resolution": 10}
        )
        out = tmp_path / "haar"
        result = runner.invoke(cli, ["check-wavelet", "--config", config, "--out", str(out)])
        assert result.exit_code == 3
        report = json.loads((out / "property_r.json").read_text())
        assert report["R1"] is False
        assert not (out / "schedule.json").exists()

    def test_db4_schedule(self, runner, tmp_path):
        config = write_config(
            tmp_path / "db4.json",
            wavelet={"name": "db4", "resolution": 12, "grid_resolution": 11},
            J=10,
        )
        out = tmp_path / "db4"
        result = runner.invoke(cli, ["check-wavelet", "--config", config, "--out", str(out)])
        assert result.exit_code == 0, result.output
        schedule = json.loads((out / "schedule.json").read_text())
        assert schedule["alpha"] > 0
        assert json.loads((out / "certification.json").read_text())["pass"] is True


class TestPipeline:
    def test_random_member_to_spectrum(self, runner, tmp_path):
        config = write_config(tmp_path / "c.json")
        field_dir, trace_dir = tmp_path / "field", tmp_path / "trace"
        lead_dir, spec_dir = tmp_path / "leaders", tmp_path / "spectrum"

        result = runner.invoke(
            cli, ["synthesize", "--config", config, "--out", str(field_dir), "--kind", "random"]
        )
        assert result.exit_code == 0, result.output
        assert (field_dir / "field.mfcf").exists()

        result = runner.invoke(
            cli,
            [
                "trace", "--config", config, "--out", str(trace_dir),
                "--field", str(field_dir / "field.mfcf"), "--a", "0.4",
            ],
        )
        assert result.exit_code == 0, result.output
        sidecar = json.loads((trace_dir / "trace.json").read_text())
        assert "dG_profile" in sidecar

        result = runner.invoke(
            cli,
            [
                "leaders", "--field", str(trace_dir / "trace.mfcf"), "--out", str(lead_dir),
                "--x", "0.3", "--x", "0.7",
            ],
        )
        assert result.exit_code == 0, result.output
        exponents = pl.read_csv(lead_dir / "exponents.csv")
        assert exponents.height == 2
        assert {"x", "h_hat", "min_slope"} <= set(exponents.columns)

        result = runner.invoke(
            cli, ["spectrum", "--leaders", str(lead_dir / "leaders.csv"), "--out", str(spec_dir)]
        )
        assert result.exit_code == 0, result.output
        meta = json.loads((spec_dir / "spectrum.json").read_text())
        assert meta["method"] == "leader-legendre"
        assert meta["window"] == [1, 6]

    def test_implicit_saturating_closed_form(self, runner, tmp_path):
        config = write_config(tmp_path / "c.json")
        field_dir = tmp_path / "field"
        result = runner.invoke(
            cli, ["synthesize", "--config", config, "--out", str(field_dir), "--implicit"]
        )
        assert result.exit_code == 0, result.output
        manifest = json.loads((field_dir / "field.mfcf.json").read_text())
        assert manifest["implicit"] is True

        for route in ("closed-form", "tensor"):
            out = tmp_path / route
            args = ["trace", "--config", config, "--out", str(out), "--a", "0.4", "--route", route]
            if route == "tensor":
                args += ["--field", str(field_dir / "field.mfcf")]
            result = runner.invoke(cli, args)
            assert result.exit_code == 0, result.output
            assert (out / "trace.mfcf").exists()


class TestSpectrumCommand:
    def test_bad_h_grid(self, runner, tmp_path):
        result = runner.invoke(
            cli,
            [
                "spectrum", "--leaders", str(tmp_path / "l.csv"), "--out", str(tmp_path / "s"),
                "--h-min", "2", "--h-max", "1",
            ],
        )
        assert result.exit_code == 2

    def test_missing_leaders(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["spectrum", "--leaders", str(tmp_path / "none.csv"), "--out", str(tmp_path / "s")]
        )
        assert result.exit_code == 2

    def test_bad_columns(self, runner, tmp_path):
        path = tmp_path / "l.csv"
        pl.DataFrame({"a": [1], "b": [2.0]}).write_csv(path)
        result = runner.invoke(cli, ["spectrum", "--leaders", str(path), "--out", str(tmp_path / "s")])
        assert result.exit_code == 2


class TestLeadersFrame:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_frame_roundtrip(self, dim):
        rng = np.random.default_rng(3)
        field = DenseField([rng.normal(size=(1 << j,) * dim + (2**dim - 1,)) for j in range(5)])
        lf = leaders(field)
        back = leaders_from_frame(leaders_frame(lf))
        assert back.dim == dim
        for a, b in zip(lf.levels, back.levels):
            np.testing.assert_allclose(a, b)


class TestExperiment:
    def test_additivity_manifest(self, runner, tmp_path):
        config = write_config(
            tmp_path / "add.json",
            name="additivity-small",
            kind="additivity",
            capacities={**BINOMIAL, "xi": {"kind": "product", "left": {"ref": "mu"}, "right": {"ref": "nu"}}},
            level=6,
        )
        out = tmp_path / "exp"
        result = runner.invoke(cli, ["experiment", "--config", config, "--out", str(out)])
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["claims"] == ["prop-2.13"]
        assert manifest["status"] == "pass"
        paths = {entry["path"] for entry in manifest["files"]}
        assert {"additivity.csv", "summary.json", "config.json"} <= paths

    def test_unknown_kind(self, runner, tmp_path):
        config = write_config(tmp_path / "c.json", kind="nonsense")
        result = runner.invoke(cli, ["experiment", "--config", config, "--out", str(tmp_path / "o")])
        assert result.exit_code == 2
