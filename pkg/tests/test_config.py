"""도구 기본값 (TOML), 실험 설정 (JSON), capacity 조합 트리."""

import json
import math
from pathlib import Path

import pytest

from scripts.mfa.capacity import (
    AuxiliaryCapacity,
    CascadeCapacity,
    GibbsCapacity,
    PowerCapacity,
    ProductCapacity,
    ShiftedCapacity,
)
from scripts.mfa.config import (
    ExperimentConfig,
    ExperimentKind,
    Numerics,
    ToolDefaults,
    build_capacities,
    build_capacity,
    load_defaults,
    parse_extended,
)
from scripts.mfa.errors import ConfigError, PreconditionError

EXPERIMENTS_DIR = Path(__file__).resolve().parents[1] / "config" / "experiments"

MU = {"kind": "cascade", "weights": [0.25, 0.75]}
NU = {"kind": "cascade", "weights": [0.3, 0.7]}


def minimal(**overrides) -> dict:
    data = {"name": "t", "kind": "saturating-shift", "capacities": {"mu": MU, "nu": NU}}
    data.update(overrides)
    return data


class TestDefaults:
    def test_repository_defaults(self):
        defaults = load_defaults()
        assert defaults.numerics.table_resolution == 16
        assert defaults.numerics.q_step == 0.01
        assert defaults.tolerances.grid_route == 1e-3
        assert defaults.tolerances.exponent_pass_fraction == 0.8

    def test_missing_file_uses_builtin(self, tmp_path):
        assert load_defaults(tmp_path / "absent.toml") == ToolDefaults()

    def test_overrides(self, tmp_path):
        path = tmp_path / "d.toml"
        path.write_text('[logging]\nformat = "plain"\n[tolerances]\nspectrum = 0.3\n')
        defaults = load_defaults(path)
        assert defaults.log_format == "plain"
        assert defaults.tolerances.spectrum == 0.3
        assert defaults.tolerances.exponent == 0.15

    @pytest.mark.parametrize(
        "text",
        ["[[[", "[tolerances]\nbogus = 1.0\n", "[numerics]\nq_big = 2\n", '[tolerances]\nspectrum = "x"\n'],
    )
    def test_invalid_files(self, tmp_path, text):
        path = tmp_path / "d.toml"
        path.write_text(text)
        with pytest.raises(ConfigError):
            load_defaults(path)


class TestCapacityTree:
    def test_kinds(self):
        named = build_capacities(
            {
                "mu": MU,
                "nu": NU,
                "xi": {"kind": "product", "left": {"ref": "mu"}, "right": {"ref": "nu"}},
                "p": {"kind": "power", "base": {"ref": "mu"}, "exponent": 2},
                "s": {"kind": "shifted", "base": {"ref": "mu"}, "exponent": 0.5},
                "a": {"kind": "auxiliary", "base": {"ref": "nu"}, "r": 1.5},
                "b": {"kind": "auxiliary", "base": {"ref": "nu"}, "r": 1.5, "renormalize": True},
                "g": {"kind": "gibbs", "potential": {"modes": [{"frequency": [1], "cos": 0.5}]}},
                "leb": {"kind": "lebesgue", "dim": 2},
            }
        )
        assert isinstance(named["xi"], ProductCapacity) and named["xi"].left is named["mu"]
        assert isinstance(named["p"], PowerCapacity)
        assert isinstance(named["s"], ShiftedCapacity)
        assert isinstance(named["a"], CascadeCapacity)
        assert isinstance(named["b"], AuxiliaryCapacity)
        assert isinstance(named["g"], GibbsCapacity)
        assert named["leb"].dim == 2

    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "cascade"},
            {"kind": "cascade", "weights": [0.5, 0.6]},
            {"kind": "fractal"},
            {"ref": "missing"},
            {"kind": "power", "base": MU, "exponent": -1},
            {"kind": "power", "base": MU, "exponent": "big"},
            [0.5, 0.5],
        ],
    )
    def test_invalid(self, spec):
        with pytest.raises(ConfigError):
            build_capacity(spec)


class TestExperimentConfig:
    @pytest.mark.parametrize("path", sorted(EXPERIMENTS_DIR.glob("*.json")), ids=lambda p: p.stem)
    def test_bundled_configs_parse(self, path):
        config = ExperimentConfig.load(path)
        named = config.build_capacities()
        assert config.kind in ExperimentKind
        assert named

    def test_fields(self):
        config = ExperimentConfig.from_dict(
            minimal(q="∞", J=12, r_list=[0, 1.5], tolerances={"exponent": 0.2})
        )
        assert math.isinf(config.q)
        assert config.r_list == (0.0, 1.5)
        assert config.tolerances.exponent == 0.2
        assert config.kind.claim == "prop-5.5"
        assert config.window() == (6, 10)

    def test_window_margin_from_defaults(self):
        defaults = ToolDefaults(numerics=Numerics(fit_margin=4))
        assert ExperimentConfig.from_dict(minimal(), defaults).window() == (6, 12)
        assert ExperimentConfig.from_dict(minimal(fit_window=[3, 9])).window() == (3, 9)

    def test_wavelet_resolution_default(self):
        defaults = ToolDefaults(numerics=Numerics(table_resolution=12))
        assert ExperimentConfig.from_dict(minimal(), defaults).wavelet.resolution == 12
        config = ExperimentConfig.from_dict(minimal(wavelet={"resolution": 14}), defaults)
        assert config.wavelet.resolution == 14

    @pytest.mark.parametrize(
        "overrides",
        [
            {"name": None},
            {"kind": "sideways"},
            {"capacities": {}},
            {"q": 0.5},
            {"q": "lots"},
            {"J": 1},
            {"fit_window": [3, 20]},
            {"test_points": ["012"]},
            {"samples": 0},
            {"spectrum_samples": -1},
            {"implicit": False},
            {"tolerances": {"nonsense": 1}},
            {"wavelet": {"colour": "blue"}},
        ],
    )
    def test_rejects(self, overrides):
        data = minimal(**overrides)
        if overrides.get("name", "") is None:
            del data["name"]
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(data)

    def test_undefined_capacity_name(self):
        config = ExperimentConfig.from_dict(minimal(nu="zeta"))
        with pytest.raises(ConfigError):
            config.build_capacities()

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / "absent.json")
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(path)
        path.write_text(json.dumps([1, 2]))
        with pytest.raises(ConfigError):
            ExperimentConfig.load(path)


def test_parse_extended():
    assert math.isinf(parse_extended("inf"))
    assert parse_extended(2) == 2.0
    with pytest.raises(ConfigError):
        parse_extended(None)


class TestDenseCellPolicy:
    def test_limit_reaches_capacities(self):
        defaults = ToolDefaults(numerics=Numerics(max_dense_cells=1 << 10))
        named = ExperimentConfig.from_dict(minimal(J=4), defaults).build_capacities()
        assert named["mu"].max_dense_cells == 1 << 10
        assert named["mu"].log_level_masses(10).shape == (1 << 10,)
        with pytest.raises(PreconditionError):
            named["nu"].log_level_masses(11)

    def test_composites_inherit_limit(self):
        tree = {
            "kind": "product",
            "left": {"kind": "power", "base": MU, "exponent": 2},
            "right": {"kind": "auxiliary", "base": NU, "r": 1.5},
        }
        xi = build_capacity(tree, max_dense_cells=4096)
        assert xi.max_dense_cells == 4096
        assert xi.left.max_dense_cells == xi.right.max_dense_cells == 4096
        capped = CascadeCapacity([0.5, 0.5], max_dense_cells=64)
        assert ProductCapacity(capped, CascadeCapacity([0.3, 0.7])).max_dense_cells == 64

    def test_dense_experiment_checked_against_limit(self):
        assert not ExperimentConfig.from_dict(minimal(J=6, implicit=False)).implicit
        defaults = ToolDefaults(numerics=Numerics(max_dense_cells=1000))
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(minimal(J=6, implicit=False), defaults)

    def test_non_positive_limit(self, tmp_path):
        path = tmp_path / "default.toml"
        path.write_text("[numerics]\nmax_dense_cells = 0\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_defaults(path)
