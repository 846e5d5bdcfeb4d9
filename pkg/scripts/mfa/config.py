"""
설정 로딩.

- 도구 기본값: config/default.toml ([logging], [numerics], [tolerances])
- 실험 설정: JSON (--config), dataclass 로 파싱
- capacity 정의: 조합 트리 ({"kind": ..., ...}, 이름 참조 {"ref": "mu"})
"""

import logging
import math
import sys
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any

from .analysis import default_window
from .capacity import (
    MAX_DENSE_CELLS,
    AuxiliaryCapacity,
    CapacityModel,
    CascadeCapacity,
    GibbsCapacity,
    Potential,
    PowerCapacity,
    ProductCapacity,
    ShiftedCapacity,
    auxiliary_model,
    lebesgue,
)
from .errors import ConfigError
from .io import read_json

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

DEFAULT_TOML = Path(__file__).resolve().parents[2] / "config" / "default.toml"


@dataclass(frozen=True)
class Tolerances:
    """실험 비교 허용 오차 (기본값은 default.toml, JSON 이 키 단위로 덮어씀)."""

    additivity: float = 1e-10
    tau_oracle: float = 1e-10
    legendre: float = 1e-4
    auxiliary_uniform: float = 1e-12
    auxiliary_spread: float = 2.0
    closed_form_route: float = 1e-8
    grid_route: float = 1e-3
    exponent: float = 0.15
    exponent_pass_fraction: float = 0.8
    upper_bound_slack: float = 0.15
    spectrum: float = 0.2
    spectrum_central_fraction: float = 0.8
    recertify_factor: float = 0.5
    leader: float = 1e-12

    def with_overrides(self, overrides: dict[str, Any]) -> "Tolerances":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"Unknown tolerance keys: {sorted(unknown)}")
        try:
            return replace(self, **{k: float(v) for k, v in overrides.items()})
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Tolerances must be numbers: {e}") from e


@dataclass(frozen=True)
class Numerics:
    q_min: float = -5.0
    q_max: float = 5.0
    q_step: float = 0.01
    table_resolution: int = 16
    fit_margin: int = 2
    max_dense_cells: int = MAX_DENSE_CELLS


@dataclass(frozen=True)
class ToolDefaults:
    log_level: str = "info"
    log_format: str = "pretty"
    numerics: Numerics = field(default_factory=Numerics)
    tolerances: Tolerances = field(default_factory=Tolerances)


def load_defaults(path: str | Path | None = None) -> ToolDefaults:
    """default.toml 읽기. 파일이 없으면 내장 기본값."""
    path = Path(path) if path is not None else DEFAULT_TOML
    if not path.exists():
        logger.debug(f"No defaults file at {path}, using built-in defaults")
        return ToolDefaults()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Malformed TOML in {path}: {e}") from e

    log = data.get("logging", {})
    try:
        numerics = Numerics(**data.get("numerics", {}))
    except TypeError as e:
        raise ConfigError(f"Invalid [numerics] section in {path}: {e}") from e
    if numerics.max_dense_cells < 1:
        raise ConfigError(f"max_dense_cells must be positive, got {numerics.max_dense_cells}")
    return ToolDefaults(
        log_level=str(log.get("level", "info")),
        log_format=str(log.get("format", "pretty")),
        numerics=numerics,
        tolerances=Tolerances().with_overrides(data.get("tolerances", {})),
    )


# ----------------------------------------------------------------------
# capacity 조합 트리
# ----------------------------------------------------------------------


def build_capacity(
    spec: dict[str, Any],
    named: dict[str, CapacityModel] | None = None,
    max_dense_cells: int | None = None,
) -> CapacityModel:
    """조합 트리에서 CapacityModel 생성.

    max_dense_cells 는 잎 capacity 에 걸리고 합성 capacity 는 물려받는다.

    Raises:
        ConfigError: 알 수 없는 kind, 누락된 키, 알 수 없는 이름 참조
    """
    named = named or {}
    if not isinstance(spec, dict):
        raise ConfigError(f"Capacity definition must be an object, got {spec!r}")
    if "ref" in spec:
        name = spec["ref"]
        if name not in named:
            raise ConfigError(f"Unknown capacity reference: {name}")
        return named[name]

    kind = spec.get("kind")
    try:
        if kind == "cascade":
            return CascadeCapacity(
                spec["weights"], spec.get("dim"), max_dense_cells=max_dense_cells
            )
        if kind == "lebesgue":
            return lebesgue(int(spec.get("dim", 1)), max_dense_cells=max_dense_cells)
        if kind == "gibbs":
            potential = Potential.from_dict(spec.get("potential", spec))
            return GibbsCapacity(
                potential,
                dim=int(spec.get("dim", 1)),
                max_depth=int(spec.get("max_depth", 20)),
                birkhoff_depth=spec.get("birkhoff_depth"),
                max_dense_cells=max_dense_cells,
            )
        if kind == "power":
            base = build_capacity(spec["base"], named, max_dense_cells)
            return PowerCapacity(base, float(spec["exponent"]))
        if kind == "shifted":
            base = build_capacity(spec["base"], named, max_dense_cells)
            return ShiftedCapacity(base, float(spec["exponent"]))
        if kind == "product":
            return ProductCapacity(
                build_capacity(spec["left"], named, max_dense_cells),
                build_capacity(spec["right"], named, max_dense_cells),
            )
        if kind == "auxiliary":
            base = build_capacity(spec["base"], named, max_dense_cells)
            if spec.get("renormalize", False):
                return AuxiliaryCapacity(base, float(spec["r"]))
            return auxiliary_model(base, float(spec["r"]))
    except KeyError as e:
        raise ConfigError(f"Capacity of kind {kind!r} is missing key {e}") from e
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid {kind!r} capacity definition: {e}") from e
    raise ConfigError(f"Unknown capacity kind: {kind!r}")


def build_capacities(
    definitions: dict[str, Any], max_dense_cells: int | None = None
) -> dict[str, CapacityModel]:
    """이름 → 정의. 정의 순서대로 만들어 앞의 이름을 참조할 수 있다."""
    named: dict[str, CapacityModel] = {}
    for name, spec in definitions.items():
        named[name] = build_capacity(spec, named, max_dense_cells)
        logger.debug(f"Capacity {name}: {named[name].kind.value}, dim {named[name].dim}")
    return named


# ----------------------------------------------------------------------
# 실험 설정
# ----------------------------------------------------------------------


class ExperimentKind(str, Enum):
    """실험 종류와 검증하는 claim 태그."""

    SATURATING_SHIFT = "saturating-shift"
    UPPER_BOUND = "upper-bound"
    PREVALENT_SHAPE = "prevalent-shape"
    ADDITIVITY = "additivity"

    @property
    def claim(self) -> str:
        return {
            ExperimentKind.SATURATING_SHIFT: "prop-5.5",
            ExperimentKind.UPPER_BOUND: "thm-1.8",
            ExperimentKind.PREVALENT_SHAPE: "thm-1.11",
            ExperimentKind.ADDITIVITY: "prop-2.13",
        }[self]


def parse_extended(value: Any) -> float:
    """숫자 또는 "inf" / "∞"."""
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity", "∞"):
        return math.inf
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Expected a number or 'inf', got {value!r}") from e


@dataclass(frozen=True)
class WaveletConfig:
    name: str = "db4"
    resolution: int = 16
    taps_path: str | None = None
    grid_resolution: int = 16
    window_max: int = 4
    min_alpha: float = 1e-3
    d_prime: int = 1
    schedule_path: str | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WaveletConfig":
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Invalid wavelet section: {e}") from e


@dataclass(frozen=True)
class ExperimentConfig:
    """실험 한 번의 전체 설정."""

    name: str
    kind: ExperimentKind
    capacities: dict[str, Any]
    mu: str = "mu"
    nu: str = "nu"
    wavelet: WaveletConfig = field(default_factory=WaveletConfig)
    q: float = math.inf
    J: int = 16
    level: int = 12
    q_grid_step: float = 0.25
    r_list: tuple[float, ...] = (0.0,)
    samples: int = 20
    spectrum_samples: int = 3
    seed: int = 0
    fit_window: tuple[int, int] | None = None
    test_points: tuple[str, ...] = ("0", "0001", "01", "0111", "1")
    x_grid: int = 50
    members: int = 5
    generator_p: int = 1
    implicit: bool = True
    n_jobs: int = 1
    output_dir: str = "results"
    fit_margin: int = 2
    max_dense_cells: int = MAX_DENSE_CELLS
    tolerances: Tolerances = field(default_factory=Tolerances)

    @classmethod
    def from_dict(
        cls, data: dict[str, Any], defaults: ToolDefaults | None = None
    ) -> "ExperimentConfig":
        defaults = defaults or ToolDefaults()
        if "name" not in data or "kind" not in data:
            raise ConfigError("Experiment config needs 'name' and 'kind'")
        try:
            kind = ExperimentKind(data["kind"])
        except ValueError as e:
            raise ConfigError(f"Unknown experiment kind: {data['kind']!r}") from e
        capacities = data.get("capacities")
        if not isinstance(capacities, dict) or not capacities:
            raise ConfigError("Experiment config needs a non-empty 'capacities' object")

        window = data.get("fit_window")
        config = cls(
            name=str(data["name"]),
            kind=kind,
            capacities=capacities,
            mu=str(data.get("mu", "mu")),
            nu=str(data.get("nu", "nu")),
            wavelet=WaveletConfig.from_dict(
                {"resolution": defaults.numerics.table_resolution, **data.get("wavelet", {})}
            ),
            q=parse_extended(data.get("q", "inf")),
            J=int(data.get("J", 16)),
            level=int(data.get("level", 12)),
            q_grid_step=float(data.get("q_grid_step", 0.25)),
            r_list=tuple(float(r) for r in data.get("r_list", [0.0])),
            samples=int(data.get("samples", 20)),
            spectrum_samples=int(data.get("spectrum_samples", 3)),
            seed=int(data.get("seed", 0)),
            fit_window=tuple(int(v) for v in window) if window else None,  # type: ignore[arg-type]
            test_points=tuple(str(p) for p in data.get("test_points", cls.test_points)),
            x_grid=int(data.get("x_grid", 50)),
            members=int(data.get("members", 5)),
            generator_p=int(data.get("generator_p", 1)),
            implicit=bool(data.get("implicit", True)),
            n_jobs=int(data.get("n_jobs", 1)),
            output_dir=str(data.get("output_dir", "results")),
            tolerances=defaults.tolerances.with_overrides(data.get("tolerances", {})),
            fit_margin=defaults.numerics.fit_margin,
            max_dense_cells=defaults.numerics.max_dense_cells,
        )
        config.validate()
        return config

    @classmethod
    def load(cls, path: str | Path, defaults: ToolDefaults | None = None) -> "ExperimentConfig":
        return cls.from_dict(read_json(path), defaults)

    def validate(self) -> None:
        if self.q < 1:
            raise ConfigError(f"q must be >= 1, got {self.q}")
        if self.J < 2:
            raise ConfigError(f"J must be >= 2, got {self.J}")
        if self.fit_window is not None:
            lo, hi = self.fit_window
            if not 0 <= lo < hi <= self.J:
                raise ConfigError(f"Fit window {self.fit_window} outside [0, {self.J}]")
        for p in self.test_points:
            if not p or set(p) - {"0", "1"}:
                raise ConfigError(f"Test point pattern must be a binary string: {p!r}")
        if self.samples < 1 or self.members < 1 or self.x_grid < 1:
            raise ConfigError("samples, members and x_grid must be positive")
        if self.spectrum_samples < 0:
            raise ConfigError("spectrum_samples must be >= 0")
        # 곱 공간 dense 레벨은 implicit 표현이 아니면 메모리 정책 대상
        if not self.implicit and (1 << (2 * self.J)) * 3 > self.max_dense_cells:
            raise ConfigError(
                f"J={self.J} exceeds the dense memory policy; enable the implicit representation"
            )

    def build_capacities(self) -> dict[str, CapacityModel]:
        named = build_capacities(self.capacities, self.max_dense_cells)
        for key in (self.mu, self.nu):
            if self.kind != ExperimentKind.ADDITIVITY and key not in named:
                raise ConfigError(f"Capacity {key!r} is not defined")
        return named

    def window(self) -> tuple[int, int]:
        return self.fit_window if self.fit_window is not None else default_window(self.J, self.fit_margin)
