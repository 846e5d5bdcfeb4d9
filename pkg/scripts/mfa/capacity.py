"""
Capacity 모델 생성과 다중 프랙탈 분석.

지원 모델:
- 곱셈 cascade (2^D 자식 가중치)
- 주기 potential 로부터의 Gibbs 근사
- power ξ^s, shift ξ^{(±s)}
- 곱 capacity ξ = μ ⊗ ν
- 보조 측도 ν_r

모든 질량은 log₂ 로 다루며 질량 0 은 −inf 이다 (0^q = 0 규약).
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.ndimage import correlate, maximum_filter
from scipy.special import logsumexp

from .dyadic import DyadicCube, cube_containing, neighborhood_cubes
from .errors import ConfigError, ConstructionError, DomainError, PreconditionError, SamplingError
from .fitting import (
    NEG_INF,
    SlopeEstimate,
    central_slopes,
    fit_slopes,
    h_axis,
    legendre_transform,
    log_scale_slopes,
)

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)

# 한 번에 만드는 dense 레벨 배열의 최대 셀 수
MAX_DENSE_CELLS = 1 << 26
# diagnostics 의 전수 조사 상한
MAX_SCAN_CELLS = 1 << 16


class CapacityKind(str, Enum):
    """Capacity 모델 종류."""

    CASCADE = "cascade"
    GIBBS = "gibbs"
    POWER = "power"
    SHIFTED = "shifted"
    PRODUCT = "product"
    AUXILIARY = "auxiliary"


def _log2(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log2(np.asarray(values, dtype=float))


def _interleave_shape(n: int, dim: int, inner: int = 2) -> tuple[int, ...]:
    return tuple(s for _ in range(dim) for s in (n, inner))


def refine(parent: np.ndarray, child: np.ndarray) -> np.ndarray:
    """레벨 배열을 한 단계 세분: out[2k+b] = parent[k] + child[b] (log 영역)."""
    dim = parent.ndim
    n = parent.shape[0]
    p = parent.reshape(_interleave_shape(n, dim, 1))
    c = child.reshape(_interleave_shape(1, dim, 2))
    return (p + c).reshape((2 * n,) * dim)


def _sibling_axes(dim: int) -> tuple[int, ...]:
    return tuple(2 * i + 1 for i in range(dim))


def _check_dense(dim: int, j: int, limit: int) -> None:
    if (1 << (j * dim)) > limit:
        raise PreconditionError(
            f"Level {j} in dimension {dim} exceeds the dense memory policy ({limit} cells)"
        )


class CapacityModel(ABC):
    """dyadic cube 에 질량을 주는 불변 평가기."""

    kind: CapacityKind
    dim: int
    is_probability: bool = True
    max_depth: int | None = None
    max_dense_cells: int = MAX_DENSE_CELLS

    def __init__(self, max_dense_cells: int | None = None) -> None:
        self._levels: dict[int, np.ndarray] = {}
        if max_dense_cells is not None:
            if max_dense_cells < 1:
                raise ConfigError(f"max_dense_cells must be positive: {max_dense_cells}")
            self.max_dense_cells = int(max_dense_cells)

    # ------------------------------------------------------------------
    # 질량 질의
    # ------------------------------------------------------------------

    @abstractmethod
    def _compute_log_level(self, j: int) -> np.ndarray:
        """레벨 j 의 log₂ 질량 배열 (shape (2^j,)*D)."""

    def log_level_masses(self, j: int) -> np.ndarray:
        if j < 0:
            raise DomainError(f"Negative level: {j}")
        self._check_depth(j)
        if j not in self._levels:
            _check_dense(self.dim, j, self.max_dense_cells)
            self._levels[j] = self._compute_log_level(j)
        return self._levels[j]

    def level_masses(self, j: int) -> np.ndarray:
        return np.exp2(self.log_level_masses(j))

    def block_log_masses(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        """레벨 j 의 부분 박스 [lo, hi) log₂ 질량."""
        full = self.log_level_masses(j)
        return full[tuple(slice(a, b) for a, b in zip(lo, hi))]

    def log_mass(self, cube: DyadicCube) -> float:
        self._check_cube(cube)
        return float(self.log_level_masses(cube.level)[cube.index])

    def mass(self, cube: DyadicCube) -> float:
        return float(2.0 ** self.log_mass(cube))

    def log_mass_extremes(self, j: int) -> tuple[float, float]:
        """레벨 j 의 (최소 유한 log₂ 질량, 최대 log₂ 질량)."""
        values = self.log_level_masses(j)
        finite = values[np.isfinite(values)]
        if len(finite) == 0:
            return NEG_INF, NEG_INF
        return float(finite.min()), float(finite.max())

    def log_partition(self, q: np.ndarray, j: int) -> np.ndarray:
        """log₂ Σ_λ mass(λ)^q (0^q = 0)."""
        return dense_log_partition(self, q, j)

    def conditional_log_weights(self, level: int, parents: np.ndarray) -> np.ndarray:
        """parents (n, D) 의 자식 2^D 개 log₂ 질량 (비정규화)."""
        values = self.log_level_masses(level)
        offsets = _child_offsets(self.dim)
        idx = 2 * parents[:, None, :] + offsets[None, :, :]
        return values[tuple(idx[..., d] for d in range(self.dim))]

    # ------------------------------------------------------------------

    def _check_depth(self, j: int) -> None:
        if self.max_depth is not None and j > self.max_depth:
            raise DomainError(f"Level {j} exceeds max depth {self.max_depth}")

    def _check_cube(self, cube: DyadicCube) -> None:
        if cube.dim != self.dim:
            raise DomainError(f"Cube dim {cube.dim} does not match model dim {self.dim}")

    def describe(self) -> dict[str, object]:
        return {"kind": self.kind.value, "dim": self.dim}


def _child_offsets(dim: int) -> np.ndarray:
    grids = np.indices((2,) * dim).reshape(dim, -1).T
    return grids.astype(np.int64)


def dense_log_partition(model: CapacityModel, q: np.ndarray, j: int) -> np.ndarray:
    """레벨 배열 전체를 훑는 log-sum-exp 분배 함수."""
    values = model.log_level_masses(j).reshape(-1)
    finite = np.isfinite(values)
    if not finite.all():
        values = values[finite]
    q = np.atleast_1d(np.asarray(q, dtype=float))
    out = np.full(q.shape, NEG_INF)
    if len(values) == 0:
        return out

    lo, hi = float(values.min()), float(values.max())
    buf = np.empty_like(values)
    for i, qi in enumerate(q):
        shift = qi * (hi if qi >= 0 else lo)
        np.multiply(values, qi, out=buf)
        buf -= shift
        np.exp2(buf, out=buf)
        out[i] = shift + math.log2(float(buf.sum()))
    return out


# ----------------------------------------------------------------------
# Cascade
# ----------------------------------------------------------------------


class CascadeCapacity(CapacityModel):
    """자식 위치마다 고정 가중치를 곱하는 곱셈 cascade."""

    kind = CapacityKind.CASCADE

    def __init__(
        self,
        weights: Sequence[float] | np.ndarray,
        dim: int | None = None,
        *,
        max_dense_cells: int | None = None,
    ):
        super().__init__(max_dense_cells)
        w = np.asarray(weights, dtype=float)
        if dim is None:
            dim = int(round(math.log2(w.size)))
        if w.size != 1 << dim:
            raise ConfigError(f"Cascade in dimension {dim} needs {1 << dim} weights, got {w.size}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError(f"Cascade weights must be finite and non-negative: {w.tolist()}")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"Cascade weights must sum to 1, got {w.sum():.12g}")
        self.dim = dim
        self.weights = w.reshape((2,) * dim)
        self.log_weights = _log2(self.weights)

    def _compute_log_level(self, j: int) -> np.ndarray:
        if j == 0:
            return np.zeros((1,) * self.dim)
        return refine(self.log_level_masses(j - 1), self.log_weights)

    def log_mass(self, cube: DyadicCube) -> float:
        # 경로 곱을 직접 계산 (깊은 레벨도 배열 없이)
        self._check_cube(cube)
        total = 0.0
        for i in range(cube.level - 1, -1, -1):
            bits = tuple((k >> i) & 1 for k in cube.index)
            total += float(self.log_weights[bits])
        return total

    def log_partition(self, q: np.ndarray, j: int) -> np.ndarray:
        if (1 << (j * self.dim)) <= MAX_SCAN_CELLS:
            return dense_log_partition(self, q, j)
        # 레벨 배열이 너무 크면 한 단계 합을 j 번 곱한다
        q = np.atleast_1d(np.asarray(q, dtype=float))
        lw = self.log_weights.reshape(-1)
        lw = lw[np.isfinite(lw)]
        one_level = logsumexp(q[:, None] * lw[None, :] * LN2, axis=1) / LN2
        return j * one_level

    def conditional_log_weights(self, level: int, parents: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.log_weights.reshape(-1), (len(parents), 1 << self.dim))

    def describe(self) -> dict[str, object]:
        return {"kind": self.kind.value, "dim": self.dim, "weights": self.weights.reshape(-1).tolist()}


def lebesgue(dim: int = 1, *, max_dense_cells: int | None = None) -> CascadeCapacity:
    """균등 cascade (Lebesgue 측도)."""
    return CascadeCapacity(np.full(1 << dim, 2.0 ** (-dim)), dim, max_dense_cells=max_dense_cells)


# ----------------------------------------------------------------------
# Gibbs
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class FourierMode:
    """Z^D-주기 potential 의 한 항: a·cos(2π n·x) + b·sin(2π n·x)."""

    frequency: tuple[int, ...]
    cos: float = 0.0
    sin: float = 0.0


@dataclass(frozen=True)
class Potential:
    """상수 + 유한 Fourier 합 (Hölder 연속, Z^D-주기)."""

    constant: float = 0.0
    modes: tuple[FourierMode, ...] = field(default_factory=tuple)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """x: shape (..., D)."""
        x = np.asarray(x, dtype=float)
        values = np.full(x.shape[:-1], self.constant)
        for mode in self.modes:
            phase = 2.0 * np.pi * (x @ np.asarray(mode.frequency, dtype=float))
            if mode.cos:
                values += mode.cos * np.cos(phase)
            if mode.sin:
                values += mode.sin * np.sin(phase)
        return values

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "Potential":
        modes = tuple(
            FourierMode(
                frequency=tuple(int(n) for n in m["frequency"]),  # type: ignore[index, union-attr]
                cos=float(m.get("cos", 0.0)),  # type: ignore[union-attr]
                sin=float(m.get("sin", 0.0)),  # type: ignore[union-attr]
            )
            for m in data.get("modes", [])  # type: ignore[union-attr]
        )
        return cls(constant=float(data.get("constant", 0.0)), modes=modes)  # type: ignore[arg-type]


class GibbsCapacity(CapacityModel):
    """주기 potential 의 유한 깊이 Gibbs 근사.

    레벨 j 큐브의 가중치는 exp(S_j φ(x_λ)) (x_λ 는 중심, S_j 는 Birkhoff 합)이고,
    형제끼리 정규화해 부모 질량을 나눈다. 결과는 정확한 cascade 가 된다.
    """

    kind = CapacityKind.GIBBS

    def __init__(
        self,
        potential: Potential,
        dim: int = 1,
        max_depth: int = 20,
        birkhoff_depth: int | None = None,
        *,
        max_dense_cells: int | None = None,
    ):
        super().__init__(max_dense_cells)
        if dim < 1:
            raise ConfigError(f"Dimension must be positive: {dim}")
        self.potential = potential
        self.dim = dim
        self.max_depth = max_depth
        self.birkhoff_depth = birkhoff_depth

    def birkhoff_sum(self, x: np.ndarray, j: int) -> np.ndarray:
        """S_n φ(x) = Σ_{k<n} φ(2^k x mod 1), n = min(j, birkhoff_depth)."""
        n = j if self.birkhoff_depth is None else min(j, self.birkhoff_depth)
        total = np.zeros(x.shape[:-1])
        for k in range(n):
            total += self.potential(np.mod(x * (1 << k), 1.0))
        return total

    def _centers(self, j: int) -> np.ndarray:
        axis = (np.arange(1 << j) + 0.5) * 2.0 ** (-j)
        grids = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack(grids, axis=-1)

    def _compute_log_level(self, j: int) -> np.ndarray:
        if j == 0:
            return np.zeros((1,) * self.dim)
        parent = self.log_level_masses(j - 1)
        n = parent.shape[0]
        raw = self.birkhoff_sum(self._centers(j), j).reshape(_interleave_shape(n, self.dim))
        axes = _sibling_axes(self.dim)
        norm = logsumexp(raw, axis=axes, keepdims=True)
        child = (raw - norm) / LN2 + parent.reshape(_interleave_shape(n, self.dim, 1))
        logger.debug(f"Gibbs level {j}: {child.size} cubes")
        return child.reshape((2 * n,) * self.dim)

    def describe(self) -> dict[str, object]:
        return {
            "kind": self.kind.value,
            "dim": self.dim,
            "max_depth": self.max_depth,
            "birkhoff_depth": self.birkhoff_depth,
            "constant": self.potential.constant,
            "modes": [
                {"frequency": list(m.frequency), "cos": m.cos, "sin": m.sin}
                for m in self.potential.modes
            ],
        }


# ----------------------------------------------------------------------
# 변환: power / shift / product / auxiliary
# ----------------------------------------------------------------------


class PowerCapacity(CapacityModel):
    """ξ^s(E) = ξ(E)^s."""

    kind = CapacityKind.POWER
    is_probability = False

    def __init__(self, base: CapacityModel, exponent: float):
        super().__init__(base.max_dense_cells)
        if exponent <= 0:
            raise ConfigError(f"Power exponent must be positive: {exponent}")
        self.base = base
        self.exponent = float(exponent)
        self.dim = base.dim
        self.max_depth = base.max_depth

    def _compute_log_level(self, j: int) -> np.ndarray:
        return self.exponent * self.base.log_level_masses(j)

    def block_log_masses(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        return self.exponent * self.base.block_log_masses(j, lo, hi)

    def log_mass(self, cube: DyadicCube) -> float:
        return self.exponent * self.base.log_mass(cube)

    def log_mass_extremes(self, j: int) -> tuple[float, float]:
        lo, hi = self.base.log_mass_extremes(j)
        return self.exponent * lo, self.exponent * hi

    def describe(self) -> dict[str, object]:
        return {"kind": self.kind.value, "exponent": self.exponent, "base": self.base.describe()}


class ShiftedCapacity(CapacityModel):
    """ξ^{(s)}(E) = ξ(E)·|E|^s, |E| = 2^{-j} (sup-norm 지름).

    음수 shift 는 s₁ 추정치보다 작을 때만 허용한다.
    """

    kind = CapacityKind.SHIFTED
    is_probability = False

    def __init__(self, base: CapacityModel, exponent: float, check_level: int = 12):
        super().__init__(base.max_dense_cells)
        self.base = base
        self.exponent = float(exponent)
        self.dim = base.dim
        self.max_depth = base.max_depth
        if self.exponent < 0:
            level = check_level if base.max_depth is None else min(check_level, base.max_depth)
            s1, _ = holder_exponents(base, level)
            if -self.exponent >= s1:
                raise PreconditionError(
                    f"Negative shift {-self.exponent:.6g} is not below the estimated "
                    f"Hölder exponent s1={s1:.6g}"
                )

    def _compute_log_level(self, j: int) -> np.ndarray:
        return self.base.log_level_masses(j) - self.exponent * j

    def block_log_masses(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        return self.base.block_log_masses(j, lo, hi) - self.exponent * j

    def log_mass(self, cube: DyadicCube) -> float:
        return self.base.log_mass(cube) - self.exponent * cube.level

    def log_mass_extremes(self, j: int) -> tuple[float, float]:
        lo, hi = self.base.log_mass_extremes(j)
        return lo - self.exponent * j, hi - self.exponent * j

    def describe(self) -> dict[str, object]:
        return {"kind": self.kind.value, "exponent": self.exponent, "base": self.base.describe()}


class ProductCapacity(CapacityModel):
    """ξ(A×B) = μ(A)·ν(B), 차원 d + d′."""

    kind = CapacityKind.PRODUCT

    def __init__(self, left: CapacityModel, right: CapacityModel):
        super().__init__(min(left.max_dense_cells, right.max_dense_cells))
        self.left = left
        self.right = right
        self.dim = left.dim + right.dim
        self.is_probability = left.is_probability and right.is_probability
        depths = [m for m in (left.max_depth, right.max_depth) if m is not None]
        self.max_depth = min(depths) if depths else None

    def _outer(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a.reshape(a.shape + (1,) * b.ndim) + b.reshape((1,) * a.ndim + b.shape)

    def _compute_log_level(self, j: int) -> np.ndarray:
        return self._outer(self.left.log_level_masses(j), self.right.log_level_masses(j))

    def block_log_masses(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        d = self.left.dim
        a = self.left.block_log_masses(j, lo[:d], hi[:d])
        b = self.right.block_log_masses(j, lo[d:], hi[d:])
        return self._outer(a, b)

    def log_mass(self, cube: DyadicCube) -> float:
        self._check_cube(cube)
        d = self.left.dim
        return self.left.log_mass(DyadicCube(cube.level, cube.index[:d])) + self.right.log_mass(
            DyadicCube(cube.level, cube.index[d:])
        )

    def log_mass_extremes(self, j: int) -> tuple[float, float]:
        a_lo, a_hi = self.left.log_mass_extremes(j)
        b_lo, b_hi = self.right.log_mass_extremes(j)
        return a_lo + b_lo, a_hi + b_hi

    def log_partition(self, q: np.ndarray, j: int) -> np.ndarray:
        # 이중 합의 인수분해
        return self.left.log_partition(q, j) + self.right.log_partition(q, j)

    def describe(self) -> dict[str, object]:
        return {
            "kind": self.kind.value,
            "left": self.left.describe(),
            "right": self.right.describe(),
        }


class AuxiliaryCapacity(CapacityModel):
    """노드별 재정규화로 만든 보조 측도: 자식 가중치 ∝ mass(child)^r."""

    kind = CapacityKind.AUXILIARY

    def __init__(self, base: CapacityModel, r: float):
        super().__init__(base.max_dense_cells)
        self.base = base
        self.r = float(r)
        self.dim = base.dim
        self.max_depth = base.max_depth

    def _compute_log_level(self, j: int) -> np.ndarray:
        if j == 0:
            return np.zeros((1,) * self.dim)
        parent = self.log_level_masses(j - 1)
        n = parent.shape[0]
        base = self.base.log_level_masses(j)
        powered = np.where(np.isfinite(base), self.r * base, NEG_INF)
        raw = powered.reshape(_interleave_shape(n, self.dim)) * LN2
        with np.errstate(invalid="ignore", divide="ignore"):
            norm = logsumexp(raw, axis=_sibling_axes(self.dim), keepdims=True)
        p = parent.reshape(_interleave_shape(n, self.dim, 1))
        if np.any(np.isfinite(p) & ~np.isfinite(norm)):
            raise ConstructionError(f"All child weights vanish after powering at level {j}")
        with np.errstate(invalid="ignore"):
            child = np.where(np.isfinite(norm), (raw - norm) / LN2 + p, NEG_INF)
        return child.reshape((2 * n,) * self.dim)

    def describe(self) -> dict[str, object]:
        return {"kind": self.kind.value, "r": self.r, "base": self.base.describe()}


def auxiliary_model(base: CapacityModel, r: float) -> CapacityModel:
    """ν_r 생성. 정확한 cascade 는 가중치 w^r/Σw^r 의 cascade 를 돌려준다.

    Raises:
        PreconditionError: base 가 cascade/gibbs 계열이 아닌 경우
        ConstructionError: 거듭제곱 후 자식 가중치가 모두 0 인 경우
    """
    if isinstance(base, CascadeCapacity):
        w = base.weights.reshape(-1)
        powered = np.where(w > 0, np.power(np.where(w > 0, w, 1.0), r), 0.0)
        total = powered.sum()
        if total <= 0 or not np.isfinite(total):
            raise ConstructionError(f"All child weights vanish after powering with r={r}")
        return CascadeCapacity(powered / total, base.dim, max_dense_cells=base.max_dense_cells)
    if isinstance(base, (GibbsCapacity, AuxiliaryCapacity)):
        return AuxiliaryCapacity(base, r)
    raise PreconditionError(f"Auxiliary measures need a cascade or gibbs base, got {base.kind.value}")


# ----------------------------------------------------------------------
# 스케일링 함수와 Legendre 변환
# ----------------------------------------------------------------------


@dataclass
class ScalingTable:
    """격자 위의 τ(q), τ′(q), τ*(h)."""

    q_grid: np.ndarray
    tau: np.ndarray
    level_used: int
    deriv: np.ndarray
    h_grid: np.ndarray
    tau_star: np.ndarray
    dim: int = 1

    def _index(self, r: float) -> int | None:
        hits = np.flatnonzero(np.isclose(self.q_grid, r, rtol=0.0, atol=1e-9))
        return int(hits[0]) if len(hits) else None

    def _check_range(self, r: float) -> None:
        if not self.q_grid[0] - 1e-12 <= r <= self.q_grid[-1] + 1e-12:
            raise DomainError(
                f"r={r} outside q-grid range [{self.q_grid[0]}, {self.q_grid[-1]}]"
            )

    def tau_at(self, r: float) -> float:
        self._check_range(r)
        i = self._index(r)
        if i is not None:
            return float(self.tau[i])
        return float(np.interp(r, self.q_grid, self.tau))

    def h_at(self, r: float) -> float:
        """h^r = τ′(r)."""
        self._check_range(r)
        i = self._index(r)
        if i is not None:
            return float(self.deriv[i])
        return float(np.interp(r, self.q_grid, self.deriv))

    def dim_at(self, r: float) -> float:
        """dim(ν_r) = r h^r − τ(r)."""
        return r * self.h_at(r) - self.tau_at(r)

    @property
    def h_min(self) -> float:
        """h^{+∞} 근사 (격자 끝 미분)."""
        return float(self.deriv[-1])

    @property
    def h_max(self) -> float:
        """h^{−∞} 근사."""
        return float(self.deriv[0])

    def second_differences(self) -> np.ndarray:
        return np.diff(self.tau, 2)

    def is_concave(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.second_differences() <= tol))

    def legendre(self, h: np.ndarray) -> np.ndarray:
        return legendre_transform(
            self.q_grid, self.tau, h, slopes=self.deriv, floor=-float(self.dim)
        )


def default_q_grid(lo: float = -5.0, hi: float = 5.0, step: float = 0.01) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return np.round(np.linspace(lo, hi, n + 1), 12)


def scan_level(dim: int, max_cells: int = 1 << 22, cap: int = 16) -> int:
    """메모리 정책 안에서 쓸 수 있는 가장 깊은 레벨."""
    return max(1, min(cap, int(math.log2(max_cells)) // dim))


def scaling_function(
    model: CapacityModel,
    q_grid: Sequence[float] | np.ndarray,
    j: int,
    *,
    h_points: int = 201,
    exhaustive: bool = False,
) -> ScalingTable:
    """τ(q) = (1/−j) log₂ Σ_λ mass(λ)^q.

    Args:
        model: capacity 모델
        q_grid: 정렬된 q 격자
        j: 사용할 레벨 (≥ 1)
        h_points: τ* 를 샘플링할 h 점 수
        exhaustive: True 면 곱 모델도 인수분해 없이 레벨 배열 전체를 합산
    """
    if j < 1:
        raise DomainError(f"Scaling function needs j >= 1, got {j}")
    q = np.asarray(q_grid, dtype=float)
    if q.size == 0 or np.any(np.diff(q) <= 0):
        raise DomainError("q grid must be nonempty and strictly increasing")

    log_part = dense_log_partition(model, q, j) if exhaustive else model.log_partition(q, j)
    tau = -log_part / j
    deriv = central_slopes(q, tau)
    h = h_axis(deriv, h_points)
    table = ScalingTable(q, tau, j, deriv, h, np.empty(0), model.dim)
    table.tau_star = table.legendre(h) if len(h) else np.empty(0)
    logger.debug(f"Scaling function of {model.kind.value} at level {j}: {len(q)} q values")
    return table


def _local_table(model: CapacityModel, r: float, level: int | None, step: float) -> ScalingTable:
    j = level if level is not None else default_level(model)
    return scaling_function(model, [r - step, r, r + step], j, h_points=3)


def default_level(model: CapacityModel) -> int:
    level = scan_level(model.dim)
    if model.max_depth is not None:
        level = min(level, model.max_depth)
    return level


def h_of_r(
    model: CapacityModel,
    r: float,
    *,
    table: ScalingTable | None = None,
    level: int | None = None,
    step: float = 1e-2,
) -> float:
    """h^r = τ′(r) (중앙 차분)."""
    if table is None:
        table = _local_table(model, r, level, step)
    return table.h_at(r)


def dim_aux(
    model: CapacityModel,
    r: float,
    *,
    table: ScalingTable | None = None,
    level: int | None = None,
    step: float = 1e-2,
) -> float:
    """dim(ν_r) = r·h^r − τ(r)."""
    if table is None:
        table = _local_table(model, r, level, step)
    return table.dim_at(r)


# ----------------------------------------------------------------------
# 국소 차원, level set, 샘플링
# ----------------------------------------------------------------------


def local_dimension(
    model: CapacityModel, x: Sequence[float], j_min: int, j_max: int
) -> SlopeEstimate:
    """log₂ mass(λ_j(x)) 대 −j 기울기 (최소제곱, 최소 chord)."""
    if not j_min < j_max:
        raise DomainError(f"Empty window [{j_min}, {j_max}]")
    if model.max_depth is not None and j_max > model.max_depth:
        raise DomainError(f"Window end {j_max} exceeds max depth {model.max_depth}")
    levels = np.arange(j_min, j_max + 1)
    values = np.array([model.log_mass(cube_containing(x, int(j))) for j in levels])
    return log_scale_slopes(levels, values)


def ball_local_dimension(
    model: CapacityModel, x: Sequence[float], j_min: int, j_max: int
) -> SlopeEstimate:
    """log₂ mass(3λ_j(x)) 대 −j 기울기 (경계에서 잘라낸 이웃 큐브 질량의 합)."""
    if not j_min < j_max:
        raise DomainError(f"Empty window [{j_min}, {j_max}]")
    levels = np.arange(j_min, j_max + 1)
    values = []
    for j in levels:
        cubes = neighborhood_cubes(cube_containing(x, int(j)), 3)
        values.append(float(logsumexp([model.log_mass(c) * LN2 for c in cubes]) / LN2))
    return log_scale_slopes(levels, np.asarray(values))


def level_set_cubes(
    model: CapacityModel, j: int, interval: tuple[float, float], tol: float = 1e-12
) -> list[DyadicCube]:
    """log₂ mass/−j 가 구간 안에 있는 레벨 j 큐브."""
    if j < 1:
        raise DomainError(f"Level set needs j >= 1, got {j}")
    lo, hi = interval
    values = model.log_level_masses(j)
    with np.errstate(invalid="ignore"):
        exponents = -values / j
    mask = np.isfinite(exponents) & (exponents >= lo - tol) & (exponents <= hi + tol)
    return [DyadicCube(j, tuple(int(k) for k in idx)) for idx in np.argwhere(mask)]


def cascade_pattern_exponent(model: CascadeCapacity, pattern: str) -> float:
    """자릿수 pattern 을 반복한 점에서 1-D cascade 의 국소 차원 (자릿수 가중치의 평균)."""
    if model.dim != 1:
        raise DomainError(f"Digit patterns describe 1-D points, model has dim {model.dim}")
    w = model.weights.reshape(-1)
    return float(np.mean([-math.log2(w[int(c)]) for c in pattern]))


def sample_points(model: CapacityModel, J: int, n: int, rng_seed: int) -> np.ndarray:
    """dyadic 트리를 J 단계 내려가며 질량 비율로 자식 선택. 왼쪽 꼭짓점 (n, D) 반환."""
    if J < 1:
        raise DomainError(f"Sampling depth must be >= 1, got {J}")
    rng = np.random.default_rng(rng_seed)
    idx = np.zeros((n, model.dim), dtype=np.int64)
    offsets = _child_offsets(model.dim)
    for level in range(1, J + 1):
        weights = np.asarray(model.conditional_log_weights(level, idx), dtype=float)
        top = np.max(weights, axis=1, keepdims=True)
        if not np.all(np.isfinite(top)):
            raise SamplingError(f"Zero-mass parent encountered at level {level - 1}")
        probs = np.exp2(weights - top)
        cumulative = np.cumsum(probs, axis=1)
        u = rng.random(n) * cumulative[:, -1]
        choice = np.minimum((cumulative <= u[:, None]).sum(axis=1), offsets.shape[0] - 1)
        idx = 2 * idx + offsets[choice]
    return idx.astype(float) * 2.0 ** (-J)


def sample_point(model: CapacityModel, J: int, rng_seed: int) -> np.ndarray:
    return sample_points(model, J, 1, rng_seed)[0]


# ----------------------------------------------------------------------
# 진단
# ----------------------------------------------------------------------


@dataclass
class GoodSetReport:
    """A^{ν_r}_{n,m} 진단 결과."""

    n: int
    m: int
    r: float
    levels: list[int]
    h_r: float
    dim_r: float
    violating_counts: list[int]
    violating_mass: list[float]
    neighborhood_mass: list[float]
    estimated_level: int | None

    def to_dict(self) -> dict[str, object]:
        return {
            "n": self.n,
            "m": self.m,
            "r": self.r,
            "levels": self.levels,
            "h_r": self.h_r,
            "dim_r": self.dim_r,
            "violating_counts": self.violating_counts,
            "violating_mass": self.violating_mass,
            "neighborhood_mass": self.neighborhood_mass,
            "estimated_level": self.estimated_level,
        }


def good_set_report(
    base: CapacityModel,
    r: float,
    n: int,
    m: int,
    K: int,
    j_range: tuple[int, int],
    table: ScalingTable | None = None,
) -> GoodSetReport:
    """레벨마다 질량 샌드위치를 벗어나는 큐브를 센다."""
    j_lo, j_hi = j_range
    levels = list(range(j_lo, j_hi + 1))
    if table is None:
        table = _local_table(base, r, min(j_hi, default_level(base)), 1e-2)
    h_r = table.h_at(r)
    dim_r = table.dim_at(r)
    aux = auxiliary_model(base, r)
    size = K if K % 2 else K + 1
    tol = 1e-9

    counts: list[int] = []
    masses: list[float] = []
    dilated_masses: list[float] = []
    for j in levels:
        nu = base.log_level_masses(j)
        nu_r = aux.log_level_masses(j)
        viol = (
            (nu < -j * (h_r + 1.0 / m) - tol)
            | (nu > -j * (h_r - 1.0 / m) + tol)
            | (nu_r < -j * (dim_r + 1.0 / m) - tol)
            | (nu_r > -j * (dim_r - 1.0 / m) + tol)
        )
        weights = np.exp2(nu_r)
        counts.append(int(viol.sum()))
        masses.append(float(weights[viol].sum()))
        dilated = maximum_filter(viol.astype(np.uint8), size=size, mode="constant", cval=0) > 0
        dilated_masses.append(float(weights[dilated].sum()))
        logger.debug(f"Good set level {j}: {counts[-1]} violators, mass {masses[-1]:.4g}")

    tail = np.cumsum(np.asarray(masses[::-1]))[::-1]
    hits = np.flatnonzero(tail <= 1.0 / n)
    estimated = levels[int(hits[0])] if len(hits) else None
    return GoodSetReport(n, m, r, levels, h_r, dim_r, counts, masses, dilated_masses, estimated)


def auxiliary_sandwich(base: CapacityModel, r: float, j_max: int) -> dict[str, object]:
    """ν_r(I) / (ν(I)^r 2^{jτ(r)}) 의 레벨별 최소/최대."""
    aux = auxiliary_model(base, r)
    lows: list[float] = []
    highs: list[float] = []
    for j in range(1, j_max + 1):
        tau_r = float(-base.log_partition(np.array([r]), j)[0] / j)
        nu = base.log_level_masses(j)
        finite = np.isfinite(nu)
        ratio = aux.log_level_masses(j)[finite] - r * nu[finite] - j * tau_r
        lows.append(float(2.0 ** ratio.min()))
        highs.append(float(2.0 ** ratio.max()))
    spread = max(highs) / min(lows)
    return {"levels": list(range(1, j_max + 1)), "min": lows, "max": highs, "spread": spread}


@dataclass(frozen=True)
class Diagnostics:
    """doubling, quasi-Bernoulli 상수와 Hölder 지수 추정."""

    doubling: float
    quasi_bernoulli: float
    s1: float
    s2: float
    scan_level: int
    level: int


def holder_exponents(model: CapacityModel, j: int) -> tuple[float, float]:
    """최대/최소 질량의 레벨별 기울기로 (s₁, s₂) 추정."""
    levels = np.arange(1, max(j, 2) + 1)
    lows, highs = zip(*(model.log_mass_extremes(int(i)) for i in levels))
    s1 = float(fit_slopes(-levels, np.asarray(highs))) if np.all(np.isfinite(highs)) else 0.0
    s2 = float(fit_slopes(-levels, np.asarray(lows))) if np.all(np.isfinite(lows)) else np.inf
    return s1, s2


def diagnostics(model: CapacityModel, j: int) -> Diagnostics:
    """레벨 ≤ j 전수 조사 (메모리 정책을 넘으면 가능한 가장 깊은 레벨까지)."""
    limit = scan_level(model.dim, min(MAX_SCAN_CELLS, model.max_dense_cells))
    scan = max(1, min(j, limit))
    if scan < j:
        logger.info(f"Exhaustive scans capped at level {scan} (requested {j})")

    doubling = 1.0
    kernel = np.ones((3,) * model.dim)
    for i in range(1, scan + 1):
        masses = model.level_masses(i)
        around = correlate(masses, kernel, mode="constant", cval=0.0)
        positive = masses > 0
        if positive.any():
            doubling = max(doubling, float(np.max(around[positive] / masses[positive])))

    worst = 0.0
    for j1 in range(1, scan):
        for j2 in range(1, scan - j1 + 1):
            worst = max(worst, _quasi_bernoulli_gap(model, j1, j2))

    s1, s2 = holder_exponents(model, j)
    return Diagnostics(doubling, float(2.0**worst), s1, s2, scan, j)


def _quasi_bernoulli_gap(model: CapacityModel, j1: int, j2: int) -> float:
    dim = model.dim
    joined = model.log_level_masses(j1 + j2).reshape(
        tuple(s for _ in range(dim) for s in (1 << j1, 1 << j2))
    )
    a = model.log_level_masses(j1).reshape(_interleave_shape(1 << j1, dim, 1))
    b = model.log_level_masses(j2).reshape(_interleave_shape(1, dim, 1 << j2))
    with np.errstate(invalid="ignore"):
        gap = joined - a - b
    finite = np.isfinite(gap)
    return float(np.max(np.abs(gap[finite]))) if finite.any() else 0.0
