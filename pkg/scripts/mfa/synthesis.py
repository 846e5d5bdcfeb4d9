"""
웨이블릿 계수장 생성과 비균질 Besov 세미노름.

계수장 규약:
- 레벨 j 배열 shape = (2^j,)*D + (2^D − 1,), 마지막 축은 방향 l ∈ {0,1}^D \\ {0^D}
  (wavelet.orientations 의 사전식 순서)
- 계수는 L∞ 정규화: f = β(0)φ + Σ c_λ ψ_λ, ψ_λ(x) = ψ^l(2^j x − k)
- 곱 환경 ξ = μ ⊗ ν 에서 앞의 d 축은 μ, 뒤의 d′ 축은 ν

saturating / random member 계수장은 block 질의로 필요한 부분만 계산한다
(D = 2, J = 16 의 dense 레벨은 메모리 정책 밖).
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import polars as pl

from .capacity import MAX_DENSE_CELLS, CapacityModel, ProductCapacity, holder_exponents
from .errors import ConstructionError, PreconditionError, ShapeMismatchError
from .wavelet import OffsetSchedule, orientations

logger = logging.getLogger(__name__)

# seminorm 계산 시 한 번에 읽는 셀 수
CHUNK_CELLS = 1 << 22


class FieldKind(str, Enum):
    """계수장 종류."""

    DENSE = "dense"
    SATURATING = "saturating"
    GENERATOR = "generator"
    RANDOM = "random"
    COMBINATION = "combination"


def scale_factor(q: float, j: int) -> float:
    """j^{-2/q}, 2/∞ = 0 규약. 레벨 0 은 0."""
    if j == 0:
        return 0.0
    if math.isinf(q):
        return 1.0
    return float(j ** (-2.0 / q))


def orientation_index(dim: int, l: Sequence[int]) -> int:
    """방향 벡터의 마지막 축 인덱스."""
    try:
        return orientations(dim).index(tuple(int(v) for v in l))
    except ValueError as e:
        raise ShapeMismatchError(f"Orientation {tuple(l)} is not valid in dimension {dim}") from e


def _box_shape(lo: Sequence[int], hi: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(b) - int(a) for a, b in zip(lo, hi))


class CoefficientField(ABC):
    """레벨 0..J 의 웨이블릿 계수 (+ 스케일링 계수 β(0))."""

    kind: FieldKind
    dim: int
    max_level: int
    scaling_coefficient: float = 0.0
    environment: CapacityModel | None = None
    max_dense_cells: int = MAX_DENSE_CELLS

    @property
    def orientations(self) -> list[tuple[int, ...]]:
        return orientations(self.dim)

    @property
    def n_orientations(self) -> int:
        return (1 << self.dim) - 1

    @abstractmethod
    def block(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        """레벨 j 의 부분 박스 [lo, hi) 계수, shape = 박스 + (방향 수,)."""

    def level(self, j: int) -> np.ndarray:
        self._check_level(j)
        size = 1 << j
        return self.block(j, (0,) * self.dim, (size,) * self.dim)

    def materialize(self) -> "DenseField":
        total = sum((1 << (j * self.dim)) for j in range(self.max_level + 1))
        if total * self.n_orientations > self.max_dense_cells:
            raise PreconditionError(
                f"Materializing {self.kind.value} field (D={self.dim}, J={self.max_level}) "
                f"exceeds the dense memory policy"
            )
        levels = [self.level(j) for j in range(self.max_level + 1)]
        return DenseField(levels, self.scaling_coefficient, self.environment)

    def describe(self) -> dict[str, object]:
        return {
            "kind": self.kind.value,
            "dim": self.dim,
            "max_level": self.max_level,
            "scaling_coefficient": self.scaling_coefficient,
        }

    def _check_level(self, j: int) -> None:
        if not 0 <= j <= self.max_level:
            raise ShapeMismatchError(f"Level {j} outside field levels [0, {self.max_level}]")

    def _check_box(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> None:
        self._check_level(j)
        size = 1 << j
        if len(lo) != self.dim or len(hi) != self.dim:
            raise ShapeMismatchError(f"Box rank {len(lo)} does not match field dim {self.dim}")
        for a, b in zip(lo, hi):
            if not 0 <= a <= b <= size:
                raise ShapeMismatchError(f"Box [{lo}, {hi}) outside level {j}")


class DenseField(CoefficientField):
    """레벨별 배열을 그대로 들고 있는 계수장."""

    kind = FieldKind.DENSE

    def __init__(
        self,
        levels: Sequence[np.ndarray],
        scaling_coefficient: float = 0.0,
        environment: CapacityModel | None = None,
    ):
        if not levels:
            raise ShapeMismatchError("A field needs at least level 0")
        dim = levels[0].ndim - 1
        if dim < 1:
            raise ShapeMismatchError(f"Level arrays must have rank >= 2, got {levels[0].ndim}")
        n_or = (1 << dim) - 1
        arrays = []
        for j, arr in enumerate(levels):
            arr = np.asarray(arr, dtype=float)
            expected = (1 << j,) * dim + (n_or,)
            if arr.shape != expected:
                raise ShapeMismatchError(f"Level {j} has shape {arr.shape}, expected {expected}")
            if not np.all(np.isfinite(arr)):
                raise ConstructionError(f"Level {j} holds non-finite coefficients")
            arrays.append(arr)
        if not math.isfinite(scaling_coefficient):
            raise ConstructionError("Scaling coefficient must be finite")
        self.dim = dim
        self.max_level = len(arrays) - 1
        self.levels = arrays
        self.scaling_coefficient = float(scaling_coefficient)
        self.environment = environment
        if environment is not None:
            self.max_dense_cells = environment.max_dense_cells

    @classmethod
    def zeros(cls, dim: int, J: int) -> "DenseField":
        n_or = (1 << dim) - 1
        return cls([np.zeros((1 << j,) * dim + (n_or,)) for j in range(J + 1)])

    @classmethod
    def single(
        cls,
        dim: int,
        J: int,
        level: int,
        index: Sequence[int],
        orientation: Sequence[int],
        value: float,
    ) -> "DenseField":
        """계수 하나만 0 이 아닌 계수장."""
        out = cls.zeros(dim, J)
        out.levels[level][tuple(index) + (orientation_index(dim, orientation),)] = value
        return out

    def block(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        self._check_box(j, lo, hi)
        return self.levels[j][tuple(slice(a, b) for a, b in zip(lo, hi))]

    def level(self, j: int) -> np.ndarray:
        self._check_level(j)
        return self.levels[j]

    def materialize(self) -> "DenseField":
        return self


class SaturatingField(CoefficientField):
    """g_λ = j^{-2/q} ξ(λ), 방향 (l ≠ 0^d, l′ = 1^{d′}) 이고 k′ ≡ p_j (mod K) 일 때만."""

    kind = FieldKind.SATURATING

    def __init__(self, xi: CapacityModel, q: float, J: int, schedule: OffsetSchedule):
        if not isinstance(xi, ProductCapacity):
            raise PreconditionError(
                f"The saturating field needs a product capacity, got {xi.kind.value}"
            )
        if schedule.d_prime != xi.right.dim:
            raise ShapeMismatchError(
                f"Schedule built for d'={schedule.d_prime}, capacity has d'={xi.right.dim}"
            )
        if q < 1:
            raise PreconditionError(f"q must be >= 1, got {q}")
        schedule.require(J)
        self.xi = xi
        self.q = float(q)
        self.schedule = schedule
        self.dim = xi.dim
        self.d = xi.left.dim
        self.d_prime = xi.right.dim
        self.max_level = J
        self.environment = xi
        self.scaling_coefficient = 0.0
        self.max_dense_cells = xi.max_dense_cells

        self.support_orientations = [
            i
            for i, l in enumerate(orientations(self.dim))
            if any(l[: self.d]) and all(l[self.d :])
        ]

    def _congruence_mask(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        """뒤 d′ 축에서 k′ ≡ p_j (mod K) 인 위치."""
        K = self.schedule.support_length
        p = self.schedule.offset(j)
        mask = np.ones(_box_shape(lo[self.d :], hi[self.d :]), dtype=bool)
        for i in range(self.d_prime):
            axis = np.arange(lo[self.d + i], hi[self.d + i])
            hit = (axis - int(p[i])) % K == 0
            shape = [1] * self.d_prime
            shape[i] = len(axis)
            mask = mask & hit.reshape(shape)
        return mask

    def block(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        self._check_box(j, lo, hi)
        out = np.zeros(_box_shape(lo, hi) + (self.n_orientations,))
        factor = scale_factor(self.q, j)
        if factor == 0.0 or out.size == 0:
            return out
        mask = self._congruence_mask(j, lo, hi)
        if not mask.any():
            return out
        masses = np.exp2(self.xi.block_log_masses(j, lo, hi))
        values = factor * masses * mask.reshape((1,) * self.d + mask.shape)
        for i in self.support_orientations:
            out[..., i] = values
        return out

    def describe(self) -> dict[str, object]:
        return {
            **super().describe(),
            "q": self.q,
            "xi": self.xi.describe(),
            "schedule": self.schedule.to_dict(),
        }


class GeneratorField(CoefficientField):
    """𝒢^(i): j mod (d₁N) ∈ [(i−1)N, iN) 인 레벨에서만 𝒢_q 를 유지."""

    kind = FieldKind.GENERATOR

    def __init__(self, base: SaturatingField, index: int, d1: int):
        if not 1 <= index <= d1:
            raise ShapeMismatchError(f"Generator index {index} outside [1, {d1}]")
        self.base = base
        self.index = index
        self.d1 = d1
        self.window = base.schedule.window
        self.dim = base.dim
        self.max_level = base.max_level
        self.environment = base.environment
        self.scaling_coefficient = 0.0
        self.max_dense_cells = base.max_dense_cells

    def keeps(self, j: int) -> bool:
        N = self.window
        return (self.index - 1) * N <= j % (self.d1 * N) < self.index * N

    def block(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        if self.keeps(j):
            return self.base.block(j, lo, hi)
        self._check_box(j, lo, hi)
        return np.zeros(_box_shape(lo, hi) + (self.n_orientations,))

    def describe(self) -> dict[str, object]:
        return {**super().describe(), "index": self.index, "d1": self.d1, "base": self.base.describe()}


def generator_fields(
    xi: CapacityModel,
    q: float,
    J: int,
    schedule: OffsetSchedule,
    p: int,
    d: int | None = None,
) -> list[GeneratorField]:
    """d₁ = p(d+1) 개의 생성자 계수장."""
    base = SaturatingField(xi, q, J, schedule)
    d = base.d if d is None else d
    d1 = p * (d + 1)
    return [GeneratorField(base, i, d1) for i in range(1, d1 + 1)]


class RandomMemberField(CoefficientField):
    """c_λ = u_λ j^{-2/q} ξ(λ), u_λ 는 균등 부호 × [lo, hi] 균등 크기.

    난수는 (seed, j, 행 묶음) 으로 시드를 정해 block 질의 순서와 무관하게 재현된다.
    행은 마지막 축 인덱스이다.
    """

    kind = FieldKind.RANDOM

    def __init__(
        self,
        xi: CapacityModel,
        q: float,
        J: int,
        seed: int,
        magnitude: tuple[float, float] = (0.5, 1.0),
    ):
        lo, hi = magnitude
        if not 0 <= lo <= hi:
            raise PreconditionError(f"Invalid magnitude range {magnitude}")
        if q < 1:
            raise PreconditionError(f"q must be >= 1, got {q}")
        self.xi = xi
        self.q = float(q)
        self.seed = int(seed)
        self.magnitude = (float(lo), float(hi))
        self.dim = xi.dim
        self.max_level = J
        self.environment = xi
        self.scaling_coefficient = 0.0
        self.max_dense_cells = xi.max_dense_cells
        # 1-D 는 행 하나가 계수 한 개라 묶어서 생성
        self.row_group = 64 if self.dim == 1 else 1

    def _group_values(self, j: int, group: int) -> np.ndarray:
        size = 1 << j
        rows = min(self.row_group, size)
        rng = np.random.default_rng([self.seed, j, group])
        shape = (size,) * (self.dim - 1) + (rows, self.n_orientations)
        signs = rng.integers(0, 2, size=shape) * 2 - 1
        return signs * rng.uniform(self.magnitude[0], self.magnitude[1], size=shape)

    def multipliers(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        """u_λ 블록."""
        g = self.row_group
        first, last = lo[-1] // g, (hi[-1] - 1) // g
        parts = [self._group_values(j, group) for group in range(first, last + 1)]
        rows = np.concatenate(parts, axis=self.dim - 1)
        offset = first * g
        index = tuple(slice(a, b) for a, b in zip(lo[:-1], hi[:-1])) + (
            slice(lo[-1] - offset, hi[-1] - offset),
        )
        return rows[index]

    def block(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        self._check_box(j, lo, hi)
        factor = scale_factor(self.q, j)
        shape = _box_shape(lo, hi) + (self.n_orientations,)
        if factor == 0.0 or 0 in shape:
            return np.zeros(shape)
        masses = np.exp2(self.xi.block_log_masses(j, lo, hi))
        return factor * masses[..., None] * self.multipliers(j, lo, hi)

    def describe(self) -> dict[str, object]:
        return {
            **super().describe(),
            "q": self.q,
            "seed": self.seed,
            "magnitude": list(self.magnitude),
            "xi": self.xi.describe(),
        }


def random_member(
    xi: CapacityModel, q: float, J: int, rng_seed: int, magnitude: tuple[float, float] = (0.5, 1.0)
) -> RandomMemberField:
    return RandomMemberField(xi, q, J, rng_seed, magnitude)


class LinearCombinationField(CoefficientField):
    """Σ_i w_i f_i (항마다 block 을 합산)."""

    kind = FieldKind.COMBINATION

    def __init__(self, terms: Sequence[tuple[float, CoefficientField]]):
        if not terms:
            raise ShapeMismatchError("A linear combination needs at least one term")
        dim = terms[0][1].dim
        J = terms[0][1].max_level
        for _, f in terms:
            if f.dim != dim or f.max_level != J:
                raise ShapeMismatchError(
                    f"Cannot combine fields (D={f.dim}, J={f.max_level}) and (D={dim}, J={J})"
                )
        self.terms = [(float(w), f) for w, f in terms]
        self.dim = dim
        self.max_level = J
        self.environment = terms[0][1].environment
        self.max_dense_cells = min(f.max_dense_cells for _, f in self.terms)
        self.scaling_coefficient = float(sum(w * f.scaling_coefficient for w, f in self.terms))

    def block(self, j: int, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        self._check_box(j, lo, hi)
        out = np.zeros(_box_shape(lo, hi) + (self.n_orientations,))
        for w, f in self.terms:
            if w != 0.0:
                out += w * f.block(j, lo, hi)
        return out

    def describe(self) -> dict[str, object]:
        return {
            **super().describe(),
            "terms": [{"weight": w, "field": f.describe()} for w, f in self.terms],
        }


def combine(
    f: CoefficientField, betas: Sequence[float] | np.ndarray, generators: Sequence[CoefficientField]
) -> LinearCombinationField:
    """f^β = f + Σ_i β_i 𝒢^(i).

    Raises:
        ShapeMismatchError: β 길이와 생성자 수, 또는 차원/레벨 불일치
    """
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    if len(betas) != len(generators):
        raise ShapeMismatchError(f"{len(betas)} coefficients for {len(generators)} generator fields")
    return LinearCombinationField([(1.0, f)] + list(zip(betas.tolist(), generators)))


# ----------------------------------------------------------------------
# 세미노름
# ----------------------------------------------------------------------


@dataclass
class SeminormProfile:
    """ε_j^{ξ,p} 레벨 값과 ℓ^q 집계."""

    p: float
    q: float
    levels: np.ndarray
    aggregate: float
    shift: float = 0.0
    failures: list[int] = field(default_factory=list)
    tail_slope: float = float("nan")

    @property
    def converges(self) -> bool:
        """ℓ^q 수렴 판정. q = ∞ 는 유한한 sup, q < ∞ 는 꼬리 감쇠 기울기 < −1."""
        if self.failures or not np.isfinite(self.aggregate):
            return False
        if math.isinf(self.q):
            return True
        return bool(np.isnan(self.tail_slope) or self.tail_slope < -1.0)

    def to_frame(self) -> pl.DataFrame:
        return pl.DataFrame({"level": np.arange(len(self.levels)), "epsilon": self.levels})

    def to_dict(self) -> dict[str, object]:
        return {
            "p": self.p,
            "q": self.q,
            "shift": self.shift,
            "aggregate": self.aggregate,
            "converges": self.converges,
            "failures": self.failures,
            "tail_slope": self.tail_slope,
            "levels": self.levels.tolist(),
        }


def _lp_norm(values: np.ndarray, p: float) -> float:
    if values.size == 0:
        return 0.0
    if math.isinf(p):
        return float(values.max())
    return float(np.sum(values**p) ** (1.0 / p))


def _tail_slope(levels: np.ndarray, q: float) -> float:
    """log ε_j^q 대 log j 기울기 (뒤쪽 절반의 양수 레벨)."""
    j = np.arange(len(levels))
    keep = (j >= max(1, len(levels) // 2)) & (levels > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(j[keep]), q * np.log(levels[keep]), 1)[0])


def seminorm(
    f: CoefficientField,
    env: CapacityModel,
    p: float,
    q: float,
    shift: float = 0.0,
    s1: float | None = None,
) -> SeminormProfile:
    """환경 ξ^{(−shift)} 에 대한 |f|_{ξ,p,q}.

    ε_j = ‖(c_λ / ξ^{(−shift)}(λ))_{λ ∈ Λ_j × L^D}‖_{ℓ^p}. c_λ = 0 항은 0 으로,
    ξ(λ) = 0 이면서 c_λ ≠ 0 인 레벨은 failures 에 기록하고 ε_j = ∞.

    Raises:
        ShapeMismatchError: 환경 차원 불일치
        PreconditionError: shift ≥ s₁ 추정치
    """
    if env.dim != f.dim:
        raise ShapeMismatchError(f"Environment dim {env.dim} does not match field dim {f.dim}")
    if p < 1 or q < 1:
        raise PreconditionError(f"p and q must be >= 1, got p={p}, q={q}")
    if shift < 0:
        raise PreconditionError(f"Shift must be non-negative, got {shift}")
    if shift > 0:
        if s1 is None:
            level = 12 if env.max_depth is None else min(12, env.max_depth)
            s1, _ = holder_exponents(env, level)
        if shift >= s1:
            raise PreconditionError(f"Shift {shift:.6g} is not below the estimated s1={s1:.6g}")

    eps = np.zeros(f.max_level + 1)
    failures: list[int] = []
    for j in range(f.max_level + 1):
        size = 1 << j
        row_cells = (1 << (j * (f.dim - 1))) * f.n_orientations
        step = max(1, min(size, CHUNK_CELLS // max(row_cells, 1)))
        acc = 0.0
        failed = False
        for start in range(0, size, step):
            lo = (start,) + (0,) * (f.dim - 1)
            hi = (min(start + step, size),) + (size,) * (f.dim - 1)
            coeffs = np.abs(f.block(j, lo, hi))
            log_env = env.block_log_masses(j, lo, hi)[..., None] + shift * j
            nonzero = coeffs > 0
            zero_mass = ~np.isfinite(log_env)
            if np.any(nonzero & np.broadcast_to(zero_mass, coeffs.shape)):
                failed = True
                break
            with np.errstate(over="ignore", invalid="ignore"):
                ratio = np.where(nonzero, coeffs * np.exp2(-np.where(zero_mass, 0.0, log_env)), 0.0)
            if math.isinf(p):
                acc = max(acc, float(ratio.max()) if ratio.size else 0.0)
            else:
                acc += float(np.sum(ratio**p))
        if failed:
            failures.append(j)
            eps[j] = np.inf
        else:
            eps[j] = acc if math.isinf(p) else acc ** (1.0 / p)
        logger.debug(f"Seminorm level {j}: eps={eps[j]:.6g}")

    if failures:
        logger.warning(f"Coefficients on zero-mass cubes at levels {failures}")
    aggregate = _lp_norm(eps, q)
    return SeminormProfile(p, q, eps, aggregate, shift, failures, _tail_slope(eps, q))


def tilde_metric(
    f: CoefficientField,
    g: CoefficientField,
    env: CapacityModel,
    p: float,
    q: float,
    n_max: int,
    s1: float | None = None,
) -> float:
    """Σ_{n > max(1, 1/s₁)} 2^{-n} δ_n / (1 + δ_n), δ_n 은 ξ^{(−1/n)} 세미노름 + |Δβ(0)|."""
    if s1 is None:
        level = 12 if env.max_depth is None else min(12, env.max_depth)
        s1, _ = holder_exponents(env, level)
    if s1 <= 0:
        raise PreconditionError(f"Metric needs a positive s1, got {s1:.6g}")
    diff = LinearCombinationField([(1.0, f), (-1.0, g)])
    first = int(math.floor(max(1.0, 1.0 / s1))) + 1
    total = 0.0
    for n in range(first, n_max + 1):
        profile = seminorm(diff, env, p, q, shift=1.0 / n, s1=s1)
        delta = profile.aggregate + abs(f.scaling_coefficient - g.scaling_coefficient)
        term = 1.0 if math.isinf(delta) else delta / (1.0 + delta)
        total += 2.0 ** (-n) * term
    return total
