"""
[0,1)^D 위의 dyadic cube 기하와 인덱싱.

큐브는 반열린 구간의 곱 ∏ [k_i 2^{-j}, (k_i+1) 2^{-j}) 이다.
Nλ 근방은 단위 큐브 경계에서 잘라낸다 (wrap 하지 않음).
"""

from dataclasses import dataclass
from itertools import product
from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, order=True)
class DyadicCube:
    """레벨 j, 인덱스 벡터 k 로 식별되는 dyadic cube."""

    level: int
    index: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.level < 0:
            raise DomainError(f"Negative level: {self.level}")
        if not self.index:
            raise DomainError("Cube index must have at least one coordinate")
        size = 1 << self.level
        for k in self.index:
            if not 0 <= k < size:
                raise DomainError(f"Index {self.index} outside level {self.level}")

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def corner(self) -> np.ndarray:
        """왼쪽 아래 꼭짓점."""
        return np.asarray(self.index, dtype=float) * self.side

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.index, dtype=float) + 0.5) * self.side

    def contains(self, x: Sequence[float]) -> bool:
        point = np.asarray(x, dtype=float)
        lo = self.corner
        return bool(np.all(point >= lo) and np.all(point < lo + self.side))

    def to_text(self) -> str:
        """결과 파일용 직렬화 ("j:k1,k2,...")."""
        return f"{self.level}:" + ",".join(str(k) for k in self.index)

    @classmethod
    def from_text(cls, text: str) -> "DyadicCube":
        try:
            level_part, index_part = text.split(":")
            index = tuple(int(k) for k in index_part.split(","))
            return cls(int(level_part), index)
        except ValueError as e:
            if isinstance(e, DomainError):
                raise
            raise DomainError(f"Malformed cube text: {text!r}") from e


@dataclass(frozen=True)
class CubeBox:
    """Nλ: λ와 같은 중심, sup-norm 반지름 N·2^{-j-1}."""

    base: DyadicCube
    scale_factor: int

    def __post_init__(self) -> None:
        if self.scale_factor < 1:
            raise DomainError(f"Scale factor must be positive: {self.scale_factor}")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """[0,1]^D 로 잘라낸 (하한, 상한)."""
        radius = self.scale_factor * self.base.side / 2
        center = self.base.center
        return np.clip(center - radius, 0.0, 1.0), np.clip(center + radius, 0.0, 1.0)

    def cubes(self) -> list[DyadicCube]:
        n = self.scale_factor if self.scale_factor % 2 else self.scale_factor + 1
        return neighborhood_cubes(self.base, n)


def _validate_point(x: Sequence[float] | np.ndarray) -> np.ndarray:
    point = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(~np.isfinite(point)) or np.any(point < 0.0) or np.any(point >= 1.0):
        raise DomainError(f"Point {point.tolist()} outside [0,1)^D")
    return point


def cube_containing(x: Sequence[float] | np.ndarray, j: int) -> DyadicCube:
    """x 를 포함하는 레벨 j 큐브.

    Raises:
        DomainError: 좌표가 [0,1) 밖인 경우 (1.0 포함)
    """
    point = _validate_point(x)
    if j < 0:
        raise DomainError(f"Negative level: {j}")
    index = np.floor(point * (1 << j)).astype(np.int64)
    return DyadicCube(j, tuple(int(k) for k in index))


def clamp_unit(x: float, j_max: int) -> float:
    """x=1 을 분석할 때 쓰는 1 − 2^{-J_max} 클램프."""
    return min(float(x), 1.0 - 2.0 ** (-j_max))


def children(c: DyadicCube) -> list[DyadicCube]:
    """레벨 j+1 자식 2^D 개 (사전식 순서)."""
    base = [2 * k for k in c.index]
    return [
        DyadicCube(c.level + 1, tuple(b + o for b, o in zip(base, offset)))
        for offset in product((0, 1), repeat=c.dim)
    ]


def neighborhood_cubes(c: DyadicCube, n: int = 3) -> list[DyadicCube]:
    """Nλ 와 겹치는 레벨 j 큐브 (경계에서 잘라냄)."""
    if n < 1 or n % 2 == 0:
        raise DomainError(f"Neighborhood factor must be odd and positive: {n}")
    half = (n - 1) // 2
    size = 1 << c.level
    ranges = [range(max(k - half, 0), min(k + half, size - 1) + 1) for k in c.index]
    return [DyadicCube(c.level, idx) for idx in product(*ranges)]


def level_cubes(dim: int, j: int) -> Iterator[DyadicCube]:
    """Λ_j^D 전체를 사전식으로 나열."""
    size = 1 << j
    for idx in product(range(size), repeat=dim):
        yield DyadicCube(j, idx)


def cube_slices(c: DyadicCube, level: int) -> tuple[slice, ...]:
    """레벨 배열에서 c 에 포함된 후손 큐브를 가리키는 슬라이스."""
    if level < c.level:
        raise DomainError(f"Level {level} coarser than cube level {c.level}")
    scale = 1 << (level - c.level)
    return tuple(slice(k * scale, (k + 1) * scale) for k in c.index)


def pattern_point(pattern: str, depth: int) -> float:
    """이진 자릿수 pattern 을 depth 자리까지 반복한 점 (모두 1 이면 1 − 2^{-depth})."""
    if not pattern or set(pattern) - {"0", "1"}:
        raise DomainError(f"Digit pattern must be a nonempty binary string: {pattern!r}")
    digits = [int(pattern[i % len(pattern)]) for i in range(depth)]
    return float(sum(d * 2.0 ** (-(i + 1)) for i, d in enumerate(digits)))
