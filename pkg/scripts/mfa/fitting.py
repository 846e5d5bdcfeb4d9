"""
로그 스케일 회귀와 이산 Legendre 변환.

capacity(국소 차원, τ), analysis(leader 지수, ζ(q)) 가 공유한다.
"""

from dataclasses import dataclass

import numpy as np

# 빈 level set / 0 경로 표시
NEG_INF = float("-inf")
POS_INF = float("inf")


@dataclass(frozen=True)
class SlopeEstimate:
    """log₂ 값 대 −j 기울기 추정치."""

    ls_slope: float
    min_slope: float

    @property
    def is_sentinel(self) -> bool:
        return not np.isfinite(self.ls_slope)


def log_scale_slopes(levels: np.ndarray, log2_values: np.ndarray) -> SlopeEstimate:
    """log₂ v_j 를 −j 에 대해 회귀.

    Args:
        levels: 레벨 j 배열
        log2_values: 각 레벨의 log₂ 값 (0 이면 −inf)

    Returns:
        최소제곱 기울기와 최소 chord 기울기 (min_j log₂ v_j / −j).
        값 중 하나라도 −inf 이면 둘 다 +inf.
    """
    j = np.asarray(levels, dtype=float)
    y = np.asarray(log2_values, dtype=float)
    if len(j) < 2:
        raise ValueError("At least two levels are required for a slope fit")
    if not np.all(np.isfinite(y)):
        return SlopeEstimate(POS_INF, POS_INF)

    ls_slope = float(np.polyfit(-j, y, 1)[0])
    positive = j > 0
    min_slope = float(np.min(y[positive] / -j[positive])) if positive.any() else ls_slope
    return SlopeEstimate(ls_slope, min_slope)


def fit_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """y[:, i] 각 열의 x 에 대한 최소제곱 기울기."""
    coef = np.polyfit(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 1)
    return np.asarray(coef[0], dtype=float)


def central_slopes(q: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """격자 간격을 step 으로 하는 중앙 차분 (양 끝은 한쪽 차분)."""
    q = np.asarray(q, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if len(q) < 2:
        return np.full(len(q), np.nan)
    return np.gradient(tau, q)


def legendre_transform(
    q: np.ndarray,
    tau: np.ndarray,
    h: np.ndarray,
    *,
    slopes: np.ndarray | None = None,
    offset: float = 0.0,
    floor: float | None = None,
    tol: float = 1e-9,
) -> np.ndarray:
    """τ*(h) = offset + min_q (hq − τ(q)).

    slopes 범위 [min τ′, max τ′] 밖의 h 와 floor 미만 값은 −inf 로 표시한다.
    """
    q = np.asarray(q, dtype=float)
    tau = np.asarray(tau, dtype=float)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    finite = np.isfinite(tau)
    if not finite.any():
        return np.full(h.shape, NEG_INF)

    values = offset + np.min(h[:, None] * q[None, finite] - tau[None, finite], axis=1)
    if slopes is not None:
        s = np.asarray(slopes, dtype=float)
        s = s[np.isfinite(s)]
        if len(s) == 0:
            return np.full(h.shape, NEG_INF)
        values = np.where((h < s.min() - tol) | (h > s.max() + tol), NEG_INF, values)
    if floor is not None:
        values = np.where(values < floor, NEG_INF, values)
    return values


def h_axis(slopes: np.ndarray, n_points: int, tol: float = 1e-9) -> np.ndarray:
    """[min τ′, max τ′] 위의 h 격자. 폭이 tol 미만이면 한 점."""
    s = np.asarray(slopes, dtype=float)
    s = s[np.isfinite(s)]
    if len(s) == 0:
        return np.empty(0)
    lo, hi = float(s.min()), float(s.max())
    if hi - lo < tol:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, n_points)
