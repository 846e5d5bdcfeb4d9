"""
Wavelet leader, 점별 Hölder 지수, 경험적 특이 스펙트럼, 예측 곡선.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Sequence

import numpy as np
import polars as pl
from scipy.ndimage import maximum_filter
from scipy.special import logsumexp

from .capacity import (
    LN2,
    CapacityModel,
    ScalingTable,
    default_level,
    default_q_grid,
    scaling_function,
)
from .dyadic import cube_containing
from .errors import DomainError
from .fitting import (
    NEG_INF,
    SlopeEstimate,
    central_slopes,
    fit_slopes,
    h_axis,
    legendre_transform,
    log_scale_slopes,
)
from .synthesis import CoefficientField

logger = logging.getLogger(__name__)

# 레벨당 이보다 적은 양의 leader 는 low-confidence
MIN_LEADERS = 8


class SpectrumMethod(str, Enum):
    LEADER_LEGENDRE = "leader-legendre"
    LEADER_HISTOGRAM = "leader-histogram"


@dataclass
class LeaderField:
    """레벨별 L_λ ≥ 0 배열 (shape (2^j,)*d)."""

    dim: int
    levels: list[np.ndarray]

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    def at(self, x: Sequence[float], j: int) -> float:
        return float(self.levels[j][cube_containing(x, j).index])


def _subtree_max(M: np.ndarray, dim: int) -> np.ndarray:
    """자식 레벨 배열의 부모별 최대."""
    n = M.shape[0] // 2
    shape = tuple(s for _ in range(dim) for s in (n, 2))
    return M.reshape(shape).max(axis=tuple(2 * i + 1 for i in range(dim)))


def leaders(f: CoefficientField) -> LeaderField:
    """아래에서 위로: M(λ) = max(|c_λ|, 자식 M), L_λ = 3λ 위의 M 최대 (경계 잘라냄)."""
    dim = f.dim
    M: np.ndarray | None = None
    out: list[np.ndarray] = [np.empty(0)] * (f.max_level + 1)
    for j in range(f.max_level, -1, -1):
        own = np.abs(f.level(j)).max(axis=-1)
        M = own if M is None else np.maximum(own, _subtree_max(M, dim))
        out[j] = maximum_filter(M, size=3, mode="constant", cval=0.0)
    return LeaderField(dim, out)


def brute_force_leaders(f: CoefficientField) -> LeaderField:
    """정의대로 3λ 안의 모든 후손을 직접 열거 (작은 J 검증용)."""
    dim = f.dim
    magnitudes = [np.abs(f.level(j)).max(axis=-1) for j in range(f.max_level + 1)]
    out = []
    for j in range(f.max_level + 1):
        size = 1 << j
        L = np.zeros((size,) * dim)
        for index in product(range(size), repeat=dim):
            best = 0.0
            for jp in range(j, f.max_level + 1):
                scale = 1 << (jp - j)
                region = tuple(
                    slice(max(k - 1, 0) * scale, min(k + 2, size) * scale) for k in index
                )
                best = max(best, float(magnitudes[jp][region].max()))
            L[index] = best
        out.append(L)
    return LeaderField(dim, out)


def pointwise_exponent(lf: LeaderField, x: Sequence[float], j_min: int, j_max: int) -> SlopeEstimate:
    """log₂ L_{λ_j(x)} 대 −j 기울기. 0 인 leader 가 있으면 +∞."""
    if not 0 <= j_min < j_max <= lf.max_level:
        raise DomainError(f"Window [{j_min}, {j_max}] outside leader levels [0, {lf.max_level}]")
    levels = np.arange(j_min, j_max + 1)
    with np.errstate(divide="ignore"):
        values = np.log2([lf.at(x, int(j)) for j in levels])
    return log_scale_slopes(levels, values)


def exponent_map(lf: LeaderField, xs: np.ndarray, window: tuple[int, int]) -> pl.DataFrame:
    """(x, h_hat, min_slope) 행."""
    points = np.asarray(xs, dtype=float).reshape(len(xs), -1)
    estimates = [pointwise_exponent(lf, x, *window) for x in points]
    columns: dict[str, object] = {}
    if lf.dim == 1:
        columns["x"] = points[:, 0]
    else:
        for i in range(lf.dim):
            columns[f"x{i}"] = points[:, i]
    columns["h_hat"] = [e.ls_slope for e in estimates]
    columns["min_slope"] = [e.min_slope for e in estimates]
    return pl.DataFrame(columns)


@dataclass
class SpectrumEstimate:
    """추정 스펙트럼 σ̂(h)."""

    h_grid: np.ndarray
    sigma_hat: np.ndarray
    method: SpectrumMethod
    window: tuple[int, int]
    low_confidence: bool = False
    metadata: dict[str, object] = field(default_factory=dict)

    @property
    def peak(self) -> tuple[float, float]:
        i = int(np.argmax(self.sigma_hat))
        return float(self.h_grid[i]), float(self.sigma_hat[i])

    def to_frame(self) -> pl.DataFrame:
        return pl.DataFrame({"h": self.h_grid, "sigma_hat": self.sigma_hat})


def _check_window(lf: LeaderField, window: tuple[int, int]) -> np.ndarray:
    j_min, j_max = window
    if not 0 <= j_min < j_max <= lf.max_level:
        raise DomainError(f"Window {window} outside leader levels [0, {lf.max_level}]")
    return np.arange(j_min, j_max + 1)


def default_window(J: int, margin: int = 2) -> tuple[int, int]:
    """기본 적합 창 [6, J − margin] (짧은 장은 [1, J])."""
    if J - margin > 6:
        return 6, J - margin
    return 1, J


def leader_spectrum(
    lf: LeaderField,
    q_grid: Sequence[float] | np.ndarray | None = None,
    h_grid: Sequence[float] | np.ndarray | None = None,
    window: tuple[int, int] | None = None,
    *,
    h_points: int = 201,
) -> SpectrumEstimate:
    """구조 함수 S_j(q) = 2^{-jd} Σ L^q (양의 leader), ζ(q) 는 log₂ S_j 의 −j 기울기,
    σ̂(h) = d + min_q (qh − ζ(q)).
    """
    window = window or default_window(lf.max_level)
    levels = _check_window(lf, window)
    q = default_q_grid() if q_grid is None else np.asarray(q_grid, dtype=float)

    log_s = np.empty((len(levels), len(q)))
    counts = []
    for row, j in enumerate(levels):
        values = lf.levels[int(j)].reshape(-1)
        positive = values[values > 0]
        counts.append(len(positive))
        if len(positive) == 0:
            log_s[row] = NEG_INF
            continue
        logs = np.log2(positive)
        log_s[row] = logsumexp(q[:, None] * logs[None, :] * LN2, axis=1) / LN2 - j * lf.dim

    low = min(counts) < MIN_LEADERS
    if low:
        logger.warning(f"Fewer than {MIN_LEADERS} positive leaders on some level of {window}")
    if not np.all(np.isfinite(log_s)):
        h = np.asarray(h_grid, dtype=float) if h_grid is not None else np.empty(0)
        return SpectrumEstimate(
            h,
            np.full(h.shape, NEG_INF),
            SpectrumMethod.LEADER_LEGENDRE,
            window,
            True,
            {"dimension_offset": lf.dim, "counts": counts},
        )

    zeta = fit_slopes(-levels.astype(float), log_s)
    slopes = central_slopes(q, zeta)
    h = h_axis(slopes, h_points) if h_grid is None else np.asarray(h_grid, dtype=float)
    sigma = legendre_transform(q, zeta, h, slopes=slopes, offset=float(lf.dim), floor=0.0)
    return SpectrumEstimate(
        h,
        sigma,
        SpectrumMethod.LEADER_LEGENDRE,
        window,
        low,
        {
            "dimension_offset": lf.dim,
            "normalization": "2^(-jd) sum L^q",
            "q_range": [float(q[0]), float(q[-1])],
            "counts": counts,
            "zeta": zeta.tolist(),
        },
    )


def histogram_spectrum(
    lf: LeaderField,
    h_grid: Sequence[float] | np.ndarray,
    window: tuple[int, int] | None = None,
) -> SpectrumEstimate:
    """σ̂(h) = log₂ #{λ ∈ Λ_j : L_λ ∈ 2^{-j(h ± δ)}} 의 j 기울기, δ = h 격자 반 간격.

    어떤 레벨에서든 빈 구간이면 −∞.
    """
    window = window or default_window(lf.max_level)
    levels = _check_window(lf, window)
    h = np.asarray(h_grid, dtype=float)
    if window[0] < 1:
        raise DomainError(f"Histogram window must start at level >= 1, got {window}")
    delta = 0.5 * float(h[1] - h[0]) if len(h) > 1 else 0.05

    log_counts = np.empty((len(levels), len(h)))
    for row, j in enumerate(levels):
        values = lf.levels[int(j)].reshape(-1)
        exponents = -np.log2(values[values > 0]) / j
        e = exponents[:, None]
        inside = (e >= h[None, :] - delta) & (e < h[None, :] + delta)
        with np.errstate(divide="ignore"):
            log_counts[row] = np.log2(inside.sum(axis=0).astype(float))

    sigma = np.full(len(h), NEG_INF)
    populated = np.all(np.isfinite(log_counts), axis=0)
    if populated.any():
        sigma[populated] = fit_slopes(levels.astype(float), log_counts[:, populated])
    return SpectrumEstimate(
        h,
        sigma,
        SpectrumMethod.LEADER_HISTOGRAM,
        window,
        bool(not populated.any()),
        {"delta": delta, "populated_bins": int(populated.sum())},
    )


# ----------------------------------------------------------------------
# 예측 곡선
# ----------------------------------------------------------------------


@dataclass
class PredictedCurves:
    """σ_μ(h − shift) 와 모든 a 에 대한 상한 (h > h_μ⁰ + shift 에서 d)."""

    h: np.ndarray
    prevalent: np.ndarray
    upper_bound: np.ndarray
    shift: float
    h_mu0: float
    selector: str
    dim: int

    def to_frame(self) -> pl.DataFrame:
        return pl.DataFrame(
            {"h": self.h, "sigma_pred": self.prevalent, "upper_bound": self.upper_bound}
        )

    def support(self) -> tuple[float, float]:
        finite = np.isfinite(self.prevalent)
        if not finite.any():
            return math.nan, math.nan
        return float(self.h[finite].min()), float(self.h[finite].max())


def nu_shift(nu: CapacityModel, r: float | str, table: ScalingTable) -> float:
    """shift 선택: "min" 은 h_ν^min, "max" 는 h_ν^max, 실수 r 은 h_ν^r."""
    if r == "min":
        return table.h_min
    if r == "max":
        return table.h_max
    if isinstance(r, str):
        raise DomainError(f"Unknown shift selector: {r}")
    return table.h_at(float(r))


def predicted_curves(
    mu: CapacityModel,
    nu: CapacityModel,
    r: float | str,
    *,
    mu_table: ScalingTable | None = None,
    nu_table: ScalingTable | None = None,
    h_points: int = 201,
) -> PredictedCurves:
    """Trace 스펙트럼 예측: σ_μ(h − shift), −∞ 는 supp σ_μ + shift 밖."""
    if mu_table is None:
        mu_table = scaling_function(mu, default_q_grid(), default_level(mu), h_points=h_points)
    if nu_table is None:
        nu_table = scaling_function(nu, default_q_grid(), default_level(nu), h_points=h_points)
    shift = nu_shift(nu, r, nu_table)
    h_mu0 = mu_table.h_at(0.0)

    h = mu_table.h_grid + shift
    prevalent = mu_table.tau_star.copy()
    upper = np.where(h <= h_mu0 + shift + 1e-12, prevalent, float(mu.dim))
    return PredictedCurves(h, prevalent, upper, shift, h_mu0, str(r), mu.dim)


def spectrum_deviation(
    estimate: SpectrumEstimate, predicted: PredictedCurves, central_fraction: float = 0.8
) -> float:
    """예측 지지 구간 가운데 central_fraction 부분에서 max |σ̂ − σ_pred|."""
    lo, hi = predicted.support()
    if not np.isfinite(lo):
        return math.inf
    margin = 0.5 * (1.0 - central_fraction) * (hi - lo)
    inside = (predicted.h >= lo + margin - 1e-12) & (predicted.h <= hi - margin + 1e-12)
    if not inside.any():
        return math.inf
    h = predicted.h[inside]
    finite = np.isfinite(estimate.sigma_hat)
    if finite.sum() < 2:
        return math.inf
    eh = estimate.h_grid[finite]
    if h.min() < eh.min() - 1e-9 or h.max() > eh.max() + 1e-9:
        return math.inf
    values = np.interp(h, eh, estimate.sigma_hat[finite])
    return float(np.max(np.abs(values - predicted.prevalent[inside])))
