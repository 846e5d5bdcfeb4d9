"""
수평 초평면 𝒞_a = [0,1]^d × {a} 위의 trace 계수.

세 경로:
- closed-form: saturating 계수장의 닫힌 식 e_λ(a)
- tensor: 일반 계수장에서 a 의 웨이블릿 값과 축약 (d^F, d^G 분리)
- grid: 격자에서 웨이블릿 급수를 직접 평가 (오라클, dwt_periodic 으로 되돌림)
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
import polars as pl

from .capacity import CapacityModel, dim_aux, h_of_r
from .dyadic import DyadicCube, cube_containing, neighborhood_cubes
from .errors import PreconditionError, ShapeMismatchError
from .synthesis import CoefficientField, DenseField, scale_factor
from .wavelet import (
    DwtResult,
    OffsetSchedule,
    WaveletSpec,
    dwt_periodic,
    eval_G,
    eval_mother,
    orientations,
)

logger = logging.getLogger(__name__)


class TraceRoute(str, Enum):
    CLOSED_FORM = "closed-form"
    TENSOR = "tensor"
    GRID = "grid"


@dataclass
class TraceResult:
    """f_a 의 계수 (d 차원 계수장) 와 스케일링 부분 d^G."""

    a: np.ndarray
    r: float
    field: DenseField
    route: TraceRoute
    dG_profile: list[np.ndarray] | None = None
    first_valid_level: int | None = None

    def sidecar(self) -> dict[str, object]:
        return {
            "a": self.a.tolist(),
            "r": None if math.isnan(self.r) else self.r,
            "route": self.route.value,
            "first_valid_level": self.first_valid_level,
            "has_dG": self.dG_profile is not None,
        }


def _check_point(a: Sequence[float] | np.ndarray) -> np.ndarray:
    point = np.atleast_1d(np.asarray(a, dtype=float))
    if np.any(point <= 0.0) or np.any(point > 1.0):
        raise ShapeMismatchError(f"Trace height {point.tolist()} outside (0,1]")
    return point


def k_index(schedule: OffsetSchedule, a: Sequence[float] | np.ndarray, j: int) -> tuple[np.ndarray, bool]:
    """k_j(a) = p_j + ⌊(2^j a − p_j)/K⌋ K.

    음수/범위 밖 값도 그대로 돌려주며, 0 < k < 2^j 일 때만 valid.
    """
    point = np.atleast_1d(np.asarray(a, dtype=float))
    p = schedule.offset(j).astype(np.int64)
    K = schedule.support_length
    k = p + np.floor((np.ldexp(point, j) - p) / K).astype(np.int64) * K
    valid = bool(np.all(k > 0) and np.all(k < (1 << j)))
    return k, valid


def saturating_trace(
    mu: CapacityModel,
    nu: CapacityModel,
    schedule: OffsetSchedule,
    spec: WaveletSpec,
    q: float,
    a: Sequence[float] | np.ndarray,
    J: int,
    r: float = float("nan"),
) -> TraceResult:
    """e_λ(a) = j^{-2/q} μ(λ^d) ν(λ_{j,k_j(a)}) G_j^{d′}(a), 모든 l ≠ 0^d 방향에 같은 값.

    k_j(a) 가 유효하지 않은 레벨은 0 이다.
    """
    point = _check_point(a)
    if len(point) != nu.dim or schedule.d_prime != nu.dim:
        raise ShapeMismatchError(
            f"Height dim {len(point)} / schedule d'={schedule.d_prime} / nu dim {nu.dim} differ"
        )
    if schedule.support_length != spec.support_length:
        raise ShapeMismatchError(
            f"Schedule built for K={schedule.support_length}, wavelet has K={spec.support_length}"
        )
    schedule.require(J)
    d = mu.dim
    n_or = (1 << d) - 1
    levels = [np.zeros((1,) * d + (n_or,))]
    first_valid: int | None = None
    for j in range(1, J + 1):
        k, valid = k_index(schedule, point, j)
        shape = (1 << j,) * d + (n_or,)
        if not valid:
            levels.append(np.zeros(shape))
            continue
        if first_valid is None:
            first_valid = j
        g = float(np.prod(eval_G(spec, np.ldexp(point, j) - schedule.offset(j))))
        nu_mass = 2.0 ** nu.log_mass(DyadicCube(j, tuple(int(v) for v in k)))
        values = scale_factor(q, j) * nu_mass * g * mu.level_masses(j)
        levels.append(np.repeat(values[..., None], n_or, axis=-1))
    logger.debug(f"Closed-form trace at a={point.tolist()}: first valid level {first_valid}")
    return TraceResult(point, r, DenseField(levels), TraceRoute.CLOSED_FORM, None, first_valid)


def _axis_values(spec: WaveletSpec, a: float, j: int) -> tuple[int, int, np.ndarray, np.ndarray]:
    """a 를 덮는 k′ 범위 [lo, hi) 와 그 위의 φ, ψ 값."""
    size = 1 << j
    top = min(int(math.floor(math.ldexp(a, j))), size - 1)
    lo = max(top - spec.support_length + 1, 0)
    hi = top + 1
    y = math.ldexp(a, j) - np.arange(lo, hi)
    return lo, hi, eval_mother(spec, 0, y), eval_mother(spec, 1, y)


def _contract(block: np.ndarray, weights: list[np.ndarray], d: int) -> np.ndarray:
    """뒤 d′ 축을 축별 가중치와 축약."""
    out = block
    for w in reversed(weights):
        out = np.tensordot(out, w, axes=([out.ndim - 1], [0]))
    return out


def tensor_trace(
    f: CoefficientField,
    a: Sequence[float] | np.ndarray,
    spec: WaveletSpec,
    r: float = float("nan"),
) -> TraceResult:
    """d^F_{(j,k,l)}(a) = Σ_{l′} Σ_{k′} c_{(j,(k,k′),(l,l′))} ψ^{l′}_{j,k′}(a), l ≠ 0^d.

    l = 0^d 방향은 φ_{j,k}(x) 의 계수 d^G 로 dG_profile 에 모은다. 레벨 0 의
    β(0) φ^{D} 항은 dG_profile[0] 에 더해진다.
    """
    point = _check_point(a)
    d_prime = len(point)
    d = f.dim - d_prime
    if d < 1:
        raise ShapeMismatchError(f"Field dim {f.dim} leaves no horizontal axes for d'={d_prime}")
    n_or_d = (1 << d) - 1
    x_orients = orientations(d)
    levels: list[np.ndarray] = []
    dG: list[np.ndarray] = []
    for j in range(f.max_level + 1):
        size = 1 << j
        ranges = [_axis_values(spec, float(ai), j) for ai in point]
        lo = (0,) * d + tuple(rg[0] for rg in ranges)
        hi = (size,) * d + tuple(rg[1] for rg in ranges)
        block = f.block(j, lo, hi)
        dF = np.zeros((size,) * d + (n_or_d,))
        g_part = np.zeros((size,) * d)
        for i, l in enumerate(f.orientations):
            lx, ly = l[:d], l[d:]
            weights = [ranges[axis][3] if ly[axis] else ranges[axis][2] for axis in range(d_prime)]
            values = _contract(block[..., i], weights, d)
            if any(lx):
                dF[..., x_orients.index(lx)] += values
            else:
                g_part += values
        levels.append(dF)
        dG.append(g_part)
    if f.scaling_coefficient:
        phi_a = float(np.prod(eval_mother(spec, 0, point)))
        dG[0] = dG[0] + f.scaling_coefficient * phi_a
    return TraceResult(point, r, DenseField(levels), TraceRoute.TENSOR, dG, None)


# ----------------------------------------------------------------------
# 격자 오라클
# ----------------------------------------------------------------------


def _synthesize_axis(
    coeffs: np.ndarray, axis: int, spec: WaveletSpec, orientation: int, J_grid: int, j: int
) -> np.ndarray:
    """한 축을 2^j 계수에서 2^{J_grid} 샘플로 (x ≥ 1 로 넘어가는 기여는 버림)."""
    K = spec.support_length
    s = 1 << (J_grid - j)
    moved = np.moveaxis(coeffs, axis, 0)
    n = moved.shape[0]
    rest = moved.shape[1:]
    t = np.arange(K)[:, None] + np.arange(s)[None, :] / s
    table = eval_mother(spec, orientation, t)
    out = np.zeros((n, s) + rest)
    for shift in range(min(K, n)):
        out[shift:] += moved[: n - shift, None, ...] * table[shift].reshape(
            (1, s) + (1,) * len(rest)
        )
    return np.moveaxis(out.reshape((n * s,) + rest), 0, axis)


def grid_trace(
    f: CoefficientField,
    a: Sequence[float] | np.ndarray,
    J_grid: int,
    spec: WaveletSpec,
) -> np.ndarray:
    """x_m = m 2^{-J_grid} 에서 f(x, a) 샘플. shape (2^{J_grid},)*d."""
    point = _check_point(a)
    d_prime = len(point)
    d = f.dim - d_prime
    if J_grid < f.max_level:
        raise PreconditionError(f"Grid level {J_grid} below field level {f.max_level}")
    if (1 << (J_grid * d)) > f.max_dense_cells:
        raise PreconditionError(f"Grid of 2^{J_grid} per axis in dimension {d} is too large")

    samples = np.zeros((1 << J_grid,) * d)
    for j in range(f.max_level + 1):
        size = 1 << j
        ranges = [_axis_values(spec, float(ai), j) for ai in point]
        lo = (0,) * d + tuple(rg[0] for rg in ranges)
        hi = (size,) * d + tuple(rg[1] for rg in ranges)
        block = f.block(j, lo, hi)
        for i, l in enumerate(f.orientations):
            weights = [ranges[axis][3] if l[d + axis] else ranges[axis][2] for axis in range(d_prime)]
            coeffs = _contract(block[..., i], weights, d)
            if not coeffs.any():
                continue
            for axis in range(d):
                coeffs = _synthesize_axis(coeffs, axis, spec, l[axis], J_grid, j)
            samples += coeffs

    if f.scaling_coefficient:
        phi_a = float(np.prod(eval_mother(spec, 0, point)))
        coeffs = np.full((1,) * d, f.scaling_coefficient * phi_a)
        for axis in range(d):
            coeffs = _synthesize_axis(coeffs, axis, spec, 0, J_grid, 0)
        samples += coeffs
    return samples


def trace_from_grid(samples: np.ndarray, spec: WaveletSpec, levels: int | None = None) -> DwtResult:
    """prefilter 를 쓴 주기 DWT 로 격자 샘플에서 계수 복원."""
    return dwt_periodic(samples, spec, levels, prefilter=True)


def interior_mask(j: int, K: int, dim: int = 1) -> np.ndarray:
    """K ≤ k ≤ 2^j − K − 1 인 큐브 (경계 wrap 의 영향을 받지 않는 곳)."""
    axis = np.arange(1 << j)
    inside = (axis >= K) & (axis <= (1 << j) - K - 1)
    mask = np.ones((1 << j,) * dim, dtype=bool)
    for i in range(dim):
        shape = [1] * dim
        shape[i] = len(axis)
        mask = mask & inside.reshape(shape)
    return mask


def compare_traces(
    reference: DenseField,
    candidate: dict[int, np.ndarray] | DenseField,
    levels: Sequence[int],
    K: int | None = None,
) -> pl.DataFrame:
    """레벨별 최대 상대 오차 (기준 레벨의 최대 크기로 나눔). K 를 주면 내부 큐브만."""
    rows: list[dict[str, float | int]] = []
    for j in levels:
        ref = reference.level(j)
        cand = candidate.level(j) if isinstance(candidate, DenseField) else candidate[j]
        if ref.shape != cand.shape:
            raise ShapeMismatchError(f"Level {j}: shapes {ref.shape} and {cand.shape} differ")
        diff = np.abs(ref - cand)
        scale = np.abs(ref)
        if K is not None:
            mask = interior_mask(j, K, reference.dim)
            diff = diff[mask]
            scale = scale[mask]
        top = float(scale.max()) if scale.size else 0.0
        err = float(diff.max()) if diff.size else 0.0
        rows.append(
            {
                "level": j,
                "max_abs_error": err,
                "max_rel_error": err / top if top > 0 else err,
                "cells": int(diff.size),
            }
        )
    return pl.DataFrame(rows)


def gamma_target(
    nu: CapacityModel,
    r: float,
    p: float,
    *,
    level: int | None = None,
    step: float = 1e-2,
) -> float:
    """Γ^p_{ν,r} = h^r_ν + dim(ν_r)/p (α/∞ = 0)."""
    h = h_of_r(nu, r, level=level, step=step)
    if math.isinf(p):
        return h
    return h + dim_aux(nu, r, level=level, step=step) / p


@dataclass
class SandwichFit:
    """C₁ 2^{-j(h+1/m)} μ(3λ) ≤ L_{λ_j(x)} ≤ C₂ 2^{-j(h−1/m)} μ(3λ) 의 적합 상수."""

    c_lower: float
    c_upper: float
    levels: list[int]
    lower_levels: list[int]

    def to_dict(self) -> dict[str, object]:
        return {
            "C1": self.c_lower,
            "C2": self.c_upper,
            "levels": self.levels,
            "lower_levels": self.lower_levels,
        }


def leader_sandwich(
    leader_levels: Sequence[np.ndarray],
    mu: CapacityModel,
    x: Sequence[float],
    h_r: float,
    m: int,
    levels: Sequence[int],
    window: int,
) -> SandwichFit:
    """x 를 지나는 leader 경로에서 샌드위치 상수를 맞춘다.

    하한은 j ≡ 0 (mod window) 레벨에서만 본다.
    """
    upper: list[float] = []
    lower: list[float] = []
    lower_levels: list[int] = []
    for j in levels:
        cube = cube_containing(x, j)
        leader = float(leader_levels[j][cube.index])
        mass = sum(mu.mass(c) for c in neighborhood_cubes(cube, 3))
        if leader <= 0 or mass <= 0:
            upper.append(math.inf if leader > 0 else 0.0)
            if j % window == 0:
                lower.append(0.0)
                lower_levels.append(j)
            continue
        upper.append(leader / (mass * 2.0 ** (-j * (h_r - 1.0 / m))))
        if j % window == 0:
            lower.append(leader / (mass * 2.0 ** (-j * (h_r + 1.0 / m))))
            lower_levels.append(j)
    c_upper = max(upper) if upper else math.nan
    c_lower = min(lower) if lower else math.nan
    return SandwichFit(c_lower, c_upper, list(levels), lower_levels)

