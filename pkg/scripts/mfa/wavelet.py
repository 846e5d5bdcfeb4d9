"""
웨이블릿 도구: Daubechies 필터, φ/ψ dyadic 값 테이블, 주기화 G,
property (R) 검사, offset 스케줄 탐색, 주기 DWT (격자 오라클용).

이름 있는 Daubechies 테이블은 pywt wavefun (cascade 근사), CSV 탭은 정수점
고유벡터에서 refinement 식을 R 번 적용한 dyadic 값이다. 노드 사이 값은 선형 보간한다.
주기 DWT 는 pywt.dwtn / idwtn (mode="periodization") 위에 있다.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np
import polars as pl
import pywt
from scipy import linalg
from scipy.integrate import trapezoid

from .errors import ConfigError, ConstructionError, PreconditionError, ShapeMismatchError

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)

# Daubechies 차수별 Hölder 정칙성 (표준 참고값, 메타데이터)
DAUBECHIES_REGULARITY: dict[int, float] = {
    1: 0.0,
    2: 0.550,
    3: 1.088,
    4: 1.618,
    5: 1.969,
    6: 2.189,
    7: 2.460,
    8: 2.761,
    9: 3.074,
    10: 3.361,
}


@dataclass
class WaveletSpec:
    """필터 탭과 φ/ψ dyadic 테이블."""

    name: str
    lowpass_taps: np.ndarray
    support_length: int
    vanishing_moments: int
    regularity: float
    table_resolution: int
    phi_table: np.ndarray
    psi_table: np.ndarray

    @property
    def highpass_taps(self) -> np.ndarray:
        return highpass_from(self.lowpass_taps)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(len(self.psi_table)) * 2.0 ** (-self.table_resolution)

    @property
    def phi_at_integers(self) -> np.ndarray:
        step = 1 << self.table_resolution
        return self.phi_table[::step].copy()

    def moment(self, order: int) -> float:
        """∫ x^order ψ(x) dx (테이블 사다리꼴 적분)."""
        x = self.grid
        return float(trapezoid(x**order * self.psi_table, x))

    def to_frame(self) -> pl.DataFrame:
        return pl.DataFrame({"x": self.grid, "phi": self.phi_table, "psi": self.psi_table})


@dataclass(frozen=True)
class PeriodizedG:
    """G(x) = Σ_n ψ(x − nK), [0, K) 위의 테이블."""

    spec: WaveletSpec
    g_table: np.ndarray

    def __call__(self, x: np.ndarray | float) -> np.ndarray:
        return eval_G(self.spec, x)


def _pywt_name(name: str) -> str:
    key = name.lower()
    if key == "haar":
        key = "db1"
    if not key.startswith("db"):
        raise ConfigError(f"Unknown wavelet family: {name}")
    return key


def daubechies_taps(name: str) -> tuple[np.ndarray, float]:
    """이름 ("haar", "db2" ... ) 으로 저역 탭과 정칙성 메타데이터 조회."""
    key = _pywt_name(name)
    try:
        order = int(key[2:])
        wavelet = pywt.Wavelet(key)
    except ValueError as e:
        raise ConfigError(f"Unknown wavelet: {name}") from e
    taps = np.asarray(wavelet.rec_lo, dtype=float)
    return taps, DAUBECHIES_REGULARITY.get(order, float("nan"))


def load_taps(path: str | Path) -> np.ndarray:
    """CSV (열 이름 "tap") 에서 탭 읽기."""
    frame = pl.read_csv(path)
    if "tap" not in frame.columns:
        raise ConfigError(f"Taps CSV {path} has no 'tap' column")
    return frame["tap"].to_numpy().astype(float)


def highpass_from(h: np.ndarray) -> np.ndarray:
    """g_k = (−1)^k h_{L−1−k}."""
    signs = np.where(np.arange(len(h)) % 2 == 0, 1.0, -1.0)
    return signs * h[::-1]


def _fit_nodes(values: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    m = min(n, len(values))
    out[:m] = values[:m]
    return out


def _shift_nodes(values: np.ndarray, k: int) -> np.ndarray:
    """out[m] = values[m − k], 밖은 0."""
    out = np.zeros_like(values)
    if k > 0:
        out[k:] = values[:-k]
    elif k < 0:
        out[:k] = values[-k:]
    else:
        out[:] = values
    return out


def _two_scale_psi(g: np.ndarray, phi: np.ndarray, K: int, R: int) -> np.ndarray:
    """ψ(x) = √2 Σ g_k φ(2x − k), 같은 해상도 노드에서."""
    size = 1 << R
    m = np.arange(K * size + 1)
    out = np.zeros(len(m))
    for k, gk in enumerate(g):
        idx = 2 * m - k * size
        valid = (idx >= 0) & (idx <= K * size)
        out[valid] += SQRT2 * gk * phi[idx[valid]]
    return out


def _wavefun_tables(key: str, taps: np.ndarray, R: int) -> tuple[np.ndarray, np.ndarray]:
    """pywt cascade 근사 φ/ψ 를 [0, K] 의 2^-R 노드에 맞춘다.

    wavefun 출력은 앞에 0 이 붙고 길이가 조정돼 있다. φ 는 1차 모멘트
    (∫xφ = Σ k h_k / √2) 로 정렬하고 φ(정수) 합이 1 이 되게 맞춘다.
    ψ 는 같은 이동 뒤 두 스케일 관계 값과의 상관으로 남은 이동과 부호를 고른다.
    """
    phi_w, psi_w, _ = pywt.Wavelet(key).wavefun(level=R)
    K = len(taps) - 1
    size = 1 << R
    n = K * size + 1
    x = np.arange(n) / size

    phi = _fit_nodes(np.asarray(phi_w, dtype=float), n)
    target = float(np.dot(np.arange(len(taps)), taps)) / SQRT2
    centre = trapezoid(x * phi, x) / trapezoid(phi, x)
    shift = -int(round((centre - target) * size))
    phi = _shift_nodes(phi, shift)
    scale = float(phi[::size].sum())
    if not np.isfinite(scale) or abs(scale) < 1e-12:
        raise ConstructionError(f"Cascade table for {key} has no mass at the integers")
    phi = phi / scale

    reference = _two_scale_psi(highpass_from(taps), phi, K, R)
    psi_raw = _fit_nodes(np.asarray(psi_w, dtype=float), n) / scale
    candidates = [
        (float(np.dot(_shift_nodes(psi_raw, shift + s), reference)), shift + s) for s in range(-2, 3)
    ]
    corr, best = max(candidates, key=lambda item: abs(item[0]))
    return phi, np.sign(corr) * _shift_nodes(psi_raw, best)


def _phi_at_integers(h: np.ndarray) -> np.ndarray:
    K = len(h) - 1
    if K == 1:
        return np.array([1.0, 0.0])

    size = K + 1
    matrix = np.zeros((size, size))
    for i in range(size):
        for k in range(size):
            n = 2 * i - k
            if 0 <= n < len(h):
                matrix[i, k] = SQRT2 * h[n]

    eigvals, eigvecs = linalg.eig(matrix)
    near_one = np.abs(eigvals - 1.0) < 1e-8
    if near_one.sum() != 1:
        raise ConstructionError("Refinement matrix has no simple eigenvalue 1")
    others = np.abs(eigvals[~near_one])
    if len(others) and others.max() >= 1.0:
        raise ConstructionError(
            f"Refinement cascade does not converge (spectral radius {others.max():.4g})"
        )
    vec = np.real(eigvecs[:, np.flatnonzero(near_one)[0]])
    total = vec.sum()
    if abs(total) < 1e-12:
        raise ConstructionError("Scaling function values at integers sum to zero")
    return vec / total


def _refine_table(h: np.ndarray, values: np.ndarray, K: int, level: int) -> np.ndarray:
    """레벨 level−1 테이블에서 레벨 level 테이블 계산."""
    step = 1 << (level - 1)
    m = np.arange(K * (1 << level) + 1)
    out = np.zeros(len(m))
    for k, hk in enumerate(h):
        idx = m - k * step
        valid = (idx >= 0) & (idx <= K * step)
        out[valid] += SQRT2 * hk * values[idx[valid]]
    return out


def build_spec(
    source: str | Sequence[float] | np.ndarray,
    R: int = 16,
    *,
    name: str | None = None,
    regularity: float | None = None,
) -> WaveletSpec:
    """탭 또는 이름으로 WaveletSpec 생성.

    이름 있는 Daubechies (db2 이상) 는 pywt wavefun 테이블을 쓰고,
    Haar 와 CSV 탭은 정수점 고유벡터 + refinement 로 정확한 dyadic 값을 만든다.

    Raises:
        ConfigError: 알 수 없는 이름, 탭 개수/합 오류, R < 10
        ConstructionError: refinement 가 수렴하지 않는 탭
    """
    key = None
    if isinstance(source, str):
        taps, reg = daubechies_taps(source)
        key = _pywt_name(source)
        label = name or source.lower()
    else:
        taps = np.asarray(source, dtype=float)
        reg = float("nan")
        label = name or f"custom{len(taps)}"
    if regularity is not None:
        reg = regularity

    if len(taps) < 2 or len(taps) % 2:
        raise ConfigError(f"Taps must have even length >= 2, got {len(taps)}")
    if abs(taps.sum() - SQRT2) > 1e-10:
        raise ConfigError(f"Taps must sum to sqrt(2), got {taps.sum():.12g}")
    if R < 10:
        raise ConfigError(f"Table resolution must be >= 10, got {R}")

    K = len(taps) - 1
    if key is not None and K > 1:
        phi, psi = _wavefun_tables(key, taps, R)
    else:
        phi = _phi_at_integers(taps)
        for level in range(1, R + 1):
            phi = _refine_table(taps, phi, K, level)
        psi = _two_scale_psi(highpass_from(taps), phi, K, R)
    if not np.all(np.isfinite(phi)) or np.abs(phi).max() > 1e6:
        raise ConstructionError(f"Scaling table for {label} diverged")

    logger.debug("Built %s: K=%d, R=%d, %d table nodes", label, K, R, len(phi))
    return WaveletSpec(
        name=label,
        lowpass_taps=taps,
        support_length=K,
        vanishing_moments=len(taps) // 2,
        regularity=float(reg) if np.isfinite(reg) else 0.0,
        table_resolution=R,
        phi_table=phi,
        psi_table=psi,
    )


def spec_from_tables(
    name: str,
    psi_values: np.ndarray,
    support_length: int,
    resolution: int,
    regularity: float = 0.0,
) -> WaveletSpec:
    """테이블을 직접 지정한 합성 spec (필터 탭 없음, G 관련 검사용)."""
    expected = support_length * (1 << resolution) + 1
    if len(psi_values) != expected:
        raise ShapeMismatchError(f"Expected {expected} table values, got {len(psi_values)}")
    return WaveletSpec(
        name=name,
        lowpass_taps=np.empty(0),
        support_length=support_length,
        vanishing_moments=0,
        regularity=regularity,
        table_resolution=resolution,
        phi_table=np.zeros(expected),
        psi_table=np.asarray(psi_values, dtype=float),
    )


# ----------------------------------------------------------------------
# 평가
# ----------------------------------------------------------------------


def eval_psi(spec: WaveletSpec, x: np.ndarray | float) -> np.ndarray:
    """[0, K] 밖에서 0, 안에서 노드 사이 선형 보간."""
    return np.interp(np.asarray(x, dtype=float), spec.grid, spec.psi_table, left=0.0, right=0.0)


def eval_phi(spec: WaveletSpec, x: np.ndarray | float) -> np.ndarray:
    return np.interp(np.asarray(x, dtype=float), spec.grid, spec.phi_table, left=0.0, right=0.0)


def eval_G(spec: WaveletSpec, x: np.ndarray | float) -> np.ndarray:
    """K-주기 G."""
    return eval_psi(spec, np.mod(np.asarray(x, dtype=float), spec.support_length))


def eval_mother(spec: WaveletSpec, orientation: int, x: np.ndarray | float) -> np.ndarray:
    """ψ^0 = φ, ψ^1 = ψ."""
    return eval_psi(spec, x) if orientation else eval_phi(spec, x)


def periodized_G(spec: WaveletSpec) -> PeriodizedG:
    size = spec.support_length << spec.table_resolution
    return PeriodizedG(spec, spec.psi_table[:size].copy())


def periodized_abs_sum(spec: WaveletSpec, x: np.ndarray | float) -> np.ndarray:
    """S(x) = Σ_{p<K} |ψ(x + p)|."""
    x = np.asarray(x, dtype=float)
    return sum(np.abs(eval_psi(spec, x + p)) for p in range(spec.support_length))


def G_product(spec: WaveletSpec, x: np.ndarray, offsets: Sequence[int], j: int) -> float:
    """G_j^{d'}(x) = ∏_i G(2^j x_i − p_{j,i})."""
    values = eval_G(spec, np.ldexp(np.asarray(x, dtype=float), j) - np.asarray(offsets))
    return float(np.prod(values))


# ----------------------------------------------------------------------
# property (R)
# ----------------------------------------------------------------------


@dataclass
class PropertyRReport:
    """격자 위 property (R) 인증 결과 (증명이 아닌 격자 검사)."""

    wavelet: str
    grid_resolution: int
    regularity: float
    r1: bool
    zero_clusters: int
    longest_zero_run: float
    r2: bool
    min_s: float
    argmin_s: float
    r3: bool

    @property
    def passed(self) -> bool:
        return self.r1 and self.r2 and self.r3

    def to_dict(self) -> dict[str, object]:
        return {
            "wavelet": self.wavelet,
            "grid_resolution": self.grid_resolution,
            "certification": "grid scan only",
            "regularity": self.regularity,
            "R1": self.r1,
            "R2": self.r2,
            "zero_clusters": self.zero_clusters,
            "longest_zero_run": self.longest_zero_run,
            "R3": self.r3,
            "min_S": self.min_s,
            "argmin_S": self.argmin_s,
            "pass": self.passed,
        }


def _zero_clusters(values: np.ndarray, tol: float) -> tuple[int, int]:
    """(부호 변화 + 0 구간 클러스터 수, 가장 긴 0 구간 샘플 수)."""
    zero = np.abs(values) <= tol
    starts = zero & ~np.concatenate(([False], zero[:-1]))
    runs = int(starts.sum())

    signs = np.sign(values)
    signs[zero] = 0
    changes = int(np.sum(signs[:-1] * signs[1:] < 0))

    longest = 0
    if zero.any():
        padded = np.concatenate(([0], zero.astype(np.int8), [0]))
        edges = np.flatnonzero(np.diff(padded))
        longest = int(np.max(edges[1::2] - edges[::2]))
    return runs + changes, longest


def check_property_R(
    spec: WaveletSpec,
    grid_resolution: int = 16,
    *,
    regularity_threshold: float = 1.0,
    max_zero_width: float = 2.0**-8,
) -> PropertyRReport:
    """R1 (C¹ 메타데이터), R2 (ψ 0-클러스터), R3 (min S > 0) 격자 검사."""
    K = spec.support_length
    step = 2.0 ** (-grid_resolution)
    x = np.arange(K * (1 << grid_resolution) + 1) * step
    psi = eval_psi(spec, x)
    # 지지 끝의 꼬리는 매우 작지만 0 이 아니다: 정확한 0 만 센다
    clusters, longest = _zero_clusters(psi, float(np.finfo(float).tiny))
    width = longest * step

    s_grid = np.arange(1 << grid_resolution) * step
    s_values = periodized_abs_sum(spec, s_grid)
    i_min = int(np.argmin(s_values))

    report = PropertyRReport(
        wavelet=spec.name,
        grid_resolution=grid_resolution,
        regularity=spec.regularity,
        r1=spec.regularity >= regularity_threshold,
        zero_clusters=clusters,
        longest_zero_run=width,
        r2=width <= max_zero_width,
        min_s=float(s_values[i_min]),
        argmin_s=float(s_grid[i_min]),
        r3=bool(s_values[i_min] > 0.0),
    )
    logger.info(
        f"Property (R) for {spec.name}: R1={report.r1} R2={report.r2} "
        f"R3={report.r3} (min S={report.min_s:.4g})"
    )
    return report


def refinement_errors(source: str | Sequence[float], resolutions: Sequence[int]) -> list[float]:
    """R 테이블 보간과 R+2 테이블의 최대 차이 (cascade 수렴 검사)."""
    errors = []
    for R in resolutions:
        coarse = build_spec(source, R)
        fine = build_spec(source, R + 2)
        errors.append(float(np.max(np.abs(eval_psi(coarse, fine.grid) - fine.psi_table))))
    return errors


def refinement_rate(resolutions: Sequence[int], errors: Sequence[float]) -> float:
    """오차 ≈ C 2^{-ρR} 의 ρ."""
    return float(-np.polyfit(np.asarray(resolutions, float), np.log2(errors), 1)[0])


# ----------------------------------------------------------------------
# offset 스케줄
# ----------------------------------------------------------------------


@dataclass
class OffsetSchedule:
    """레벨별 offset p_j, 창 N(d′), 격자 인증 하한 α."""

    d_prime: int
    window: int
    offsets: np.ndarray
    alpha: float
    support_length: int
    grid_resolution: int = 0
    pattern: list[list[int]] = field(default_factory=list)

    @property
    def max_level(self) -> int:
        return len(self.offsets) - 1

    def offset(self, j: int) -> np.ndarray:
        if j > self.max_level:
            raise PreconditionError(f"Schedule covers levels <= {self.max_level}, asked for {j}")
        return self.offsets[j]

    def require(self, J: int) -> None:
        if J > self.max_level:
            raise PreconditionError(f"Schedule shorter than J={J} (max level {self.max_level})")

    def to_dict(self) -> dict[str, object]:
        return {
            "d_prime": self.d_prime,
            "window": self.window,
            "alpha": self.alpha,
            "support_length": self.support_length,
            "grid_resolution": self.grid_resolution,
            "pattern": self.pattern,
            "offsets": self.offsets.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "OffsetSchedule":
        return cls(
            d_prime=int(data["d_prime"]),  # type: ignore[call-overload]
            window=int(data["window"]),  # type: ignore[call-overload]
            offsets=np.asarray(data["offsets"], dtype=np.int64),
            alpha=float(data["alpha"]),  # type: ignore[arg-type]
            support_length=int(data["support_length"]),  # type: ignore[call-overload]
            grid_resolution=int(data.get("grid_resolution", 0)),  # type: ignore[call-overload]
            pattern=list(data.get("pattern", [])),  # type: ignore[call-overload]
        )

    @classmethod
    def periodic(
        cls, pattern: Sequence[Sequence[int]], J_max: int, alpha: float, support_length: int
    ) -> "OffsetSchedule":
        """주기 패턴 (길이 N, 각 원소 d′ 벡터) 을 J_max 까지 확장."""
        arr = np.asarray(pattern, dtype=np.int64)
        offsets = np.stack([arr[j % len(arr)] for j in range(J_max + 1)])
        return cls(arr.shape[1], len(arr), offsets, alpha, support_length, pattern=arr.tolist())


def _abs_G_table(spec: WaveletSpec, J_max: int, resolution: int) -> np.ndarray:
    """F[j, p, m] = |G(2^j x_m − p)|, x_m = m 2^{-res}."""
    K = spec.support_length
    n = 1 << resolution
    period = K * n
    m = np.arange(n, dtype=np.int64)
    table = np.empty((J_max + 1, K, n))
    exact = resolution <= spec.table_resolution
    for j in range(J_max + 1):
        y = (m * pow(2, j, period)) % period
        for p in range(K):
            pos = (y - p * n) % period
            if exact:
                values = spec.psi_table[pos << (spec.table_resolution - resolution)]
            else:
                values = eval_psi(spec, pos / n)
            table[j, p] = np.abs(values)
    return table


def _window_floor(
    tables: np.ndarray, pattern: np.ndarray, J_max: int
) -> tuple[float, int, tuple[int, ...]]:
    """주기 패턴의 (최소_창 최소_x 최대_ℓ 곱^{1/d′}, 최악 창, 최악 x 인덱스)."""
    N, d_prime = pattern.shape
    best = np.inf
    worst_window = 0
    worst_x: tuple[int, ...] = ()
    for start in range(0, J_max - N + 2, N):
        window_max: np.ndarray | None = None
        for ell in range(N):
            j = start + ell
            prod_values = tables[j, pattern[ell, 0]]
            for i in range(1, d_prime):
                prod_values = np.multiply.outer(prod_values, tables[j, pattern[ell, i]])
            window_max = prod_values if window_max is None else np.maximum(window_max, prod_values)
        assert window_max is not None
        low = float(window_max.min())
        if low < best:
            best = low
            worst_window = start
            worst_x = tuple(int(v) for v in np.unravel_index(np.argmin(window_max), window_max.shape))
    return best ** (1.0 / d_prime), worst_window, worst_x


@dataclass
class CertificationReport:
    passed: bool
    floor: float
    alpha: float
    grid_resolution: int
    worst_x: list[float]
    worst_window: int

    def to_dict(self) -> dict[str, object]:
        return {
            "pass": self.passed,
            "floor": self.floor,
            "alpha": self.alpha,
            "grid_resolution": self.grid_resolution,
            "worst_x": self.worst_x,
            "worst_window": self.worst_window,
        }


def certify_schedule(
    spec: WaveletSpec, schedule: OffsetSchedule, grid_resolution: int, alpha: float
) -> CertificationReport:
    """주어진 격자에서 스케줄을 독립적으로 재검사."""
    J_max = schedule.max_level
    tables = _abs_G_table(spec, J_max, grid_resolution)
    pattern = np.asarray(schedule.offsets[: schedule.window], dtype=np.int64)
    floor, window, worst = _window_floor(tables, pattern, J_max)
    step = 2.0 ** (-grid_resolution)
    report = CertificationReport(
        passed=floor >= alpha,
        floor=floor,
        alpha=alpha,
        grid_resolution=grid_resolution,
        worst_x=[v * step for v in worst],
        worst_window=window,
    )
    logger.info(
        f"Schedule certification at 2^-{grid_resolution}: floor={floor:.4g} "
        f"(alpha={alpha:.4g}) -> {'pass' if report.passed else 'fail'}"
    )
    return report


def _candidate_patterns(K: int, N: int, d_prime: int, max_patterns: int) -> list[np.ndarray]:
    full = K ** (N * d_prime)
    if full <= max_patterns:
        return [
            np.asarray(flat, dtype=np.int64).reshape(N, d_prime)
            for flat in product(range(K), repeat=N * d_prime)
        ]
    # 축마다 같은 offset 을 쓰는 대각 패턴만
    return [
        np.repeat(np.asarray(flat, dtype=np.int64)[:, None], d_prime, axis=1)
        for flat in product(range(K), repeat=N)
    ]


def find_offset_schedule(
    spec: WaveletSpec,
    d_prime: int,
    J_max: int,
    candidate_window_max: int = 4,
    grid_resolution: int = 14,
    *,
    min_alpha: float = 1e-3,
    max_patterns: int = 5000,
) -> OffsetSchedule:
    """주기 offset 패턴을 격자 인증으로 탐색.

    가장 작은 창 N 중 α ≥ min_alpha 를 만족하는 패턴의 최대 α 를 고른다.

    Raises:
        PreconditionError: R2/R3 실패, 또는 어떤 패턴도 격자에서 인증되지 않음
    """
    report = check_property_R(spec, grid_resolution)
    if not (report.r2 and report.r3):
        raise PreconditionError(
            f"Offset search needs R2 and R3; {spec.name} gives R2={report.r2}, R3={report.r3}"
        )
    if d_prime > 1:
        # 곱 격자 크기를 1-D 격자 수준으로 유지
        grid_resolution = max(4, min(grid_resolution, 16 // d_prime))

    K = spec.support_length
    tables = _abs_G_table(spec, J_max, grid_resolution)
    overall: tuple[float, np.ndarray | None, int, tuple[int, ...]] = (0.0, None, 0, ())
    for N in range(1, candidate_window_max + 1):
        best: tuple[float, np.ndarray | None, int, tuple[int, ...]] = (-1.0, None, 0, ())
        for pattern in _candidate_patterns(K, N, d_prime, max_patterns):
            floor, window, worst = _window_floor(tables, pattern, J_max)
            if floor > best[0]:
                best = (floor, pattern, window, worst)
        logger.info(f"Offset search d'={d_prime} N={N}: best alpha {best[0]:.4g}")
        if best[0] > overall[0]:
            overall = best
        if best[0] >= min_alpha:
            overall = best
            break
    else:
        if overall[1] is not None and overall[0] > 0:
            logger.warning(
                f"No window up to {candidate_window_max} reaches alpha {min_alpha}; "
                f"keeping best alpha {overall[0]:.4g}"
            )

    alpha, pattern, window, worst = overall
    if pattern is None or alpha <= 0:
        step = 2.0 ** (-grid_resolution)
        raise PreconditionError(
            f"No offset schedule certifies on the 2^-{grid_resolution} grid "
            f"(best product {alpha:.3g}, worst x {[w * step for w in worst]}, window {window})"
        )
    schedule = OffsetSchedule.periodic(pattern.tolist(), J_max, alpha, K)
    schedule.grid_resolution = grid_resolution
    return schedule


# ----------------------------------------------------------------------
# 주기 DWT
# ----------------------------------------------------------------------


@dataclass
class DwtResult:
    """레벨별 detail (L∞ 정규화, 마지막 축이 방향) 과 최종 근사."""

    details: dict[int, np.ndarray]
    approx: np.ndarray
    approx_level: int
    finest_level: int
    prefiltered: bool = False


def orientations(dim: int) -> list[tuple[int, ...]]:
    """{0,1}^D \\ {0^D} 사전식 순서."""
    return [l for l in product((0, 1), repeat=dim) if any(l)]


def _band_key(l: Sequence[int]) -> str:
    """방향 벡터 → pywt.dwtn 키 ('a' = lowpass, 'd' = highpass)."""
    return "".join("d" if bit else "a" for bit in l)


def filter_bank(spec: WaveletSpec) -> pywt.Wavelet:
    """a_k = Σ h_n x_{2k+n} 규약의 pywt 필터 뱅크 (CSV 탭 포함)."""
    h, g = spec.lowpass_taps, spec.highpass_taps
    return pywt.Wavelet(spec.name, filter_bank=(h[::-1], g[::-1], h, g))


def _alignment_shift(spec: WaveletSpec) -> int:
    # pywt periodization 은 x[F/2 + 2k − j] 를 본다 → F/2 − 1 만큼 당겨 맞춘다
    return len(spec.lowpass_taps) // 2 - 1


def _circulant_symbol(spec: WaveletSpec, P: int) -> np.ndarray:
    kernel = np.zeros(P)
    for i, value in enumerate(spec.phi_at_integers):
        kernel[i % P] += value
    return np.fft.fft(kernel)


def _apply_prefilter(samples: np.ndarray, spec: WaveletSpec, inverse: bool) -> np.ndarray:
    """샘플 ↔ 스케일링 계수: s_n = Σ_m a_m φ(n − m) (축마다 순환)."""
    out = samples.astype(float)
    for axis in range(out.ndim):
        P = out.shape[axis]
        symbol = _circulant_symbol(spec, P)
        if np.abs(symbol).min() < 1e-10:
            raise ConstructionError(f"Sampled scaling symbol of {spec.name} vanishes")
        shape = [1] * out.ndim
        shape[axis] = P
        factor = (1.0 / symbol if inverse else symbol).reshape(shape)
        out = np.real(np.fft.ifft(np.fft.fft(out, axis=axis) * factor, axis=axis))
    return out


def _level_of(samples: np.ndarray, spec: WaveletSpec) -> int:
    P = samples.shape[0]
    if any(s != P for s in samples.shape) or P & (P - 1):
        raise ShapeMismatchError(f"Samples must be a cube of power-of-two side, got {samples.shape}")
    if P < len(spec.lowpass_taps):
        raise ShapeMismatchError(f"Length {P} shorter than filter length {len(spec.lowpass_taps)}")
    return P.bit_length() - 1


def dwt_periodic(
    samples: np.ndarray,
    spec: WaveletSpec,
    levels: int | None = None,
    *,
    prefilter: bool = False,
) -> DwtResult:
    """주기 경계 DWT. 계수는 c = 2^{Dj} ∫ f ψ_λ 규약 (L∞ 정규화).

    prefilter=True 면 샘플을 φ 정수값 순환 역합성으로 스케일링 계수로 바꾼다
    (f ∈ V_J 이면 정확).
    """
    arr = np.asarray(samples, dtype=float)
    J = _level_of(arr, spec)
    dim = arr.ndim
    levels = J if levels is None else levels
    if not 0 < levels <= J:
        raise ShapeMismatchError(f"Levels must be in [1, {J}], got {levels}")

    wavelet = filter_bank(spec)
    axes = tuple(range(dim))
    shift = _alignment_shift(spec)
    approx = _apply_prefilter(arr, spec, inverse=True) if prefilter else arr
    approx = approx * 2.0 ** (-dim * J / 2)
    details: dict[int, np.ndarray] = {}
    for j in range(J - 1, J - levels - 1, -1):
        bands = pywt.dwtn(np.roll(approx, -shift, axis=axes), wavelet, mode="periodization")
        approx = bands["a" * dim]
        details[j] = np.stack([bands[_band_key(l)] for l in orientations(dim)], axis=-1) * 2.0 ** (
            dim * j / 2
        )
    j0 = J - levels
    logger.debug("DWT %s: J=%d, levels=%d, prefilter=%s", spec.name, J, levels, prefilter)
    return DwtResult(details, approx * 2.0 ** (dim * j0 / 2), j0, J, prefilter)


def idwt_periodic(result: DwtResult, spec: WaveletSpec) -> np.ndarray:
    """dwt_periodic 의 역변환."""
    dim = result.approx.ndim
    wavelet = filter_bank(spec)
    axes = tuple(range(dim))
    shift = _alignment_shift(spec)
    approx = result.approx * 2.0 ** (-dim * result.approx_level / 2)
    for j in range(result.approx_level, result.finest_level):
        coeffs = result.details[j] * 2.0 ** (-dim * j / 2)
        bands = {"a" * dim: approx}
        for i, l in enumerate(orientations(dim)):
            bands[_band_key(l)] = coeffs[..., i]
        merged = pywt.idwtn(bands, wavelet, mode="periodization")
        approx = np.roll(merged, shift, axis=axes)
    samples = approx * 2.0 ** (dim * result.finest_level / 2)
    if result.prefiltered:
        samples = _apply_prefilter(samples, spec, inverse=False)
    return samples
