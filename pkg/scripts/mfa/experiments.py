"""
실험 파이프라인.

지원 실험:
- saturating-shift: saturating trace 의 점별 지수 이동 (h_μ(x) + h_ν^r)
- upper-bound: 임의 원소 trace 지수의 하한 (ĥ_μ(x) + h_ν^min)
- prevalent-shape: f^β trace 의 leader 스펙트럼 모양 σ_μ(h − h_ν^r)
- additivity: 곱 capacity 의 τ 가법성

(r, 샘플) 쌍은 joblib 으로 병렬 처리하고, 파일 쓰기는 메인 스레드에서만 한다.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import polars as pl
from joblib import Parallel, delayed

from .analysis import (
    PredictedCurves,
    leader_spectrum,
    leaders,
    pointwise_exponent,
    predicted_curves,
    spectrum_deviation,
)
from .capacity import (
    CapacityModel,
    CascadeCapacity,
    ProductCapacity,
    ScalingTable,
    auxiliary_model,
    ball_local_dimension,
    cascade_pattern_exponent,
    default_level,
    default_q_grid,
    local_dimension,
    sample_points,
    scaling_function,
)
from .config import ExperimentConfig, ExperimentKind, ToolDefaults, WaveletConfig
from .dyadic import pattern_point
from .errors import PreconditionError
from .io import read_json, write_csv, write_json, write_manifest
from .synthesis import (
    CoefficientField,
    SaturatingField,
    combine,
    generator_fields,
    random_member,
)
from .trace import saturating_trace, tensor_trace
from .wavelet import (
    OffsetSchedule,
    WaveletSpec,
    build_spec,
    find_offset_schedule,
    load_taps,
)

logger = logging.getLogger(__name__)

# a 샘플링 깊이 = J + HEIGHT_EXTRA_DEPTH
HEIGHT_EXTRA_DEPTH = 8


@dataclass
class ExperimentOutcome:
    """실험 결과 요약과 출력 파일."""

    name: str
    kind: ExperimentKind
    passed: bool
    summary: dict[str, Any]
    files: list[Path] = field(default_factory=list)


# ----------------------------------------------------------------------
# 준비 단계
# ----------------------------------------------------------------------


def prepare_spec(wcfg: WaveletConfig) -> WaveletSpec:
    if wcfg.taps_path:
        return build_spec(load_taps(wcfg.taps_path), wcfg.resolution, name=wcfg.name)
    return build_spec(wcfg.name, wcfg.resolution)


def prepare_schedule(wcfg: WaveletConfig, spec: WaveletSpec, J: int) -> OffsetSchedule:
    """schedule_path 가 있으면 읽고, 없으면 격자 탐색.

    Raises:
        PreconditionError: 읽은 스케줄의 d′, K, 길이가 맞지 않을 때
    """
    if wcfg.schedule_path:
        schedule = OffsetSchedule.from_dict(read_json(wcfg.schedule_path))
        if schedule.d_prime != wcfg.d_prime:
            raise PreconditionError(
                f"Schedule {wcfg.schedule_path} is for d'={schedule.d_prime}, need d'={wcfg.d_prime}"
            )
        if schedule.support_length != spec.support_length:
            raise PreconditionError(
                f"Schedule {wcfg.schedule_path} was built for K={schedule.support_length}"
            )
        schedule.require(J)
        return schedule
    logger.info("Searching offset schedule for %s, d'=%d, J=%d", spec.name, wcfg.d_prime, J)
    return find_offset_schedule(
        spec,
        wcfg.d_prime,
        J,
        wcfg.window_max,
        wcfg.grid_resolution,
        min_alpha=wcfg.min_alpha,
    )


def scaling_tables(
    models: Sequence[CapacityModel], defaults: ToolDefaults
) -> list[ScalingTable]:
    n = defaults.numerics
    q = default_q_grid(n.q_min, n.q_max, n.q_step)
    return [scaling_function(m, q, default_level(m)) for m in models]


def child_seed(*keys: int) -> int:
    """(seed, r 번호, 샘플 번호) 에서 독립적인 정수 시드."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def sample_heights(nu: CapacityModel, r: float, depth: int, n: int, rng_seed: int) -> np.ndarray:
    """ν_r 에서 높이 a 를 n 개 샘플 (depth 레벨 큐브의 중심), shape (n, d′)."""
    aux = auxiliary_model(nu, r)
    if aux.max_depth is not None:
        depth = min(depth, aux.max_depth)
    corners = sample_points(aux, depth, n, rng_seed)
    return corners + 2.0 ** (-depth - 1)


@dataclass
class ReferencePoint:
    pattern: str
    x: np.ndarray
    h_mu: float


def reference_points(
    mu: CapacityModel, patterns: Sequence[str], depth: int, window: tuple[int, int]
) -> list[ReferencePoint]:
    """자릿수 패턴 점과 μ 의 국소 차원 (1-D cascade 는 닫힌 식, 나머지는 추정)."""
    points = []
    for pattern in patterns:
        x = np.full(mu.dim, pattern_point(pattern, depth))
        if isinstance(mu, CascadeCapacity) and mu.dim == 1:
            h = cascade_pattern_exponent(mu, pattern)
        else:
            h = local_dimension(mu, x, *window).ls_slope
        points.append(ReferencePoint(pattern, x, h))
    return points


def x_grid(n: int, dim: int) -> np.ndarray:
    """(i + 1/3)/n 대각선 격자 (dyadic 유리수를 피함)."""
    values = (np.arange(n) + 1.0 / 3.0) / n
    return np.repeat(values[:, None], dim, axis=1)


def _predicted_frame(curves: list[tuple[float, PredictedCurves]]) -> pl.DataFrame:
    frames = []
    for r, pred in curves:
        frame = pred.to_frame()
        frames.append(
            frame.with_columns(pl.lit(r).alias("r"), pl.lit(pred.shift).alias("shift")).select(
                ["r", "shift", "h", "sigma_pred", "upper_bound"]
            )
        )
    return pl.concat(frames)


def _spectrum_rows(
    r: float, sample: int, variant: str, h: np.ndarray, sigma: np.ndarray, reference: np.ndarray
) -> list[dict[str, Any]]:
    return [
        {
            "r": r,
            "sample": sample,
            "variant": variant,
            "h": float(hv),
            "sigma_hat": float(s),
            "sigma_pred": float(p),
        }
        for hv, s, p in zip(h, sigma, reference)
    ]


@dataclass
class _Context:
    """작업자들이 공유하는 읽기 전용 상태."""

    config: ExperimentConfig
    mu: CapacityModel
    nu: CapacityModel
    xi: ProductCapacity
    spec: WaveletSpec
    window: tuple[int, int]
    q_grid: np.ndarray
    schedule: OffsetSchedule | None = None
    points: list[ReferencePoint] = field(default_factory=list)
    predicted: dict[float, PredictedCurves] = field(default_factory=dict)


# ----------------------------------------------------------------------
# saturating-shift
# ----------------------------------------------------------------------


def coefficient_field(f: CoefficientField, implicit: bool) -> CoefficientField:
    """implicit=False 면 DenseField 로 펼친다 (메모리 정책은 materialize 가 검사)."""
    return f if implicit else f.materialize()


def _shift_job(ctx: _Context, r_index: int, r: float, sample: int, a: np.ndarray) -> dict[str, Any]:
    cfg = ctx.config
    assert ctx.schedule is not None
    pred = ctx.predicted[r]
    out: dict[str, Any] = {"exponents": [], "spectra": [], "summary": []}

    trace = saturating_trace(ctx.mu, ctx.nu, ctx.schedule, ctx.spec, cfg.q, a, cfg.J, r=r)
    lo, hi = ctx.window
    first = trace.first_valid_level
    if first is None or max(lo, first) >= hi:
        logger.warning(
            "r=%s sample %d: no valid levels in window %s, skipped", r, sample, ctx.window
        )
        return out
    lo = max(lo, first)
    lf = leaders(trace.field)

    for point in ctx.points:
        est = pointwise_exponent(lf, point.x, lo, hi)
        expected = point.h_mu + pred.shift
        error = abs(est.ls_slope - expected) if math.isfinite(est.ls_slope) else math.inf
        out["exponents"].append(
            {
                "r": r,
                "sample": sample,
                "a": float(a[0]),
                "pattern": point.pattern,
                "x": float(point.x[0]),
                "h_mu": point.h_mu,
                "h_nu_r": pred.shift,
                "h_expected": expected,
                "h_hat": est.ls_slope,
                "min_slope": est.min_slope,
                "error": error,
                "pass": error <= cfg.tolerances.exponent,
            }
        )

    if sample >= cfg.spectrum_samples:
        return out

    # β = 0 (saturating trace 자체) 와 임의 β 섭동
    variants = {"beta-0": lf}
    generators = generator_fields(ctx.xi, cfg.q, cfg.J, ctx.schedule, cfg.generator_p, ctx.mu.dim)
    rng = np.random.default_rng(child_seed(cfg.seed, r_index, sample, 1))
    betas = rng.uniform(-1.0, 1.0, len(generators))
    saturating = SaturatingField(ctx.xi, cfg.q, cfg.J, ctx.schedule)
    perturbed = coefficient_field(combine(saturating, betas, generators), cfg.implicit)
    variants["beta-random"] = leaders(tensor_trace(perturbed, a, ctx.spec, r).field)

    for variant, field_leaders in variants.items():
        est = leader_spectrum(field_leaders, ctx.q_grid, pred.h, (lo, hi))
        deviation = spectrum_deviation(est, pred, cfg.tolerances.spectrum_central_fraction)
        out["spectra"] += _spectrum_rows(r, sample, variant, est.h_grid, est.sigma_hat, pred.prevalent)
        out["summary"].append(
            {
                "r": r,
                "sample": sample,
                "variant": variant,
                "deviation": deviation,
                "low_confidence": est.low_confidence,
            }
        )
    return out


def run_saturating_shift(ctx: _Context, out_dir: Path) -> ExperimentOutcome:
    cfg = ctx.config
    tasks = []
    for r_index, r in enumerate(cfg.r_list):
        heights = sample_heights(
            ctx.nu, r, cfg.J + HEIGHT_EXTRA_DEPTH, cfg.samples, child_seed(cfg.seed, r_index)
        )
        tasks += [(r_index, r, s, heights[s]) for s in range(cfg.samples)]

    logger.info("Saturating traces: %d (r, a) pairs, n_jobs=%d", len(tasks), cfg.n_jobs)
    results = Parallel(n_jobs=cfg.n_jobs, prefer="threads")(
        delayed(_shift_job)(ctx, *task) for task in tasks
    )

    exponents = [row for res in results for row in res["exponents"]]
    spectra = [row for res in results for row in res["spectra"]]
    summary_rows = [row for res in results for row in res["summary"]]

    files = [
        write_csv(out_dir / "exponents.csv", pl.DataFrame(exponents)),
        write_csv(
            out_dir / "predicted.csv", _predicted_frame([(r, ctx.predicted[r]) for r in cfg.r_list])
        ),
    ]
    if spectra:
        files.append(write_csv(out_dir / "spectra.csv", pl.DataFrame(spectra)))
        files.append(write_csv(out_dir / "spectrum_summary.csv", pl.DataFrame(summary_rows)))

    fraction = float(np.mean([row["pass"] for row in exponents])) if exponents else 0.0
    passed = fraction >= cfg.tolerances.exponent_pass_fraction
    summary = {
        "pairs": len(exponents),
        "pass_fraction": fraction,
        "required_fraction": cfg.tolerances.exponent_pass_fraction,
        "tolerance": cfg.tolerances.exponent,
        "shifts": {str(r): ctx.predicted[r].shift for r in cfg.r_list},
        "max_spectrum_deviation": max((row["deviation"] for row in summary_rows), default=None),
    }
    logger.info(
        "Exponent shift: %.1f%% of %d pairs within tolerance", 100 * fraction, len(exponents)
    )
    return ExperimentOutcome(cfg.name, cfg.kind, passed, summary, files)


# ----------------------------------------------------------------------
# upper-bound
# ----------------------------------------------------------------------


def _upper_job(
    ctx: _Context, member: int, a: np.ndarray, xs: np.ndarray, bounds: np.ndarray
) -> dict[str, Any]:
    cfg = ctx.config
    member_field = random_member(ctx.xi, cfg.q, cfg.J, child_seed(cfg.seed, member))
    f = coefficient_field(member_field, cfg.implicit)
    lf = leaders(tensor_trace(f, a, ctx.spec).field)
    lo, hi = ctx.window
    rows = []
    for x, bound in zip(xs, bounds):
        est = pointwise_exponent(lf, x, lo, hi)
        rows.append(
            {
                "member": member,
                "a": float(a[0]),
                "x": float(x[0]),
                "h_hat": est.ls_slope,
                "lower_bound": bound,
                "pass": bool(est.ls_slope >= bound - cfg.tolerances.upper_bound_slack),
            }
        )
    pred = ctx.predicted[math.inf]
    est = leader_spectrum(lf, ctx.q_grid, pred.h, ctx.window)
    finite = np.isfinite(est.sigma_hat)
    excess = (
        float(np.max(est.sigma_hat[finite] - pred.upper_bound[finite])) if finite.any() else None
    )
    spectra = _spectrum_rows(math.nan, member, "member", est.h_grid, est.sigma_hat, pred.upper_bound)
    return {"rows": rows, "spectra": spectra, "excess": excess}


def run_upper_bound(ctx: _Context, out_dir: Path, h_min: float) -> ExperimentOutcome:
    cfg = ctx.config
    lo, hi = ctx.window
    xs = x_grid(cfg.x_grid, ctx.mu.dim)
    # 3λ 질량 기준 국소 차원 (leader 는 3λ 위의 최대)
    bounds = np.array([ball_local_dimension(ctx.mu, x, lo, hi).ls_slope + h_min for x in xs])
    heights = sample_heights(
        ctx.nu, 1.0, cfg.J + HEIGHT_EXTRA_DEPTH, cfg.members, child_seed(cfg.seed, 0)
    )

    logger.info("Upper bound: %d random members, %d points", cfg.members, len(xs))
    results = Parallel(n_jobs=cfg.n_jobs, prefer="threads")(
        delayed(_upper_job)(ctx, m, heights[m], xs, bounds) for m in range(cfg.members)
    )
    rows = [row for res in results for row in res["rows"]]
    spectra = [row for res in results for row in res["spectra"]]
    files = [
        write_csv(out_dir / "upper_bound.csv", pl.DataFrame(rows)),
        write_csv(out_dir / "spectra.csv", pl.DataFrame(spectra)),
        write_csv(out_dir / "predicted.csv", _predicted_frame([(math.inf, ctx.predicted[math.inf])])),
    ]
    violations = sum(1 for row in rows if not row["pass"])
    summary = {
        "points": len(rows),
        "violations": violations,
        "h_nu_min": h_min,
        "slack": cfg.tolerances.upper_bound_slack,
        "max_spectrum_excess": max(
            (res["excess"] for res in results if res["excess"] is not None), default=None
        ),
    }
    logger.info("Upper bound: %d of %d exponents below the bound", violations, len(rows))
    return ExperimentOutcome(cfg.name, cfg.kind, violations == 0, summary, files)


# ----------------------------------------------------------------------
# prevalent-shape
# ----------------------------------------------------------------------


def _prevalent_job(ctx: _Context, r_index: int, r: float, sample: int, a: np.ndarray) -> dict[str, Any]:
    cfg = ctx.config
    assert ctx.schedule is not None
    pred = ctx.predicted[r]
    member = random_member(ctx.xi, cfg.q, cfg.J, child_seed(cfg.seed, r_index, sample, 2))
    generators = generator_fields(ctx.xi, cfg.q, cfg.J, ctx.schedule, cfg.generator_p, ctx.mu.dim)
    rng = np.random.default_rng(child_seed(cfg.seed, r_index, sample, 1))
    f_beta = coefficient_field(
        combine(member, rng.uniform(-1.0, 1.0, len(generators)), generators), cfg.implicit
    )

    lf = leaders(tensor_trace(f_beta, a, ctx.spec, r).field)
    est = leader_spectrum(lf, ctx.q_grid, pred.h, ctx.window)
    deviation = spectrum_deviation(est, pred, cfg.tolerances.spectrum_central_fraction)
    return {
        "spectra": _spectrum_rows(r, sample, "beta-random", est.h_grid, est.sigma_hat, pred.prevalent),
        "summary": {
            "r": r,
            "sample": sample,
            "a": float(a[0]),
            "deviation": deviation,
            "low_confidence": est.low_confidence,
            "pass": deviation <= cfg.tolerances.spectrum,
        },
    }


def spectra_within(deviations: Sequence[float], tolerance: float) -> tuple[bool, float]:
    """모든 trace 의 스펙트럼 편차가 tolerance 이하일 때만 통과. NaN 은 실패."""
    worst = float(np.max(deviations)) if len(deviations) else float("nan")
    return bool(len(deviations)) and bool(np.all(np.asarray(deviations) <= tolerance)), worst


def run_prevalent_shape(ctx: _Context, out_dir: Path) -> ExperimentOutcome:
    cfg = ctx.config
    tasks = []
    for r_index, r in enumerate(cfg.r_list):
        heights = sample_heights(
            ctx.nu, r, cfg.J + HEIGHT_EXTRA_DEPTH, cfg.samples, child_seed(cfg.seed, r_index)
        )
        tasks += [(r_index, r, s, heights[s]) for s in range(cfg.samples)]

    logger.info("Prevalent shape: %d perturbed traces", len(tasks))
    results = Parallel(n_jobs=cfg.n_jobs, prefer="threads")(
        delayed(_prevalent_job)(ctx, *task) for task in tasks
    )
    summary_rows = [res["summary"] for res in results]
    files = [
        write_csv(out_dir / "spectra.csv", pl.DataFrame([row for res in results for row in res["spectra"]])),
        write_csv(out_dir / "spectrum_summary.csv", pl.DataFrame(summary_rows)),
        write_csv(
            out_dir / "predicted.csv", _predicted_frame([(r, ctx.predicted[r]) for r in cfg.r_list])
        ),
    ]
    fraction = float(np.mean([row["pass"] for row in summary_rows]))
    deviations = [row["deviation"] for row in summary_rows]
    passed, worst = spectra_within(deviations, cfg.tolerances.spectrum)
    summary = {
        "traces": len(summary_rows),
        "pass_fraction": fraction,
        "tolerance": cfg.tolerances.spectrum,
        "max_deviation": worst,
        "shifts": {str(r): ctx.predicted[r].shift for r in cfg.r_list},
    }
    logger.info(
        "Prevalent shape: max deviation %.3g (tolerance %.3g)", worst, cfg.tolerances.spectrum
    )
    return ExperimentOutcome(cfg.name, cfg.kind, passed, summary, files)


# ----------------------------------------------------------------------
# additivity
# ----------------------------------------------------------------------


def run_additivity(
    config: ExperimentConfig, named: dict[str, CapacityModel], out_dir: Path
) -> ExperimentOutcome:
    """정의된 곱 capacity 마다 τ_ξ − τ_μ − τ_ν (곱은 레벨 배열 전체를 합산)."""
    products = {k: m for k, m in named.items() if isinstance(m, ProductCapacity)}
    if not products:
        if config.mu not in named or config.nu not in named:
            raise PreconditionError("Additivity needs a product capacity or both mu and nu")
        products = {"xi": ProductCapacity(named[config.mu], named[config.nu])}

    q = default_q_grid(-5.0, 5.0, config.q_grid_step)
    frames = []
    worst = 0.0
    for name, xi in products.items():
        tau_xi = scaling_function(xi, q, config.level, exhaustive=True).tau
        tau_left = scaling_function(xi.left, q, config.level).tau
        tau_right = scaling_function(xi.right, q, config.level).tau
        residual = tau_xi - tau_left - tau_right
        worst = max(worst, float(np.max(np.abs(residual))))
        frames.append(
            pl.DataFrame(
                {
                    "capacity": [name] * len(q),
                    "q": q,
                    "tau_xi": tau_xi,
                    "tau_left": tau_left,
                    "tau_right": tau_right,
                    "residual": residual,
                }
            )
        )
    files = [write_csv(out_dir / "additivity.csv", pl.concat(frames))]
    summary = {
        "level": config.level,
        "max_abs_residual": worst,
        "tolerance": config.tolerances.additivity,
    }
    logger.info("Additivity at j=%d: max |residual| = %.3e", config.level, worst)
    return ExperimentOutcome(
        config.name, config.kind, worst <= config.tolerances.additivity, summary, files
    )


# ----------------------------------------------------------------------
# 진입점
# ----------------------------------------------------------------------


def run_experiment(
    config: ExperimentConfig, out_dir: str | Path, defaults: ToolDefaults | None = None
) -> ExperimentOutcome:
    """실험 실행 후 summary.json 과 manifest.json 작성.

    단계 중 예외가 나도 이미 쓴 파일은 manifest 에 남긴다.
    """
    defaults = defaults or ToolDefaults()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "config.json", config_dump(config))
    named = config.build_capacities()

    try:
        if config.kind == ExperimentKind.ADDITIVITY:
            outcome = run_additivity(config, named, out_dir)
        else:
            outcome = _run_trace_experiment(config, named, out_dir, defaults)
    except Exception:
        write_manifest(
            out_dir,
            config.name,
            [config.kind.claim],
            list(out_dir.glob("*.csv")) + [out_dir / "config.json"],
            {"status": "failed"},
        )
        raise

    summary_path = write_json(
        out_dir / "summary.json",
        {"experiment": config.name, "kind": config.kind.value, "pass": outcome.passed, **outcome.summary},
    )
    outcome.files += [out_dir / "config.json", summary_path]
    write_manifest(
        out_dir,
        config.name,
        [config.kind.claim],
        outcome.files,
        {"status": "pass" if outcome.passed else "fail", "seed": config.seed},
    )
    return outcome


def _run_trace_experiment(
    config: ExperimentConfig,
    named: dict[str, CapacityModel],
    out_dir: Path,
    defaults: ToolDefaults,
) -> ExperimentOutcome:
    mu, nu = named[config.mu], named[config.nu]
    if config.wavelet.d_prime != nu.dim:
        raise PreconditionError(f"Wavelet d'={config.wavelet.d_prime} but nu has dim {nu.dim}")
    spec = prepare_spec(config.wavelet)
    window = config.window()
    n = defaults.numerics
    ctx = _Context(
        config=config,
        mu=mu,
        nu=nu,
        xi=ProductCapacity(mu, nu),
        spec=spec,
        window=window,
        q_grid=default_q_grid(n.q_min, n.q_max, max(n.q_step, 0.1)),
    )
    mu_table, nu_table = scaling_tables([mu, nu], defaults)

    if config.kind == ExperimentKind.UPPER_BOUND:
        ctx.predicted[math.inf] = predicted_curves(
            mu, nu, "min", mu_table=mu_table, nu_table=nu_table
        )
        return run_upper_bound(ctx, out_dir, nu_table.h_min)

    ctx.schedule = prepare_schedule(config.wavelet, spec, config.J)
    write_json(out_dir / "schedule.json", ctx.schedule.to_dict())
    for r in config.r_list:
        ctx.predicted[r] = predicted_curves(mu, nu, r, mu_table=mu_table, nu_table=nu_table)

    if config.kind == ExperimentKind.SATURATING_SHIFT:
        ctx.points = reference_points(
            mu, config.test_points, config.J + HEIGHT_EXTRA_DEPTH, window
        )
        outcome = run_saturating_shift(ctx, out_dir)
    else:
        outcome = run_prevalent_shape(ctx, out_dir)
    outcome.files.append(out_dir / "schedule.json")
    return outcome


def config_dump(config: ExperimentConfig) -> dict[str, Any]:
    """결과 디렉터리에 남길 실제 사용 설정."""
    return {
        "name": config.name,
        "kind": config.kind.value,
        "claim": config.kind.claim,
        "capacities": config.capacities,
        "mu": config.mu,
        "nu": config.nu,
        "wavelet": asdict(config.wavelet),
        "q": config.q,
        "J": config.J,
        "level": config.level,
        "r_list": list(config.r_list),
        "samples": config.samples,
        "seed": config.seed,
        "fit_window": list(config.window()),
        "test_points": list(config.test_points),
        "x_grid": config.x_grid,
        "members": config.members,
        "generator_p": config.generator_p,
        "tolerances": asdict(config.tolerances),
    }
