#!/usr/bin/env python3
"""
Multifractal trace lab 명령행 도구.

사용법:
    # capacity 별 τ, τ′, τ* (곱 capacity 는 가법성 잔차 포함)
    python scripts/trace_lab.py tau --config config/experiments/additivity.json --out results/tau

    # property (R) 인증과 offset 스케줄
    python scripts/trace_lab.py check-wavelet --config config/experiments/saturating_shift.json --out results/db4

    # 계수장 합성 (포화 계수장은 --implicit 로 파라미터만 저장)
    python scripts/trace_lab.py synthesize --config config/experiments/saturating_shift.json \\
        --kind saturating --implicit --out results/fields

    # 높이 a 에서 trace (closed-form / tensor / grid)
    python scripts/trace_lab.py trace --config config/experiments/saturating_shift.json \\
        --field results/fields/field.mfcf --a 0.3 --route tensor --out results/trace

    # leader 와 스펙트럼
    python scripts/trace_lab.py leaders --field results/trace/trace.mfcf --x 0.2 --out results/leaders
    python scripts/trace_lab.py spectrum --leaders results/leaders/leaders.csv --out results/spectrum

    # 전체 실험
    python scripts/trace_lab.py experiment --config config/experiments/saturating_shift.json --seed 7

종료 코드: 0 통과, 1 비교 실패, 2 설정 오류, 3 전제 조건 실패.
"""

import functools
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable

# 프로젝트 루트를 path에 추가
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import click
import numpy as np
import polars as pl

from scripts.mfa.analysis import (
    LeaderField,
    SpectrumMethod,
    default_window,
    exponent_map,
    histogram_spectrum,
    leader_spectrum,
    leaders,
)
from scripts.mfa.capacity import (
    ProductCapacity,
    default_level,
    default_q_grid,
    scaling_function,
)
from scripts.mfa.config import (
    ExperimentConfig,
    ToolDefaults,
    WaveletConfig,
    build_capacities,
    load_defaults,
)
from scripts.mfa.errors import ComparisonFailure, ConfigError, PreconditionError, TraceLabError
from scripts.mfa.experiments import prepare_schedule, prepare_spec, run_experiment
from scripts.mfa.io import (
    field_manifest,
    load_field,
    read_json,
    save_field,
    write_csv,
    write_json,
    write_manifest,
)
from scripts.mfa.logging_setup import console, setup_logging
from scripts.mfa.synthesis import (
    CoefficientField,
    SaturatingField,
    combine,
    generator_fields,
    random_member,
)
from scripts.mfa.trace import (
    TraceRoute,
    compare_traces,
    grid_trace,
    saturating_trace,
    tensor_trace,
    trace_from_grid,
)
from scripts.mfa.wavelet import certify_schedule, check_property_R

logger = logging.getLogger("trace_lab")

FIELD_FILE = "field.mfcf"
TRACE_FILE = "trace.mfcf"


def handle_errors(func: Callable[..., Any]) -> Callable[..., Any]:
    """TraceLabError 를 로그로 남기고 해당 종료 코드로 끝낸다."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except TraceLabError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.get_current_context().exit(e.exit_code)

    return wrapper


def _defaults() -> ToolDefaults:
    return click.get_current_context().obj["defaults"]


def _load_config(path: str, seed: int | None = None, implicit: bool | None = None) -> ExperimentConfig:
    config = ExperimentConfig.load(path, _defaults())
    overrides: dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if implicit:
        overrides["implicit"] = True
    return replace(config, **overrides) if overrides else config


def _saturating(config: ExperimentConfig) -> tuple[SaturatingField, Any, Any]:
    named = config.build_capacities()
    xi = ProductCapacity(named[config.mu], named[config.nu])
    spec = prepare_spec(config.wavelet)
    schedule = prepare_schedule(config.wavelet, spec, config.J)
    return SaturatingField(xi, config.q, config.J, schedule), spec, schedule


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="DEBUG 로그 출력")
@click.option(
    "--defaults",
    "defaults_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="도구 기본값 TOML (기본: config/default.toml)",
)
@click.pass_context
def cli(ctx: click.Context, verbose: bool, defaults_path: str | None) -> None:
    """Multifractal trace lab."""
    try:
        defaults = load_defaults(defaults_path)
    except ConfigError as e:
        setup_logging(verbose=verbose)
        logger.error(str(e))
        ctx.exit(e.exit_code)
    setup_logging(defaults.log_level, defaults.log_format, verbose)
    ctx.ensure_object(dict)
    ctx.obj["defaults"] = defaults


# ----------------------------------------------------------------------
# tau
# ----------------------------------------------------------------------


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--level", type=int, default=None, help="스캔 레벨 (기본: 메모리 정책 내 최대)")
@handle_errors
def tau(config_path: str, out_dir: str, level: int | None) -> None:
    """capacity 별 τ, τ′, τ* CSV 와 곱 capacity 의 가법성 잔차."""
    defaults = _defaults()
    data = read_json(config_path)
    if "capacities" not in data:
        raise ConfigError(f"{config_path} has no 'capacities' object")
    named = build_capacities(data["capacities"], defaults.numerics.max_dense_cells)
    level = level if level is not None else data.get("level")
    n = defaults.numerics
    step = float(data.get("q_grid_step", n.q_step))
    q = default_q_grid(n.q_min, n.q_max, step)
    out = Path(out_dir)

    tau_frames, star_frames, residual_frames = [], [], []
    worst = 0.0
    for name, model in named.items():
        j = int(level) if level is not None else default_level(model)
        table = scaling_function(model, q, j)
        tau_frames.append(
            pl.DataFrame(
                {
                    "capacity": [name] * len(q),
                    "level": [j] * len(q),
                    "q": q,
                    "tau": table.tau,
                    "tau_prime": table.deriv,
                }
            )
        )
        finite = np.isfinite(table.tau_star)
        star_frames.append(
            pl.DataFrame(
                {
                    "capacity": [name] * int(finite.sum()),
                    "h": table.h_grid[finite],
                    "tau_star": table.tau_star[finite],
                }
            )
        )
        if isinstance(model, ProductCapacity):
            tau_xi = scaling_function(model, q, j, exhaustive=True).tau
            tau_left = scaling_function(model.left, q, j).tau
            tau_right = scaling_function(model.right, q, j).tau
            residual = tau_xi - tau_left - tau_right
            worst = max(worst, float(np.max(np.abs(residual))))
            residual_frames.append(
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

    files = [
        write_csv(out / "tau.csv", pl.concat(tau_frames)),
        write_csv(out / "tau_star.csv", pl.concat(star_frames)),
    ]
    if residual_frames:
        files.append(write_csv(out / "additivity.csv", pl.concat(residual_frames)))
        console.print(f"max |tau_xi - tau_mu - tau_nu| = {worst:.3e}")
    write_manifest(out, "tau", ["prop-2.13"] if residual_frames else [], files)
    if residual_frames and worst > defaults.tolerances.additivity:
        raise ComparisonFailure(
            f"Additivity residual {worst:.3e} exceeds {defaults.tolerances.additivity:.1e}"
        )


# ----------------------------------------------------------------------
# check-wavelet
# ----------------------------------------------------------------------


@cli.command("check-wavelet")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@handle_errors
def check_wavelet(config_path: str, out_dir: str) -> None:
    """property (R) 격자 인증, offset 스케줄 탐색과 더 촘촘한 격자에서의 재인증."""
    defaults = _defaults()
    data = read_json(config_path)
    wcfg = WaveletConfig.from_dict(data.get("wavelet", {}))
    J = int(data.get("J", 16))
    out = Path(out_dir)

    spec = prepare_spec(wcfg)
    report = check_property_R(spec, wcfg.grid_resolution)
    write_json(out / "property_r.json", report.to_dict())
    console.print(
        f"{spec.name}: R1={report.r1} R2={report.r2} R3={report.r3} min S={report.min_s:.4f}"
    )
    if not report.passed:
        raise PreconditionError(f"{spec.name} does not satisfy property (R) on the grid")

    schedule = prepare_schedule(wcfg, spec, J)
    recheck = certify_schedule(
        spec,
        schedule,
        wcfg.grid_resolution + 1,
        schedule.alpha * defaults.tolerances.recertify_factor,
    )
    write_json(out / "schedule.json", schedule.to_dict())
    write_json(out / "certification.json", recheck.to_dict())
    console.print(
        f"schedule N={schedule.window} alpha={schedule.alpha:.4g}, "
        f"re-certified floor {recheck.floor:.4g} at 2^-{recheck.grid_resolution}"
    )
    if not recheck.passed:
        raise PreconditionError(
            f"Schedule fails re-certification: floor {recheck.floor:.4g} < {recheck.alpha:.4g}"
        )


# ----------------------------------------------------------------------
# synthesize / trace
# ----------------------------------------------------------------------


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option(
    "--kind",
    type=click.Choice(["saturating", "random", "perturbed"]),
    default="saturating",
    show_default=True,
)
@click.option("--seed", type=int, default=None, help="설정의 seed 를 덮어씀")
@click.option("--implicit", is_flag=True, help="포화 계수장을 파라미터만으로 저장")
@handle_errors
def synthesize(config_path: str, out_dir: str, kind: str, seed: int | None, implicit: bool) -> None:
    """계수장 합성 후 컨테이너 (또는 implicit manifest) 저장."""
    config = _load_config(config_path, seed, implicit)
    out = Path(out_dir)
    field: CoefficientField
    if kind == "random":
        named = config.build_capacities()
        xi = ProductCapacity(named[config.mu], named[config.nu])
        field = random_member(xi, config.q, config.J, config.seed)
    else:
        saturating, _, schedule = _saturating(config)
        field = saturating
        if kind == "perturbed":
            generators = generator_fields(saturating.xi, config.q, config.J, schedule, config.generator_p)
            betas = np.random.default_rng(config.seed).uniform(-1.0, 1.0, len(generators))
            field = combine(saturating, betas, generators)
    path = save_field(field, out / FIELD_FILE, implicit=implicit and kind == "saturating")
    write_manifest(out, "synthesize", [], [path, path.with_suffix(".mfcf.json")])
    console.print(f"{kind} field D={field.dim} J={field.max_level} -> {path}")


def _field_for_trace(config: ExperimentConfig, field_path: str | None) -> tuple[CoefficientField, Any]:
    """--field 가 없거나 implicit manifest 면 설정에서 포화 계수장을 다시 만든다."""
    if field_path is None or field_manifest(field_path).get("implicit"):
        saturating, spec, _ = _saturating(config)
        return saturating, spec
    return load_field(field_path), prepare_spec(config.wavelet)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--field", "field_path", type=click.Path(dir_okay=False), default=None)
@click.option("--a", "heights", type=float, multiple=True, required=True, help="높이 a (d′ 개)")
@click.option(
    "--route",
    type=click.Choice([r.value for r in TraceRoute]),
    default=TraceRoute.TENSOR.value,
    show_default=True,
)
@click.option("--r", "r_value", type=float, default=math.nan, help="기록용 r")
@click.option("--grid-level", type=int, default=None, help="grid 경로의 격자 레벨 (기본 J+1)")
@handle_errors
def trace(
    config_path: str,
    out_dir: str,
    field_path: str | None,
    heights: tuple[float, ...],
    route: str,
    r_value: float,
    grid_level: int | None,
) -> None:
    """높이 a 에서 trace 계수 계산."""
    config = _load_config(config_path)
    out = Path(out_dir)
    a = np.asarray(heights, dtype=float)

    if route == TraceRoute.CLOSED_FORM.value:
        named = config.build_capacities()
        spec = prepare_spec(config.wavelet)
        schedule = prepare_schedule(config.wavelet, spec, config.J)
        result = saturating_trace(
            named[config.mu], named[config.nu], schedule, spec, config.q, a, config.J, r=r_value
        )
    else:
        field, spec = _field_for_trace(config, field_path)
        result = tensor_trace(field, a, spec, r_value)
        if route == TraceRoute.GRID.value:
            J_grid = grid_level if grid_level is not None else field.max_level + 1
            samples = grid_trace(field, a, J_grid, spec)
            dwt = trace_from_grid(samples, spec)
            K = spec.support_length
            levels = [j for j in range(1, field.max_level + 1) if j in dwt.details and (1 << j) > 2 * K]
            comparison = compare_traces(result.field, dwt.details, levels, K)
            files = [
                write_csv(out / "grid_samples.csv", _samples_frame(samples)),
                write_csv(out / "route_comparison.csv", comparison),
            ]
            write_manifest(out, "trace-grid", [], files)
            worst = float(comparison["max_rel_error"].max()) if len(comparison) else 0.0
            console.print(f"tensor vs grid: max relative error {worst:.3e}")
            if worst > config.tolerances.grid_route:
                raise ComparisonFailure(
                    f"Grid route differs by {worst:.3e} > {config.tolerances.grid_route:.1e}"
                )
            return

    path = save_field(result.field, out / TRACE_FILE)
    sidecar = result.sidecar()
    if result.dG_profile is not None:
        sidecar["dG_profile"] = [level.tolist() for level in result.dG_profile]
    files = [path, path.with_suffix(".mfcf.json"), write_json(out / "trace.json", sidecar)]
    write_manifest(out, "trace", [], files)
    console.print(f"{route} trace at a={a.tolist()} -> {path}")


def _samples_frame(samples: np.ndarray) -> pl.DataFrame:
    grid = np.indices(samples.shape).reshape(samples.ndim, -1)
    columns: dict[str, Any] = {f"m{i}": grid[i] for i in range(samples.ndim)}
    if samples.ndim == 1:
        columns = {"m": grid[0]}
    columns["value"] = samples.reshape(-1)
    return pl.DataFrame(columns)


# ----------------------------------------------------------------------
# leaders / spectrum
# ----------------------------------------------------------------------


def _index_columns(dim: int) -> list[str]:
    return ["k"] if dim == 1 else [f"k{i}" for i in range(dim)]


def leaders_frame(lf: LeaderField) -> pl.DataFrame:
    frames = []
    for j, values in enumerate(lf.levels):
        grid = np.indices(values.shape).reshape(lf.dim, -1)
        columns: dict[str, Any] = {"level": np.full(values.size, j)}
        for name, column in zip(_index_columns(lf.dim), grid):
            columns[name] = column
        columns["leader"] = values.reshape(-1)
        frames.append(pl.DataFrame(columns))
    return pl.concat(frames)


def leaders_from_frame(frame: pl.DataFrame) -> LeaderField:
    """leaders.csv 를 LeaderField 로 (빠진 칸은 0)."""
    index_cols = [c for c in frame.columns if c == "k" or (c.startswith("k") and c[1:].isdigit())]
    if "level" not in frame.columns or "leader" not in frame.columns or not index_cols:
        raise ConfigError("Leaders CSV needs columns level, k (or k0..), leader")
    dim = len(index_cols)
    J = int(frame["level"].max())
    levels = []
    for j in range(J + 1):
        part = frame.filter(pl.col("level") == j)
        values = np.zeros((1 << j,) * dim)
        index = tuple(part[c].to_numpy().astype(np.int64) for c in index_cols)
        values[index] = part["leader"].to_numpy()
        levels.append(values)
    return LeaderField(dim, levels)


@cli.command("leaders")
@click.option("--field", "field_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--x", "xs", type=float, multiple=True, help="점별 지수를 계산할 x (1-D trace)")
@click.option("--window", type=(int, int), default=None, help="적합 창 j_min j_max")
@handle_errors
def leaders_cmd(field_path: str, out_dir: str, xs: tuple[float, ...], window: tuple[int, int] | None) -> None:
    """trace 계수장의 wavelet leader (level, k, leader) CSV."""
    field = load_field(field_path)
    lf = leaders(field)
    out = Path(out_dir)
    files = [write_csv(out / "leaders.csv", leaders_frame(lf))]
    if xs:
        window = window or default_window(lf.max_level)
        points = np.asarray(xs, dtype=float).reshape(-1, 1)
        files.append(write_csv(out / "exponents.csv", exponent_map(lf, points, window)))
    write_manifest(out, "leaders", [], files)
    console.print(f"leaders for levels 0..{lf.max_level} -> {files[0]}")


@cli.command()
@click.option("--leaders", "leaders_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option(
    "--method",
    type=click.Choice([m.value for m in SpectrumMethod]),
    default=SpectrumMethod.LEADER_LEGENDRE.value,
    show_default=True,
)
@click.option("--window", type=(int, int), default=None)
@click.option("--h-min", type=float, default=0.0, show_default=True)
@click.option("--h-max", type=float, default=3.0, show_default=True)
@click.option("--h-step", type=float, default=0.02, show_default=True)
@handle_errors
def spectrum(
    leaders_path: str,
    out_dir: str,
    method: str,
    window: tuple[int, int] | None,
    h_min: float,
    h_max: float,
    h_step: float,
) -> None:
    """leader CSV 에서 특이 스펙트럼 추정."""
    if h_step <= 0 or h_max <= h_min:
        raise ConfigError(f"Invalid h grid [{h_min}, {h_max}] step {h_step}")
    try:
        frame = pl.read_csv(leaders_path)
    except FileNotFoundError as e:
        raise ConfigError(f"Leaders file not found: {leaders_path}") from e
    lf = leaders_from_frame(frame)
    h = np.round(np.arange(h_min, h_max + 0.5 * h_step, h_step), 12)
    n = _defaults().numerics
    if method == SpectrumMethod.LEADER_HISTOGRAM.value:
        est = histogram_spectrum(lf, h, window)
    else:
        est = leader_spectrum(lf, default_q_grid(n.q_min, n.q_max, max(n.q_step, 0.1)), h, window)
    out = Path(out_dir)
    files = [
        write_csv(out / "spectrum.csv", est.to_frame()),
        write_json(
            out / "spectrum.json",
            {
                "method": est.method.value,
                "window": list(est.window),
                "low_confidence": est.low_confidence,
                "peak": list(est.peak),
                **{k: v for k, v in est.metadata.items() if k != "zeta"},
            },
        ),
    ]
    write_manifest(out, "spectrum", [], files)
    if est.low_confidence:
        logger.warning("Spectrum estimate flagged low-confidence")
    console.print(f"{method} spectrum peak at h={est.peak[0]:.4f}, sigma={est.peak[1]:.4f}")


# ----------------------------------------------------------------------
# experiment
# ----------------------------------------------------------------------


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--seed", type=int, default=None, help="설정의 seed 를 덮어씀")
@click.option("--implicit", is_flag=True, help="포화 계수장을 implicit 표현으로")
@click.option("--n-jobs", type=int, default=None, help="(r, 샘플) 병렬 작업 수")
@handle_errors
def experiment(
    config_path: str, out_dir: str | None, seed: int | None, implicit: bool, n_jobs: int | None
) -> None:
    """설정 파일의 실험 전체 실행. claim 을 만족하지 못하면 종료 코드 1."""
    config = _load_config(config_path, seed, implicit)
    if n_jobs is not None:
        config = replace(config, n_jobs=n_jobs)
    out = Path(out_dir) if out_dir else Path(config.output_dir) / config.name
    logger.info(f"Experiment {config.name} ({config.kind.value}, {config.kind.claim}) -> {out}")

    outcome = run_experiment(config, out, _defaults())
    status = "[green]PASS[/green]" if outcome.passed else "[red]FAIL[/red]"
    console.print(f"{config.name} ({config.kind.claim}): {status}")
    for key, value in outcome.summary.items():
        if not isinstance(value, dict):
            console.print(f"  {key}: {value}")
    if not outcome.passed:
        raise ComparisonFailure(f"{config.name} did not meet its tolerances; see {out}/summary.json")


def main(argv: list[str] | None = None) -> int:
    """console script 진입점. 종료 코드를 돌려준다."""
    try:
        rv = cli.main(args=argv, prog_name="trace-lab", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.Abort:
        return 1
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
