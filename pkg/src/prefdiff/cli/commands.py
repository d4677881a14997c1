"""
commands - One handler per subcommand.

Every handler that produces files writes its resolved configuration into the
output directory first. Handlers return the process exit status.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..context import RunContext, make_rng
from ..denoiser import DenoiserParams, load_checkpoint, save_checkpoint
from ..errors import DatasetMismatchError, format_success
from ..schedule import q_sample
from ..toyworld import (
    CpoTriplet,
    DiffusionGenerator,
    curate_cpo,
    curate_dpo,
    read_records,
    sample_dataset,
    write_records,
)
from ..trainer import (
    MetricsLog,
    cfg_sweep,
    evaluate,
    finetune,
    relative_error_reduction,
    train_base,
)
from ..variancelab import (
    ControlledFactors,
    decomposition_estimate,
    gaussian_factor,
    matched_variance_comparison,
)
from .config_io import RunConfig, write_config
from .report import write_report
from .verify import VERIFY_SEED, get_all_checks, get_fast_checks, run_checks

logger = logging.getLogger(__name__)

BASE_CHECKPOINT = "base.ckpt"
METRICS_FILE = "metrics.jsonl"
DECOMPOSITION_SCALE = 0.01


def _prepare(config: RunConfig, command: str) -> RunContext:
    ctx = config.context()
    path = write_config(config, ctx.output_path(f"{command}.cfg"))
    logger.info("Resolved configuration written to %s", path)
    return ctx


def _metrics(ctx: RunContext) -> MetricsLog:
    return MetricsLog(ctx.output_path(METRICS_FILE), run_id=ctx.run_id, seed=ctx.seed)


def _curated_path(ctx: RunContext, method: str) -> Path:
    return ctx.output_path(f"curated-{method}.jsonl")


def _load_base(ctx: RunContext, path: Path | None) -> DenoiserParams:
    return load_checkpoint(path or ctx.output_path(BASE_CHECKPOINT))


def _show_progress() -> bool:
    return sys.stderr.isatty()


def cmd_train_base(config: RunConfig, args: argparse.Namespace) -> int:
    ctx = _prepare(config, "train-base")
    params = train_base(
        config.task,
        config.train_config(),
        config.arch(),
        config.schedule.build(),
        metrics=_metrics(ctx),
        checkpoint_dir=ctx.out_dir,
        progress=_show_progress(),
    )
    path = save_checkpoint(params, ctx.output_path(BASE_CHECKPOINT))
    print(f"checkpoint: {path}")
    return 0


def cmd_curate(config: RunConfig, args: argparse.Namespace) -> int:
    ctx = _prepare(config, f"curate-{args.method}")
    base = _load_base(ctx, args.base)
    generator = DiffusionGenerator(base, config.schedule.build(), config.curate.guidance_w)
    dataset = sample_dataset(config.task, config.curate.source_size, ctx.seed)
    curate = curate_cpo if args.method == "cpo" else curate_dpo
    result = curate(
        config.task,
        generator,
        dataset,
        config.curate.curation(),
        ctx.seed,
        ctx.effective_workers(),
    )
    path = write_records(_curated_path(ctx, args.method), result.records)

    stats = result.stats
    _metrics(ctx).extend(
        0,
        {
            f"curate/{args.method}/generator_calls": stats.generator_calls,
            f"curate/{args.method}/retained": stats.retained,
            f"curate/{args.method}/filtered": stats.filtered,
        },
    )
    print(f"generator calls: {stats.generator_calls}")
    print(stats.summary())
    print(f"records: {path}")
    return 0


def cmd_finetune(config: RunConfig, args: argparse.Namespace) -> int:
    ctx = _prepare(config, f"finetune-{args.method}")
    base = _load_base(ctx, args.base)
    records = read_records(args.data or _curated_path(ctx, args.method))

    def snapshot(step: int, params: DenoiserParams) -> None:
        save_checkpoint(params, ctx.output_path(f"{args.method}-snapshot-{step:06d}.ckpt"))

    params = finetune(
        args.method,
        base,
        records,  # type: ignore[arg-type]
        config.finetune_config(),
        config.schedule.build(),
        metrics=_metrics(ctx),
        checkpoint_dir=ctx.out_dir,
        on_snapshot=snapshot,
        progress=_show_progress(),
    )
    path = save_checkpoint(params, ctx.output_path(f"{args.method}.ckpt"))
    print(f"checkpoint: {path}")
    return 0


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> int:
    ctx = _prepare(config, "eval")
    checkpoint = args.checkpoint or ctx.output_path(BASE_CHECKPOINT)
    params = load_checkpoint(checkpoint)
    schedule = config.schedule.build()
    n, seed, workers = config.eval.n_samples, ctx.seed, ctx.effective_workers()

    if args.cfg_sweep:
        scales = args.cfg_scales or config.eval.cfg_scales
        reports = cfg_sweep(params, config.task, scales, n, seed, schedule, workers)
    else:
        w = config.eval.guidance_w
        reports = [evaluate(params, config.task, n, w, seed, schedule, workers)]

    metrics = _metrics(ctx)
    tag = Path(checkpoint).stem
    for report in reports:
        prefix = f"eval/{tag}/w={report.guidance_w:g}"
        metrics.extend(0, {f"{prefix}/{k}": v for k, v in report.to_record().items()})
        print(
            f"w={report.guidance_w:g} controllability={report.controllability:.4f} "
            f"oracle={report.oracle_controllability:.4f} error_rate={report.error_rate:.4f} "
            f"mmd={report.mmd:.6f} nonfinite={report.n_nonfinite}"
        )

    if args.baseline is not None:
        baseline = load_checkpoint(args.baseline)
        for report in reports:
            before = evaluate(baseline, config.task, n, report.guidance_w, seed, schedule, workers)
            reduction = relative_error_reduction(before, report)
            metrics.append(0, f"eval/{tag}/w={report.guidance_w:g}/relative_reduction", reduction)
            print(
                f"w={report.guidance_w:g} error_rate baseline={before.error_rate:.4f} "
                f"absolute_reduction={before.error_rate - report.error_rate:.4f} "
                f"relative_reduction={reduction:.4f}"
            )
    return 0


def cmd_variance(config: RunConfig, args: argparse.Namespace) -> int:
    ctx = _prepare(config, "variance")
    params = _load_base(ctx, args.checkpoint)
    cpo = read_records(args.cpo_data or _curated_path(ctx, "cpo"))
    dpo = read_records(args.dpo_data or _curated_path(ctx, "dpo"))
    schedule = config.schedule.build()
    t_star, n_draws = config.variance.t_star, config.variance.n_draws

    report = matched_variance_comparison(params, cpo, dpo, t_star, n_draws, ctx.seed, schedule)

    first = cpo[0]
    if not isinstance(first, CpoTriplet):
        raise DatasetMismatchError("variance needs CPO triplets in the CPO dataset")
    dim = first.x0.shape[0]
    eps = make_rng(ctx.seed, "variance/baseline").standard_normal(dim)
    continuous = first.c_w.kind == "continuous"
    ctrl_dim = first.c_w.payload().size if continuous else params.arch.embed_dim
    factors = ControlledFactors(
        x=q_sample(schedule, first.x0, t_star, eps),
        c=first.c_w,
        t=t_star,
        eps=eps,
        ctrl=gaussian_factor(DECOMPOSITION_SCALE, ctrl_dim),
        nuis=gaussian_factor(DECOMPOSITION_SCALE, dim),
    )
    report.decomposition = decomposition_estimate(params, factors, n_draws, ctx.seed)

    _metrics(ctx).extend(
        0, {f"variance/t={t_star}/{k}": float(v) for k, v in report.to_record().items()}
    )
    print(f"t={t_star} var_cpo={report.var_cpo:.6g} ± {report.stderr_cpo:.2g}")
    print(f"t={t_star} var_dpo={report.var_dpo:.6g} ± {report.stderr_dpo:.2g}")
    print(f"var_cpo < var_dpo: {report.ordered}")
    d = report.decomposition
    print(f"v_ctrl={d.v_ctrl:.6g} v_nuis={d.v_nuis:.6g} v_cross={d.v_cross:.6g}")
    return 0


def cmd_verify(config: RunConfig, args: argparse.Namespace) -> int:
    _prepare(config, "verify")
    checks = get_fast_checks() if args.fast else get_all_checks()
    seed = VERIFY_SEED if args.seed is None else args.seed
    results = run_checks(checks, seed)
    failed = [r.name for r in results if not r.passed]
    summary = f"{len(results) - len(failed)}/{len(results)} checks passed"
    print(format_success("\n".join(r.line() for r in results), summary))
    return 1 if failed else 0


def cmd_report(config: RunConfig, args: argparse.Namespace) -> int:
    ctx = _prepare(config, "report")
    out_dir = ctx.out_dir or Path(config.run.out_dir)
    path, rows = write_report(out_dir, out_dir / "report.csv")
    print(f"report: {path} ({rows} records)")
    return 0
