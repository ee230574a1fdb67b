"""
Command-line entry point: one subcommand per pipeline phase plus FLOPs and report tools
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from wbprune.classes.run import RunReport, TrainConfig
from wbprune.datasets.cifar import export_cifar10_dir
from wbprune.errors import (
    ArchitectureParseError, ArtifactError, CheckpointError, ConfigError, DataFormatError, EmptyDatasetError,
    PhaseError, PlanError, UnreachableBudgetError,
)
from wbprune.harness.pipeline import (
    augment_config_for, build_model, fold_phase, initial_masks, phase_rng, prepare_data, run_pipeline, vote_phase,
)
from wbprune.harness.training import evaluate, finetune_phase, train_mask_phase
from wbprune.interface.config.constants import (
    ARCHITECTURES, CHECKPOINT_PHASES, DTYPES, EXIT_CONFIG_ERROR, EXIT_DATA_ERROR, EXIT_OK, EXIT_TRAINING_FAILURE,
    LOG_FORMAT, METHODS, NORM_KINDS, PHASE_FINETUNED, PHASE_MASK, PHASE_PRUNED, RESNET50_ARCH_FILE, SCORE_KINDS,
)
from wbprune.interface.utils.checkpoint import load_model, save_model
from wbprune.interface.utils.config_file import config_lines, load_config
from wbprune.interface.utils.database import (
    load_config_snapshot, load_plan, load_report, save_config, save_plan, save_report,
)
from wbprune.interface.utils.file_storage import (
    available_checkpoints, checkpoint_dir, config_path, init_run_dir, masks_dir, plan_path, report_path,
    reports_dir, require_artifact, require_checkpoint,
)
from wbprune.interface.utils.reports import (
    flops_frame, layer_rows, summary_line, total_flops_line, write_mask_heatmaps, write_reports,
)
from wbprune.pruning.flops import build_flops_model, load_arch_file

logger = logging.getLogger(__name__)

DEFAULT_RUN_DIR = os.path.join("runs", "latest")

CONFIG_ERRORS = (ConfigError, PlanError, UnreachableBudgetError, ArchitectureParseError)
DATA_ERRORS = (DataFormatError, ArtifactError, CheckpointError, EmptyDatasetError, FileNotFoundError)


# ===== SHARED HELPERS =====

def _config_from_args(args, base: Optional[TrainConfig] = None) -> TrainConfig:
    overrides = list(args.set or [])
    for flag in ("method", "arch", "score_kind", "norm_kind", "dtype", "threads"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{flag}={value}")
    return load_config(getattr(args, "config", None), overrides, seed=args.seed, base=base)


def _run_config(args) -> TrainConfig:
    """Snapshot of the run directory with command-line overrides on top"""
    snapshot = load_config_snapshot(require_artifact(config_path(args.out)))
    return _config_from_args(args, base=snapshot)


def _data(config: TrainConfig):
    train, test = prepare_data(config)
    return train, test, augment_config_for(config, train)


# ===== COMMANDS =====

def cmd_pipeline(args) -> int:
    config = _config_from_args(args)
    report = run_pipeline(config, run_dir=args.out, resume=args.resume)
    print(summary_line(load_plan(plan_path(args.out)), report))
    return EXIT_OK


def cmd_train_mask(args) -> int:
    config = _config_from_args(args)
    train, test, augment_config = _data(config)
    init_run_dir(args.out)
    save_config(config_path(args.out), config)
    graph = build_model(config, train.image_shape, train.num_classes)
    masks = initial_masks(config, graph)
    graph, masks, records = train_mask_phase(graph, masks, train, test, config, augment_config,
                                             phase_rng(config.seed, PHASE_MASK))
    masked_accuracy = records[-1].test_accuracy if records else None
    save_model(checkpoint_dir(args.out, PHASE_MASK), graph, masks, meta={
        "phase": PHASE_MASK, "masked_accuracy": masked_accuracy, "curves": [r.model_dump() for r in records],
    })
    if masks:
        write_mask_heatmaps(masks_dir(args.out), masks, config.score_kind)
    print(f"masked accuracy {masked_accuracy}")
    return EXIT_OK


def cmd_vote(args) -> int:
    config = _run_config(args)
    graph, masks, _ = load_model(require_checkpoint(args.out, PHASE_MASK))
    plan = vote_phase(config, graph, masks)
    save_config(config_path(args.out), config)
    save_plan(plan_path(args.out), plan)
    print(summary_line(plan))
    return EXIT_OK


def cmd_fold(args) -> int:
    directory = require_checkpoint(args.out, PHASE_MASK)
    plan = load_plan(require_artifact(plan_path(args.out)))
    graph, masks, meta = load_model(directory)
    pruned = fold_phase(graph, masks, plan)
    meta = dict(meta, phase=PHASE_PRUNED)
    save_model(checkpoint_dir(args.out, PHASE_PRUNED), pruned, meta=meta)
    print(f"pruned checkpoint written to {checkpoint_dir(args.out, PHASE_PRUNED)}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    config = _run_config(args)
    directory = require_checkpoint(args.out, PHASE_PRUNED)
    plan = load_plan(require_artifact(plan_path(args.out)))
    graph, _, meta = load_model(directory)
    train, test, augment_config = _data(config)
    graph, records, best_epoch = finetune_phase(graph, train, test, config, augment_config,
                                                phase_rng(config.seed, PHASE_FINETUNED))
    save_model(checkpoint_dir(args.out, PHASE_FINETUNED), graph,
               meta={"phase": PHASE_FINETUNED, "best_epoch": best_epoch})
    accuracy = evaluate(graph, test, augment_config, threads=config.threads)
    curves = meta.get("curves", []) + [r.model_dump() for r in records]
    report = RunReport(
        method=config.method, seed=config.seed, lam=config.lam,
        target_rate=plan.target_rate, achieved_rate=plan.achieved_rate,
        baseline_flops=plan.baseline_flops, pruned_flops=plan.pruned_flops,
        masked_accuracy=meta.get("masked_accuracy"), final_accuracy=accuracy, best_epoch=best_epoch,
        curves=curves, layers=layer_rows(plan),
    )
    save_report(report_path(args.out), report)
    print(summary_line(plan, report))
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _run_config(args)
    phase = args.checkpoint
    if phase is None:
        available = available_checkpoints(args.out)
        if not available:
            raise ArtifactError(f"no checkpoints under {args.out}")
        phase = available[-1]
    graph, masks, _ = load_model(require_checkpoint(args.out, phase))
    _, test, augment_config = _data(config)
    accuracy = evaluate(graph, test, augment_config, masks=masks, mu=config.train_mu, threads=config.threads)
    print(f"checkpoint={phase} top1={accuracy:.4f}")
    return EXIT_OK


def cmd_flops(args) -> int:
    if args.arch is not None:
        config = _config_from_args(args)
        size = config.image_size
        num_classes = 10 if config.dataset == "cifar10" else config.num_classes
        model = build_flops_model(build_model(config, (3, size, size), num_classes))
    else:
        path = args.arch_file or RESNET50_ARCH_FILE
        if not os.path.isfile(path):
            raise ArtifactError(f"architecture file not found: {path}")
        model = load_arch_file(path)
    frame = flops_frame(model)
    if args.csv:
        sys.stdout.write(frame.to_csv(index=False))
    else:
        print(frame.to_string(index=False))
        print(total_flops_line(model))
    return EXIT_OK


def cmd_export_data(args) -> int:
    config = _config_from_args(args)
    train, test = prepare_data(config)
    for path in export_cifar10_dir(train, test, args.directory):
        print(path)
    return EXIT_OK


def cmd_config(args) -> int:
    config = _config_from_args(args)
    print("\n".join(config_lines(config)))
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = args.run_dir or args.out
    plan = load_plan(require_artifact(plan_path(run_dir)))
    report = load_report(report_path(run_dir)) if os.path.exists(report_path(run_dir)) else None
    paths = write_reports(reports_dir(run_dir), plan, report)
    if PHASE_MASK in available_checkpoints(run_dir):
        _, masks, _ = load_model(checkpoint_dir(run_dir, PHASE_MASK))
        if masks:
            snapshot = load_config_snapshot(require_artifact(config_path(run_dir)))
            paths += write_mask_heatmaps(masks_dir(run_dir), masks, snapshot.score_kind)
    print(summary_line(plan, report))
    for path in paths:
        print(path)
    return EXIT_OK


# ===== PARSER =====

def _options_help(options) -> str:
    return "; ".join(f"{key}: {description}" for key, description in options.items())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="Config override (repeatable)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None, help="Evaluation/augmentation workers")
    common.add_argument("--out", default=DEFAULT_RUN_DIR, help="Run directory")

    configured = argparse.ArgumentParser(add_help=False)
    configured.add_argument("--config", default=None, help="key=value config file")
    configured.add_argument("--method", choices=list(METHODS), default=None, help=_options_help(METHODS))
    configured.add_argument("--arch", choices=list(ARCHITECTURES), default=None, help=_options_help(ARCHITECTURES))
    configured.add_argument("--score-kind", choices=list(SCORE_KINDS), default=None, help=_options_help(SCORE_KINDS))
    configured.add_argument("--norm-kind", choices=list(NORM_KINDS), default=None, help=_options_help(NORM_KINDS))
    configured.add_argument("--dtype", choices=list(DTYPES), default=None, help=_options_help(DTYPES))

    parser = argparse.ArgumentParser(prog="wbprune", description="Class-wise mask channel pruning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", parents=[common, configured], help="Run every phase")
    p.add_argument("--resume", choices=[PHASE_MASK, PHASE_PRUNED], default=None)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("train-mask", parents=[common, configured], help="Build and train with masks")
    p.set_defaults(func=cmd_train_mask)

    p = sub.add_parser("vote", parents=[common], help="Score channels and write the pruning plan")
    p.set_defaults(func=cmd_vote)

    p = sub.add_parser("fold", parents=[common], help="Fold masks and cut the graph per the plan")
    p.set_defaults(func=cmd_fold)

    p = sub.add_parser("finetune", parents=[common], help="Fine-tune the pruned checkpoint")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", parents=[common], help="Top-1 accuracy of a checkpoint")
    p.add_argument("--checkpoint", choices=CHECKPOINT_PHASES, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flops", parents=[common], help="Per-layer MAC table")
    p.add_argument("arch_file", nargs="?", default=None, help="Architecture description (default: ResNet-50)")
    p.add_argument("--arch", choices=list(ARCHITECTURES), default=None,
                   help="Count a built model instead: " + _options_help(ARCHITECTURES))
    p.add_argument("--config", default=None)
    p.add_argument("--csv", action="store_true", help="Machine-readable CSV output")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("export-data", parents=[common, configured],
                       help="Write the configured train/test sets as CIFAR-10 batch files")
    p.add_argument("directory", help="Output directory")
    p.set_defaults(func=cmd_export_data)

    p = sub.add_parser("config", parents=[common, configured], help="Print the resolved config as key = value lines")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("report", parents=[common], help="Write CSV reports for a run")
    p.add_argument("run_dir", nargs="?", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, PhaseError):
        return exit_code_for(error.cause)
    if isinstance(error, CONFIG_ERRORS):
        return EXIT_CONFIG_ERROR
    if isinstance(error, DATA_ERRORS):
        return EXIT_DATA_ERROR
    # divergence and anything else raised while training
    return EXIT_TRAINING_FAILURE


def error_line(error: BaseException) -> str:
    phase = error.phase if isinstance(error, PhaseError) else "-"
    cause = error.cause if isinstance(error, PhaseError) else error
    message = " ".join(str(cause).split())
    return f"error={type(cause).__name__} phase={phase} message={message}"


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT, stream=sys.stderr)
    try:
        return args.func(args)
    except Exception as e:
        logger.debug("command failed", exc_info=True)
        sys.stderr.write(error_line(e) + "\n")
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
