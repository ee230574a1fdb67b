"""
The three-phase pruning pipeline: mask training, global voting with fold and surgery, fine-tuning
"""

import logging
import os
import time
from typing import Callable, Dict, List, Optional, Tuple, TypeVar

import numpy as np

from wbprune.classes.dataset import AugmentConfig, LabeledImageSet, class_counts
from wbprune.classes.graph import ModelGraph, build_toy_cnn, build_vgg16
from wbprune.classes.mask import ClasswiseMask
from wbprune.classes.plan import PruningPlan
from wbprune.classes.run import EpochRecord, RunReport, TrainConfig
from wbprune.datasets.augment import channel_stats
from wbprune.datasets.cifar import load_cifar10_dir
from wbprune.datasets.synthetic import synth_train_test
from wbprune.errors import ConfigError, PhaseError
from wbprune.harness.training import evaluate, finetune_phase, train_mask_phase
from wbprune.interface.config.constants import (
    DATA_DIR_ENV, PHASE_BUILD, PHASE_EVAL, PHASE_FINETUNED, PHASE_MASK, PHASE_PRUNED, PHASE_VOTE,
)
from wbprune.interface.utils.checkpoint import load_model, save_model
from wbprune.interface.utils.database import load_plan, save_config, save_plan, save_report
from wbprune.interface.utils.file_storage import (
    checkpoint_dir, config_path, init_run_dir, masks_dir, plan_path, report_path, reports_dir, require_checkpoint,
)
from wbprune.interface.utils.reports import layer_rows, write_mask_heatmaps, write_reports
from wbprune.pruning.masks import fold_coefficient, init_masks
from wbprune.pruning.scoring import channel_scores, random_scores, weight_l1_scores
from wbprune.pruning.surgery import apply_plan, prune_and_fold
from wbprune.pruning.voting import global_vote

logger = logging.getLogger(__name__)

T = TypeVar("T")

# One independent stream per phase so a resumed run draws the same numbers
RNG_STREAMS = {PHASE_BUILD: 0, PHASE_MASK: 1, PHASE_VOTE: 2, PHASE_FINETUNED: 3}


def phase_rng(seed: int, phase: str) -> np.random.Generator:
    streams = np.random.SeedSequence(seed).spawn(len(RNG_STREAMS))
    return np.random.default_rng(streams[RNG_STREAMS[phase]])


# ===== PHASES =====

def prepare_data(config: TrainConfig) -> Tuple[LabeledImageSet, LabeledImageSet]:
    if config.dataset == "cifar10":
        directory = config.data_dir or os.environ.get(DATA_DIR_ENV)
        if not directory:
            raise ConfigError(f"cifar10 needs data_dir or the {DATA_DIR_ENV} environment variable")
        train, test = load_cifar10_dir(directory)
    else:
        train, test = synth_train_test(config.num_classes, config.n_per_class, config.test_per_class, channels=3,
                                       height=config.image_size, width=config.image_size, seed=config.data_seed)
    logger.info("train images per class %s", class_counts(train).tolist())
    return train, test


def augment_config_for(config: TrainConfig, train: LabeledImageSet) -> AugmentConfig:
    """Pad-crop and flip settings with normalization statistics of the training split"""
    mean, std = channel_stats(train)
    return AugmentConfig(pad_crop=config.pad_crop, hflip_prob=config.hflip_prob, mean=mean, std=std)


def build_model(config: TrainConfig, input_shape: Tuple[int, int, int], num_classes: int) -> ModelGraph:
    dtype = np.dtype(config.dtype)
    if config.arch == "vgg16":
        return build_vgg16(num_classes, input_shape, seed=config.seed,
                           width_divisor=config.width_divisor, dtype=dtype)
    return build_toy_cnn(config.conv_channels, input_shape, num_classes, seed=config.seed, dtype=dtype)


def initial_masks(config: TrainConfig, graph: ModelGraph) -> Dict[str, ClasswiseMask]:
    """All-ones masks for the class-wise method; baselines train without masks"""
    if config.method != "whitebox":
        return {}
    return init_masks(graph, num_classes=None if config.classwise else 1)


def vote_phase(config: TrainConfig, graph: ModelGraph, masks: Dict[str, ClasswiseMask]) -> PruningPlan:
    """Score channels with the configured method and vote down to ``alpha``"""
    if config.method == "whitebox":
        if not masks:
            raise ConfigError("the whitebox method needs trained masks")
        scores = channel_scores(masks, config.score_kind)
        rows = next(iter(masks.values())).num_classes
        coefficient = fold_coefficient(config.mu, config.soft_labels, rows)
    elif config.method == "random":
        seed = int(phase_rng(config.seed, PHASE_VOTE).integers(0, 2 ** 31 - 1))
        scores, coefficient = random_scores(graph, seed), 1.0
    else:
        scores, coefficient = weight_l1_scores(graph), 1.0
    return global_vote(scores, graph, config.alpha, mu=coefficient)


def fold_phase(graph: ModelGraph, masks: Dict[str, ClasswiseMask], plan: PruningPlan) -> ModelGraph:
    """Fold restricted masks into the kept weights and cut the graph; masks are gone afterwards"""
    if masks:
        return prune_and_fold(graph, masks, plan, plan.mu)
    return apply_plan(graph, plan)


# ===== PIPELINE =====

class _PhaseRunner:
    """Times each phase and tags failures with the phase name"""

    def __init__(self):
        self.timings: Dict[str, float] = {}
        self.phases: List[str] = []

    def run(self, phase: str, fn: Callable[[], T]) -> T:
        start = time.perf_counter()
        logger.info("phase=%s status=start", phase)
        try:
            result = fn()
        except PhaseError:
            raise
        except Exception as e:
            logger.error("phase=%s status=failed error=%s", phase, e)
            raise PhaseError(phase, e) from e
        self.timings[phase] = round(time.perf_counter() - start, 6)
        self.phases.append(phase)
        logger.info("phase=%s status=done seconds=%.2f", phase, self.timings[phase])
        return result


def _records(meta: dict) -> List[EpochRecord]:
    return [EpochRecord(**record) for record in meta.get("curves", [])]


def run_pipeline(config: TrainConfig, run_dir: Optional[str] = None,
                 data: Optional[Tuple[LabeledImageSet, LabeledImageSet]] = None,
                 resume: Optional[str] = None) -> RunReport:
    """build → mask training → scoring → voting → fold → surgery → fine-tune → evaluate

    With ``run_dir`` every checkpoint phase is persisted and ``resume`` may name
    the ``masked`` or ``pruned`` checkpoint to continue from.
    """
    if resume is not None:
        if run_dir is None:
            raise ConfigError("resuming needs a run directory")
        if resume not in (PHASE_MASK, PHASE_PRUNED):
            raise ConfigError(f"can only resume from '{PHASE_MASK}' or '{PHASE_PRUNED}', got '{resume}'")
    runner = _PhaseRunner()
    if run_dir is not None:
        init_run_dir(run_dir)
        save_config(config_path(run_dir), config)

    train, test = data if data is not None else runner.run("data", lambda: prepare_data(config))
    augment_config = augment_config_for(config, train)
    curves: List[EpochRecord] = []
    masks: Dict[str, ClasswiseMask] = {}
    plan: Optional[PruningPlan] = None

    if resume == PHASE_PRUNED:
        graph, _, meta = load_model(require_checkpoint(run_dir, PHASE_PRUNED))
        plan = load_plan(plan_path(run_dir))
        curves, masked_accuracy = _records(meta), meta.get("masked_accuracy")
        logger.info("resumed from %s checkpoint", PHASE_PRUNED)
    else:
        if resume == PHASE_MASK:
            graph, masks, meta = load_model(require_checkpoint(run_dir, PHASE_MASK))
            curves, masked_accuracy = _records(meta), meta.get("masked_accuracy")
            logger.info("resumed from %s checkpoint", PHASE_MASK)
        else:
            graph = runner.run(PHASE_BUILD, lambda: build_model(config, train.image_shape, train.num_classes))
            masks = initial_masks(config, graph)
            rng = phase_rng(config.seed, PHASE_MASK)
            graph, masks, mask_records = runner.run(PHASE_MASK, lambda: train_mask_phase(
                graph, masks, train, test, config, augment_config, rng))
            curves = list(mask_records)
            masked_accuracy = curves[-1].test_accuracy if curves else None
            if run_dir is not None:
                save_model(checkpoint_dir(run_dir, PHASE_MASK), graph, masks, meta={
                    "phase": PHASE_MASK, "masked_accuracy": masked_accuracy,
                    "curves": [r.model_dump() for r in curves],
                })
                if masks:
                    write_mask_heatmaps(masks_dir(run_dir), masks, config.score_kind)

        plan = runner.run(PHASE_VOTE, lambda: vote_phase(config, graph, masks))
        graph = runner.run(PHASE_PRUNED, lambda: fold_phase(graph, masks, plan))
        if run_dir is not None:
            save_plan(plan_path(run_dir), plan)
            save_model(checkpoint_dir(run_dir, PHASE_PRUNED), graph, meta={
                "phase": PHASE_PRUNED, "masked_accuracy": masked_accuracy,
                "curves": [r.model_dump() for r in curves],
            })

    rng = phase_rng(config.seed, PHASE_FINETUNED)
    graph, finetune_records, best_epoch = runner.run(PHASE_FINETUNED, lambda: finetune_phase(
        graph, train, test, config, augment_config, rng))
    curves.extend(finetune_records)
    if run_dir is not None:
        save_model(checkpoint_dir(run_dir, PHASE_FINETUNED), graph, meta={
            "phase": PHASE_FINETUNED, "best_epoch": best_epoch,
        })

    final_accuracy = runner.run(PHASE_EVAL, lambda: evaluate(graph, test, augment_config, threads=config.threads))
    report = RunReport(
        method=config.method, seed=config.seed, lam=config.lam,
        target_rate=plan.target_rate, achieved_rate=plan.achieved_rate,
        baseline_flops=plan.baseline_flops, pruned_flops=plan.pruned_flops,
        masked_accuracy=masked_accuracy, final_accuracy=final_accuracy, best_epoch=best_epoch,
        curves=curves, layers=layer_rows(plan), timings=runner.timings, phases=runner.phases,
    )
    if run_dir is not None:
        save_report(report_path(run_dir), report)
        write_reports(reports_dir(run_dir), plan, report)
    logger.info("run finished: method=%s alpha_hat=%.4f accuracy=%.4f", config.method,
                plan.achieved_rate, final_accuracy)
    return report
