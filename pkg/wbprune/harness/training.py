"""
Mask training, fine-tuning and evaluation loops
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from wbprune.classes.dataset import AugmentConfig, LabeledImageSet
from wbprune.classes.graph import ModelGraph, copy_graph, graph_dtype, graph_parameters
from wbprune.classes.mask import ClasswiseMask, SparsityConfig, mean_column_norm
from wbprune.classes.run import EpochRecord, TrainConfig
from wbprune.classes.tensor import Tensor
from wbprune.datasets.augment import augment_parallel, minibatches, normalize
from wbprune.engine.network import predict
from wbprune.engine.ops import one_hot
from wbprune.engine.optim import OptimizerState, collect_grads, sgd_step, step_lr, zero_grads
from wbprune.errors import EmptyDatasetError, TrainingDivergedError
from wbprune.interface.config.constants import MASK_PREFIX, PHASE_FINETUNED, PHASE_MASK
from wbprune.pruning.masks import expectation_labels, labels_for_mask_rows
from wbprune.pruning.objective import total_objective

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 500


def count_correct(logits: np.ndarray, labels: np.ndarray) -> int:
    """Number of rows whose arg-max logit is the true label"""
    return int(np.sum(np.argmax(logits, axis=1) == labels))


def evaluate(graph: ModelGraph, dataset: LabeledImageSet, augment_config: Optional[AugmentConfig] = None,
             masks: Optional[Dict[str, ClasswiseMask]] = None, mu: float = 0.5,
             threads: int = 1, batch_size: int = EVAL_BATCH_SIZE) -> float:
    """Top-1 accuracy in eval mode

    Masked graphs see expectation soft labels (truth 1, other classes mu).
    Batches are independent in eval mode, so ``threads`` does not change the result.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError(f"cannot evaluate on an empty {dataset.split} set")
    mean = augment_config.mean if augment_config else None
    std = augment_config.std if augment_config else None
    dtype = graph_dtype(graph)

    def correct(index: np.ndarray) -> int:
        images = normalize(dataset.images[index].astype(dtype), mean, std)
        soft = None
        if masks:
            rows = next(iter(masks.values())).num_classes
            labels = labels_for_mask_rows(one_hot(dataset.labels[index], dataset.num_classes, dtype), rows)
            soft = expectation_labels(labels, mu)
        logits = predict(graph, images, masks=masks, soft_labels=soft)
        return count_correct(logits, dataset.labels[index])

    batches = list(minibatches(len(dataset), batch_size, shuffle=False))
    if threads <= 1:
        counts = [correct(index) for index in batches]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(pool.map(correct, batches))
    return sum(counts) / len(dataset)


def _trainable(graph: ModelGraph, masks: Dict[str, ClasswiseMask], config: TrainConfig) -> Dict[str, Tensor]:
    params: Dict[str, Tensor] = {}
    if not config.freeze_weights:
        params.update(graph_parameters(graph))
    if not config.freeze_masks:
        params.update({f"{MASK_PREFIX}{layer_id}": mask.values for layer_id, mask in masks.items()})
    return params


def train_epoch(graph: ModelGraph, masks: Dict[str, ClasswiseMask], params: Dict[str, Tensor],
                train: LabeledImageSet, config: TrainConfig, state: OptimizerState, augment_config: AugmentConfig,
                rng: np.random.Generator, phase: str, epoch: int) -> Tuple[float, float, float, float]:
    """One pass over ``train``; returns mean loss, cross-entropy, penalty and train accuracy"""
    if len(train) == 0:
        raise EmptyDatasetError("training set is empty")
    sparsity = SparsityConfig(lam=config.lam, norm_kind=config.norm_kind)
    everything = list(graph_parameters(graph).values()) + [mask.values for mask in masks.values()]
    dtype = graph_dtype(graph)

    totals = np.zeros(3)
    correct = 0
    batches = list(minibatches(len(train), config.batch_size, rng))
    for step, index in enumerate(tqdm(batches, desc=f"{phase} {epoch}", disable=not config.progress, leave=False)):
        images = train.images[index].astype(dtype)
        if config.augment:
            images = augment_parallel(images, augment_config, rng, threads=config.threads)
        else:
            images = normalize(images, augment_config.mean, augment_config.std)
        labels = one_hot(train.labels[index], train.num_classes, dtype)

        result = total_objective(images, labels, graph, masks, sparsity,
                                 mu=config.train_mu, sigma=config.train_sigma, rng=rng)
        if not math.isfinite(result.loss):
            raise TrainingDivergedError(phase, epoch, step, state.lr, result.loss)
        sgd_step(params, collect_grads(params), state)
        zero_grads(everything)

        weight = len(index)
        totals += weight * np.array([result.loss, result.cross_entropy, result.penalty])
        correct += count_correct(result.logits, train.labels[index])
    loss, cross_entropy, penalty = totals / len(train)
    return float(loss), float(cross_entropy), float(penalty), correct / len(train)


def train_mask_phase(graph: ModelGraph, masks: Dict[str, ClasswiseMask], train: LabeledImageSet,
                     test: LabeledImageSet, config: TrainConfig, augment_config: AugmentConfig,
                     rng: np.random.Generator) -> Tuple[ModelGraph, Dict[str, ClasswiseMask], List[EpochRecord]]:
    """T epochs of the joint objective at the initial learning rate

    With no masks (baseline methods) this is plain training of the dense model.
    """
    no_decay = {f"{MASK_PREFIX}{layer_id}" for layer_id in masks}
    state = OptimizerState(lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay,
                           no_decay=no_decay)
    params = _trainable(graph, masks, config)
    records = []
    for epoch in range(config.mask_epochs):
        loss, cross_entropy, penalty, train_acc = train_epoch(
            graph, masks, params, train, config, state, augment_config, rng, PHASE_MASK, epoch)
        test_acc = evaluate(graph, test, augment_config, masks, mu=config.train_mu, threads=config.threads)
        norm = mean_column_norm(masks) if masks else None
        records.append(EpochRecord(phase=PHASE_MASK, epoch=epoch, lr=state.lr, loss=loss,
                                   cross_entropy=cross_entropy, penalty=penalty, train_accuracy=train_acc,
                                   test_accuracy=test_acc, mask_norm=norm))
        logger.info("phase=%s epoch=%d lr=%g loss=%.4f penalty=%.4f mask_norm=%s train_acc=%.4f test_acc=%.4f",
                    PHASE_MASK, epoch, state.lr, loss, penalty,
                    "-" if norm is None else f"{norm:.4f}", train_acc, test_acc)
    return graph, masks, records


def finetune_phase(graph: ModelGraph, train: LabeledImageSet, test: LabeledImageSet, config: TrainConfig,
                   augment_config: AugmentConfig, rng: np.random.Generator
                   ) -> Tuple[ModelGraph, List[EpochRecord], Optional[int]]:
    """Plain cross-entropy training under the step schedule

    Returns the best-test-accuracy graph (or the last one with
    ``select_final_epoch``), the epoch records and the selected epoch.
    """
    state = OptimizerState(lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay)
    params = graph_parameters(graph)
    records: List[EpochRecord] = []
    best_graph, best_acc, best_epoch = graph, -1.0, None
    for epoch in range(config.finetune_epochs):
        state.lr = step_lr(epoch, config.lr, config.milestones, config.lr_decay)
        loss, cross_entropy, _, train_acc = train_epoch(
            graph, {}, params, train, config, state, augment_config, rng, PHASE_FINETUNED, epoch)
        test_acc = evaluate(graph, test, augment_config, threads=config.threads)
        records.append(EpochRecord(phase=PHASE_FINETUNED, epoch=epoch, lr=state.lr, loss=loss,
                                   cross_entropy=cross_entropy, train_accuracy=train_acc, test_accuracy=test_acc))
        logger.info("phase=%s epoch=%d lr=%g loss=%.4f train_acc=%.4f test_acc=%.4f",
                    PHASE_FINETUNED, epoch, state.lr, loss, train_acc, test_acc)
        if config.select_final_epoch or test_acc > best_acc:
            best_graph, best_acc, best_epoch = copy_graph(graph), test_acc, epoch
    return best_graph, records, best_epoch
