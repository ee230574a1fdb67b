"""
Joint training objective: masked cross-entropy plus lambda times the mask sparsity penalty
"""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from wbprune.classes.graph import ModelGraph
from wbprune.classes.mask import ClasswiseMask, SparsityConfig
from wbprune.engine.network import backward, forward
from wbprune.engine.ops import softmax_cross_entropy
from wbprune.pruning.masks import RngLike, labels_for_mask_rows, soften_labels, sparsity_penalty


@dataclass
class ObjectiveResult:
    loss: float
    cross_entropy: float
    penalty: float
    logits: np.ndarray


def total_objective(images: np.ndarray, labels: np.ndarray, graph: ModelGraph,
                    masks: Dict[str, ClasswiseMask], config: SparsityConfig,
                    mu: float, sigma: float, rng: RngLike = None,
                    soft_labels: Optional[np.ndarray] = None,
                    compute_grads: bool = True) -> ObjectiveResult:
    """Train-mode loss; with ``compute_grads`` the weight and mask gradients are accumulated

    Fresh soft labels are drawn from ``rng`` unless ``soft_labels`` is given.
    """
    if soft_labels is None and masks:
        rows = next(iter(masks.values())).num_classes
        mask_labels = labels_for_mask_rows(labels, rows)
        soft_labels = soften_labels(mask_labels, mu, sigma, rng).values

    logits, trace = forward(graph, images, training=True, masks=masks, soft_labels=soft_labels)
    cross_entropy, grad_logits = softmax_cross_entropy(logits, labels)

    penalty = 0.0
    penalty_grads: Dict[str, np.ndarray] = {}
    if masks:
        penalty, penalty_grads = sparsity_penalty(masks, config)

    if compute_grads:
        backward(graph, trace, grad_logits, masks)
        for layer_id, grad in penalty_grads.items():
            masks[layer_id].values.accumulate_grad(grad)

    return ObjectiveResult(
        loss=cross_entropy + config.lam * penalty,
        cross_entropy=cross_entropy,
        penalty=penalty,
        logits=logits,
    )
