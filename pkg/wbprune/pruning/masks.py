"""
Class-wise mask mechanics: label softening, mask-modulated convolution, sparsity penalty
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from wbprune.classes.graph import ModelGraph, get_layer
from wbprune.classes.mask import ClasswiseMask, SoftLabelBatch, SparsityConfig, init_mask
from wbprune.engine.ops import (
    ConvCache, channel_scale_backward, channel_scale_forward, check_one_hot, conv2d_backward, conv2d_forward,
)
from wbprune.errors import ConfigError, MissingSoftLabelsError, ShapeMismatchError

RngLike = Union[np.random.Generator, int, None]


def _as_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def soften_labels(labels: np.ndarray, mu: float, sigma: float, rng: RngLike = None) -> SoftLabelBatch:
    """Keep each ground-truth entry at 1 and draw every other entry from Normal(mu, sigma)"""
    check_one_hot(labels)
    if sigma < 0:
        raise ConfigError(f"sigma must be non-negative, got {sigma}")
    seed = rng if isinstance(rng, int) else None
    generator = _as_rng(rng)
    noise = generator.normal(mu, sigma, size=labels.shape) if sigma > 0 else np.full(labels.shape, mu)
    values = np.where(labels == 1, 1.0, noise).astype(labels.dtype)
    return SoftLabelBatch(values=values, mu=mu, sigma=sigma, rng_seed=seed)


def expectation_labels(labels: np.ndarray, mu: float) -> np.ndarray:
    """Soft labels at their expectation: truth 1, every other class mu"""
    check_one_hot(labels)
    return np.where(labels == 1, 1.0, mu).astype(labels.dtype)


def constant_labels(n: int, num_classes: int, value: float, dtype=np.float32) -> np.ndarray:
    return np.full((n, num_classes), value, dtype=dtype)


def aggregate_scale(soft_labels: np.ndarray, mask: ClasswiseMask) -> np.ndarray:
    """scale[i, c] = sum_d soft[i, d] * M[d, c]"""
    values = mask.values.data
    if soft_labels.ndim != 2 or soft_labels.shape[1] != values.shape[0]:
        raise ShapeMismatchError(f"soft labels vs mask {mask.layer_id}", soft_labels.shape, values.shape)
    return (soft_labels @ values).astype(values.dtype, copy=False)


# ===== MASKED CONVOLUTION =====

@dataclass
class MaskedConvCache:
    conv: ConvCache
    conv_out: np.ndarray
    scale: np.ndarray
    soft_labels: np.ndarray
    has_bias: bool


def masked_conv_forward(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray],
                        mask: ClasswiseMask, soft_labels: Optional[np.ndarray],
                        stride: int = 1, padding: int = 0,
                        layer_id: Optional[str] = None) -> Tuple[np.ndarray, MaskedConvCache]:
    """conv(x, W) scaled per sample and output channel by soft @ M, then bias

    Scaling the conv output equals convolving with the per-sample channel-scaled
    weight; the bias is never mask-scaled.
    """
    if layer_id is not None and layer_id != mask.layer_id:
        raise ConfigError(f"mask {mask.layer_id} attached to conv layer {layer_id}")
    if soft_labels is None:
        raise MissingSoftLabelsError(f"masked conv {mask.layer_id} needs soft labels")
    if mask.num_channels != weight.shape[0]:
        raise ShapeMismatchError(f"mask {mask.layer_id} vs conv weight", mask.values.shape, weight.shape)

    conv_out, conv_cache = conv2d_forward(x, weight, None, stride, padding)
    scale = aggregate_scale(soft_labels, mask)
    out = channel_scale_forward(conv_out, scale)
    if bias is not None:
        out = out + bias.reshape(1, -1, 1, 1)
    cache = MaskedConvCache(conv=conv_cache, conv_out=conv_out, scale=scale,
                            soft_labels=soft_labels, has_bias=bias is not None)
    return out, cache


def masked_conv_backward(grad_out: np.ndarray, cache: MaskedConvCache
                         ) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray], np.ndarray]:
    """Gradients with respect to input, weight, bias and mask values"""
    grad_bias = grad_out.sum(axis=(0, 2, 3)) if cache.has_bias else None
    grad_conv, grad_scale = channel_scale_backward(grad_out, cache.conv_out, cache.scale)
    grad_input, grad_weight, _ = conv2d_backward(grad_conv, cache.conv)
    grad_mask = cache.soft_labels.T @ grad_scale
    return grad_input, grad_weight, grad_bias, grad_mask.astype(grad_weight.dtype, copy=False)


# ===== SPARSITY =====

def sparsity_penalty(masks: Dict[str, ClasswiseMask], config: SparsityConfig
                     ) -> Tuple[float, Dict[str, np.ndarray]]:
    """Penalty value and its gradient contribution lambda * dP/dM per layer

    l2_group sums the Euclidean norms of mask columns; a zero column gets a zero
    subgradient. l1 sums absolute values.
    """
    if not masks:
        raise ConfigError("sparsity_penalty needs at least one masked layer")
    total = 0.0
    grads = {}
    for layer_id, mask in masks.items():
        values = mask.values.data
        if config.norm_kind == "l2_group":
            norms = np.linalg.norm(values.astype(np.float64), axis=0)
            total += float(norms.sum())
            safe = np.where(norms > 0, norms, 1.0)
            grad = np.where(norms > 0, values / safe, 0.0)
        else:
            total += float(np.abs(values.astype(np.float64)).sum())
            grad = np.sign(values)
        grads[layer_id] = (config.lam * grad).astype(values.dtype)
    return total, grads


# ===== MASK SETS =====

def init_masks(graph: ModelGraph, num_classes: Optional[int] = None,
               exclude: Tuple[str, ...] = ()) -> Dict[str, ClasswiseMask]:
    """All-ones masks for every conv layer; ``num_classes=1`` gives the class-agnostic ablation"""
    rows = graph.num_classes if num_classes is None else num_classes
    masks = {}
    for layer in graph.layers:
        if layer.kind != "conv" or layer.layer_id in exclude:
            continue
        masks[layer.layer_id] = init_mask(layer.layer_id, rows, layer.out_channels, dtype=layer.weight.dtype)
    return masks


def check_masks(graph: ModelGraph, masks: Dict[str, ClasswiseMask], num_classes: int):
    """Every mask has D rows and matches the output width of its conv layer"""
    for layer_id, mask in masks.items():
        layer = get_layer(graph, layer_id)
        if layer.kind != "conv":
            raise ConfigError(f"mask {layer_id} is attached to a {layer.kind} layer")
        expected = (num_classes, layer.out_channels)
        if mask.values.shape != expected:
            raise ShapeMismatchError(f"mask {layer_id}", mask.values.shape, expected)


def fold_coefficient(mu: float, soft_labels: bool, num_classes: int) -> float:
    """Per-class weight used when folding masks into weights

    Soft training folds with mu. Hard labels fold with the uniform class prior
    1 / D; the class-agnostic single-row mask always saw a label of 1.
    """
    if num_classes == 1:
        return 1.0
    if not soft_labels:
        return 1.0 / num_classes
    return mu


def labels_for_mask_rows(labels: np.ndarray, mask_rows: int) -> np.ndarray:
    """Collapse one-hot labels to a single all-ones column for class-agnostic masks"""
    if mask_rows == labels.shape[1]:
        return labels
    if mask_rows == 1:
        return np.ones((labels.shape[0], 1), dtype=labels.dtype)
    raise ShapeMismatchError("labels vs mask rows", labels.shape, (labels.shape[0], mask_rows))
