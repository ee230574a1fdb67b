"""
Forward and backward passes over a sequential ModelGraph, with optional class-wise masks
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from wbprune.classes.graph import ModelGraph
from wbprune.classes.mask import ClasswiseMask
from wbprune.engine import ops
from wbprune.pruning.masks import masked_conv_backward, masked_conv_forward


@dataclass
class ForwardTrace:
    """Per-layer caches of one forward pass"""
    training: bool
    caches: List[Any] = field(default_factory=list)


def forward(graph: ModelGraph, x: np.ndarray, training: bool,
            masks: Optional[Dict[str, ClasswiseMask]] = None,
            soft_labels: Optional[np.ndarray] = None) -> Tuple[np.ndarray, ForwardTrace]:
    """Run the graph on a batch; masked conv layers need ``soft_labels``"""
    masks = masks or {}
    trace = ForwardTrace(training=training)
    out = x
    for layer in graph.layers:
        kind = layer.kind
        if kind == "conv":
            bias = None if layer.bias is None else layer.bias.data
            if layer.layer_id in masks:
                out, cache = masked_conv_forward(out, layer.weight.data, bias, masks[layer.layer_id], soft_labels,
                                                 layer.stride, layer.padding, layer_id=layer.layer_id)
                cache = ("masked", cache)
            else:
                out, cache = ops.conv2d_forward(out, layer.weight.data, bias, layer.stride, layer.padding)
                cache = ("plain", cache)
        elif kind == "bn":
            out, cache = ops.batchnorm2d_forward(
                out, layer.weight.data, layer.bias.data, layer.running_mean, layer.running_var,
                training=training, momentum=layer.momentum, eps=layer.eps,
                stats_ready=layer.num_batches_tracked > 0,
            )
            if training:
                layer.num_batches_tracked += 1
        elif kind == "relu":
            cache = out
            out = ops.relu_forward(out)
        elif kind == "maxpool":
            out, cache = ops.maxpool2d_forward(out, layer.kernel_size, layer.stride)
        elif kind == "gap":
            cache = out.shape
            out = ops.global_avgpool_forward(out)
        elif kind == "flatten":
            cache = out.shape
            out = out.reshape(out.shape[0], -1)
        elif kind == "linear":
            cache = out
            out = ops.linear_forward(out, layer.weight.data, None if layer.bias is None else layer.bias.data)
        else:
            raise ValueError(f"Unknown layer kind: {kind}")
        trace.caches.append(cache)
    return out, trace


def backward(graph: ModelGraph, trace: ForwardTrace, grad_logits: np.ndarray,
             masks: Optional[Dict[str, ClasswiseMask]] = None) -> np.ndarray:
    """Accumulate parameter and mask gradients; returns the gradient w.r.t. the input"""
    masks = masks or {}
    grad = grad_logits
    for layer, cache in zip(reversed(graph.layers), reversed(trace.caches)):
        kind = layer.kind
        if kind == "conv":
            tag, conv_cache = cache
            if tag == "masked":
                grad, grad_w, grad_b, grad_m = masked_conv_backward(grad, conv_cache)
                masks[layer.layer_id].values.accumulate_grad(grad_m)
            else:
                grad, grad_w, grad_b = ops.conv2d_backward(grad, conv_cache)
            layer.weight.accumulate_grad(grad_w)
            if layer.bias is not None and grad_b is not None:
                layer.bias.accumulate_grad(grad_b)
        elif kind == "bn":
            grad, grad_gamma, grad_beta = ops.batchnorm2d_backward(grad, cache)
            layer.weight.accumulate_grad(grad_gamma)
            layer.bias.accumulate_grad(grad_beta)
        elif kind == "relu":
            grad = ops.relu_backward(grad, cache)
        elif kind == "maxpool":
            grad = ops.maxpool2d_backward(grad, cache)
        elif kind == "gap":
            grad = ops.global_avgpool_backward(grad, cache)
        elif kind == "flatten":
            grad = grad.reshape(cache)
        elif kind == "linear":
            grad, grad_w, grad_b = ops.linear_backward(grad, cache, layer.weight.data, layer.bias is not None)
            layer.weight.accumulate_grad(grad_w)
            if grad_b is not None:
                layer.bias.accumulate_grad(grad_b)
    return grad


def predict(graph: ModelGraph, x: np.ndarray, masks: Optional[Dict[str, ClasswiseMask]] = None,
            soft_labels: Optional[np.ndarray] = None) -> np.ndarray:
    """Eval-mode logits"""
    logits, _ = forward(graph, x, training=False, masks=masks, soft_labels=soft_labels)
    return logits
