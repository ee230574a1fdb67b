"""
Forward/backward kernels for the CNN layers used by wbprune

Activations are plain numpy arrays in N x C x H x W layout; every forward returns
``(output, cache)`` and the matching backward consumes that cache.
"""

import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from wbprune.errors import (
    BatchNormStateError, LabelError, MissingActivationError, NonFiniteError, ShapeMismatchError,
)
from wbprune.interface.config.constants import BATCHNORM_EPS, BATCHNORM_MOMENTUM, DEBUG_ENV

_debug_checks = os.environ.get(DEBUG_ENV, "") not in ("", "0")


def set_debug_checks(enabled: bool):
    """Turn NaN/Inf checks after every kernel on or off"""
    global _debug_checks
    _debug_checks = bool(enabled)


def check_finite(name: str, *arrays):
    if not _debug_checks:
        return
    for array in arrays:
        if array is not None and not np.all(np.isfinite(array)):
            raise NonFiniteError(f"{name} produced NaN or Inf")


def conv_output_size(size: int, kernel_size: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel_size) // stride + 1


# ===== LOWERING =====

def im2col(x: np.ndarray, kernel_size: int, stride: int = 1, padding: int = 0) -> Tuple[np.ndarray, int, int]:
    """Unfold N x C x H x W into (N*OH*OW) x (C*K*K) patch rows"""
    n, c, h, w = x.shape
    out_h = conv_output_size(h, kernel_size, stride, padding)
    out_w = conv_output_size(w, kernel_size, stride, padding)
    img = np.pad(x, [(0, 0), (0, 0), (padding, padding), (padding, padding)], mode="constant")
    col = np.empty((n, c, kernel_size, kernel_size, out_h, out_w), dtype=x.dtype)
    for y in range(kernel_size):
        y_max = y + stride * out_h
        for x_off in range(kernel_size):
            x_max = x_off + stride * out_w
            col[:, :, y, x_off, :, :] = img[:, :, y:y_max:stride, x_off:x_max:stride]
    # (N, C, K, K, OH, OW) -> (N, OH, OW, C, K, K)
    col = col.transpose(0, 4, 5, 1, 2, 3).reshape(n * out_h * out_w, -1)
    return col, out_h, out_w


def col2im(col: np.ndarray, x_shape: Tuple[int, int, int, int], kernel_size: int,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """Fold patch rows back to N x C x H x W, summing overlapping contributions"""
    n, c, h, w = x_shape
    out_h = conv_output_size(h, kernel_size, stride, padding)
    out_w = conv_output_size(w, kernel_size, stride, padding)
    col = col.reshape(n, out_h, out_w, c, kernel_size, kernel_size).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * padding + stride - 1, w + 2 * padding + stride - 1), dtype=col.dtype)
    for y in range(kernel_size):
        y_max = y + stride * out_h
        for x_off in range(kernel_size):
            x_max = x_off + stride * out_w
            img[:, :, y:y_max:stride, x_off:x_max:stride] += col[:, :, y, x_off, :, :]
    return img[:, :, padding:padding + h, padding:padding + w]


# ===== CONVOLUTION =====

@dataclass
class ConvCache:
    x: Optional[np.ndarray]
    weight: np.ndarray
    stride: int
    padding: int
    cols: Optional[np.ndarray]
    has_bias: bool
    out_shape: Tuple[int, int, int, int]


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None,
                   stride: int = 1, padding: int = 0) -> Tuple[np.ndarray, ConvCache]:
    """Cross-correlation of ``x`` with ``weight`` plus broadcast bias"""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError("conv2d input vs weight", x.shape, weight.shape)
    if weight.shape[2] != weight.shape[3]:
        raise ShapeMismatchError("conv2d square kernel", weight.shape[2:], (weight.shape[2], weight.shape[2]))
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d needs stride >= 1 and padding >= 0, got stride={stride} padding={padding}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeMismatchError("conv2d bias", bias.shape, (weight.shape[0],))

    n = x.shape[0]
    c_out, _, k, _ = weight.shape
    cols, out_h, out_w = im2col(x, k, stride, padding)
    out = cols @ weight.reshape(c_out, -1).T
    out = out.reshape(n, out_h, out_w, c_out).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.reshape(1, -1, 1, 1)
    check_finite("conv2d_forward", out)
    cache = ConvCache(x=x, weight=weight, stride=stride, padding=padding, cols=cols,
                      has_bias=bias is not None, out_shape=out.shape)
    return out, cache


def conv2d_backward(grad_out: np.ndarray, cache: Optional[ConvCache]
                    ) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Gradients with respect to input, weight and bias"""
    if cache is None or cache.x is None:
        raise MissingActivationError("conv2d_backward needs the input saved by conv2d_forward")
    if grad_out.shape != cache.out_shape:
        raise ShapeMismatchError("conv2d grad_out vs forward output", grad_out.shape, cache.out_shape)

    weight = cache.weight
    c_out, _, k, _ = weight.shape
    cols = cache.cols
    if cols is None:
        cols, _, _ = im2col(cache.x, k, cache.stride, cache.padding)
    grad_mat = grad_out.transpose(0, 2, 3, 1).reshape(-1, c_out)
    grad_weight = (grad_mat.T @ cols).reshape(weight.shape)
    grad_bias = grad_out.sum(axis=(0, 2, 3)) if cache.has_bias else None
    grad_cols = grad_mat @ weight.reshape(c_out, -1)
    grad_input = col2im(grad_cols, cache.x.shape, k, cache.stride, cache.padding)
    check_finite("conv2d_backward", grad_input, grad_weight, grad_bias)
    return grad_input, grad_weight, grad_bias


# ===== CHANNEL SCALE =====

def channel_scale_forward(x: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """output[n, c] = x[n, c] * scale[n, c]"""
    if x.ndim != 4 or scale.shape != x.shape[:2]:
        raise ShapeMismatchError("channel_scale input vs scale", x.shape, scale.shape)
    out = x * scale[:, :, None, None]
    check_finite("channel_scale_forward", out)
    return out


def channel_scale_backward(grad_out: np.ndarray, x: np.ndarray, scale: np.ndarray
                           ) -> Tuple[np.ndarray, np.ndarray]:
    if grad_out.shape != x.shape:
        raise ShapeMismatchError("channel_scale grad_out vs input", grad_out.shape, x.shape)
    grad_input = grad_out * scale[:, :, None, None]
    grad_scale = np.einsum("nchw,nchw->nc", grad_out, x)
    check_finite("channel_scale_backward", grad_input, grad_scale)
    return grad_input, grad_scale


# ===== ACTIVATION / POOLING / LINEAR =====

def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


@dataclass
class PoolCache:
    x_shape: Tuple[int, int, int, int]
    argmax: np.ndarray
    kernel_size: int
    stride: int


def maxpool2d_forward(x: np.ndarray, kernel_size: int = 2, stride: int = 2) -> Tuple[np.ndarray, PoolCache]:
    if x.ndim != 4:
        raise ShapeMismatchError("maxpool2d input", x.shape, ("N", "C", "H", "W"))
    n, c, h, w = x.shape
    cols, out_h, out_w = im2col(x.reshape(n * c, 1, h, w), kernel_size, stride, 0)
    argmax = np.argmax(cols, axis=1)
    out = cols[np.arange(cols.shape[0]), argmax].reshape(n, c, out_h, out_w)
    return out, PoolCache(x_shape=x.shape, argmax=argmax, kernel_size=kernel_size, stride=stride)


def maxpool2d_backward(grad_out: np.ndarray, cache: PoolCache) -> np.ndarray:
    n, c, h, w = cache.x_shape
    k = cache.kernel_size
    grad_cols = np.zeros((cache.argmax.size, k * k), dtype=grad_out.dtype)
    grad_cols[np.arange(cache.argmax.size), cache.argmax] = grad_out.reshape(-1)
    grad_input = col2im(grad_cols, (n * c, 1, h, w), k, cache.stride, 0)
    return grad_input.reshape(n, c, h, w)


def global_avgpool_forward(x: np.ndarray) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeMismatchError("global_avgpool input", x.shape, ("N", "C", "H", "W"))
    return x.mean(axis=(2, 3))


def global_avgpool_backward(grad_out: np.ndarray, x_shape: Tuple[int, int, int, int]) -> np.ndarray:
    n, c, h, w = x_shape
    grad = grad_out[:, :, None, None] / (h * w)
    return np.broadcast_to(grad, x_shape).astype(grad_out.dtype, copy=True)


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError("linear input vs weight", x.shape, weight.shape)
    out = x @ weight.T
    if bias is not None:
        out = out + bias
    check_finite("linear_forward", out)
    return out


def linear_backward(grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray, has_bias: bool = True
                    ) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    grad_input = grad_out @ weight
    grad_weight = grad_out.T @ x
    grad_bias = grad_out.sum(axis=0) if has_bias else None
    check_finite("linear_backward", grad_input, grad_weight, grad_bias)
    return grad_input, grad_weight, grad_bias


# ===== BATCHNORM =====

@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    gamma: np.ndarray
    inv_std: np.ndarray
    training: bool


def batchnorm2d_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                        running_mean: Optional[np.ndarray], running_var: Optional[np.ndarray],
                        training: bool, momentum: float = BATCHNORM_MOMENTUM, eps: float = BATCHNORM_EPS,
                        stats_ready: bool = True) -> Tuple[np.ndarray, BatchNormCache]:
    """Batch statistics in training mode (running averages updated in place), running statistics in eval"""
    if x.ndim != 4 or gamma.shape != (x.shape[1],):
        raise ShapeMismatchError("batchnorm2d input vs scale", x.shape, gamma.shape)

    if training:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        if running_mean is not None and running_var is not None:
            count = x.shape[0] * x.shape[2] * x.shape[3]
            unbiased = var * count / max(count - 1, 1)
            running_mean *= (1.0 - momentum)
            running_mean += momentum * mean
            running_var *= (1.0 - momentum)
            running_var += momentum * unbiased
    else:
        if running_mean is None or running_var is None or not stats_ready:
            raise BatchNormStateError("eval-mode batchnorm has no running statistics yet")
        mean, var = running_mean, running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = x_hat * gamma[None, :, None, None] + beta[None, :, None, None]
    out = out.astype(x.dtype, copy=False)
    check_finite("batchnorm2d_forward", out)
    return out, BatchNormCache(x_hat=x_hat, gamma=gamma, inv_std=inv_std.astype(x.dtype), training=training)


def batchnorm2d_backward(grad_out: np.ndarray, cache: BatchNormCache
                         ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x_hat = cache.x_hat
    grad_gamma = (grad_out * x_hat).sum(axis=(0, 2, 3))
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_x_hat = grad_out * cache.gamma[None, :, None, None]
    inv_std = cache.inv_std[None, :, None, None]
    if cache.training:
        m = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
        sum_g = grad_x_hat.sum(axis=(0, 2, 3), keepdims=True)
        sum_gx = (grad_x_hat * x_hat).sum(axis=(0, 2, 3), keepdims=True)
        grad_input = inv_std / m * (m * grad_x_hat - sum_g - x_hat * sum_gx)
    else:
        grad_input = grad_x_hat * inv_std
    check_finite("batchnorm2d_backward", grad_input, grad_gamma, grad_beta)
    return grad_input, grad_gamma, grad_beta


# ===== LOSS =====

def check_one_hot(labels: np.ndarray):
    if labels.ndim != 2:
        raise LabelError(f"labels must be N x D one-hot rows, got shape {labels.shape}")
    valid = np.all((labels == 0) | (labels == 1), axis=1) & (labels.sum(axis=1) == 1)
    if not np.all(valid):
        bad = int(np.flatnonzero(~valid)[0])
        raise LabelError(f"label row {bad} is not a one-hot vector")


def one_hot(labels: np.ndarray, num_classes: int, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes), dtype=dtype)
    out[np.arange(labels.shape[0]), labels] = 1
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean negative log-likelihood of the true class and its gradient (softmax - label) / N"""
    if logits.shape != labels.shape:
        raise ShapeMismatchError("cross-entropy logits vs labels", logits.shape, labels.shape)
    check_one_hot(labels)
    n = logits.shape[0]
    log_probs = log_softmax(logits)
    loss = float(-(labels * log_probs).sum() / n)
    grad = ((np.exp(log_probs) - labels) / n).astype(logits.dtype)
    check_finite("softmax_cross_entropy", grad)
    return loss, grad
