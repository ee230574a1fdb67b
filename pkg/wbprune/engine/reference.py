"""
Slow reference implementations kept as test oracles
"""

from typing import Optional, Tuple

import numpy as np

from wbprune.engine.ops import conv2d_forward, conv_output_size


def naive_conv2d(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None,
                 stride: int = 1, padding: int = 0) -> Tuple[np.ndarray, int]:
    """Direct nested-loop cross-correlation; also returns the multiply-accumulate count"""
    n, c_in, h, w = x.shape
    c_out, _, k, _ = weight.shape
    out_h = conv_output_size(h, k, stride, padding)
    out_w = conv_output_size(w, k, stride, padding)
    padded = np.pad(x, [(0, 0), (0, 0), (padding, padding), (padding, padding)], mode="constant")
    out = np.zeros((n, c_out, out_h, out_w), dtype=np.float64)
    macs = 0
    for i in range(n):
        for o in range(c_out):
            for y in range(out_h):
                for x_pos in range(out_w):
                    acc = 0.0
                    for c in range(c_in):
                        for ky in range(k):
                            for kx in range(k):
                                acc += padded[i, c, y * stride + ky, x_pos * stride + kx] * weight[o, c, ky, kx]
                    macs += c_in * k * k
                    out[i, o, y, x_pos] = acc + (bias[o] if bias is not None else 0.0)
    # MACs per image
    return out.astype(x.dtype), macs // max(n, 1)


def literal_masked_conv(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray],
                        soft_labels: np.ndarray, mask: np.ndarray,
                        stride: int = 1, padding: int = 0) -> np.ndarray:
    """Sum over classes of convolutions with per-sample, per-class channel-scaled weights"""
    n = x.shape[0]
    outputs = []
    for i in range(n):
        total = None
        for d in range(mask.shape[0]):
            scaled = weight * (soft_labels[i, d] * mask[d])[:, None, None, None]
            out, _ = conv2d_forward(x[i:i + 1], scaled, None, stride, padding)
            total = out if total is None else total + out
        if bias is not None:
            total = total + bias.reshape(1, -1, 1, 1)
        outputs.append(total)
    return np.concatenate(outputs, axis=0)


def loop_channel_scale(x: np.ndarray, scale: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        for c in range(x.shape[1]):
            out[i, c] = x[i, c] * scale[i, c]
    return out
