"""
Central finite-difference gradient checks (double precision)
"""

from typing import Callable

import numpy as np

FD_STEP = 1e-4


def numerical_gradient(fn: Callable[[], float], array: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """d fn / d array by central differences; ``array`` is perturbed in place and restored"""
    grad = np.zeros_like(array, dtype=np.float64)
    it = np.nditer(array, flags=["multi_index"], op_flags=["readwrite"])
    while not it.finished:
        index = it.multi_index
        original = array[index]
        array[index] = original + step
        plus = fn()
        array[index] = original - step
        minus = fn()
        array[index] = original
        grad[index] = (plus - minus) / (2 * step)
        it.iternext()
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| / max(|a| + |n|, floor) over the whole array"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)) + np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def projection_loss(output: np.ndarray, projection: np.ndarray) -> float:
    """Scalar sum(output * projection) used to check vector-valued kernels"""
    return float(np.sum(output * projection))
