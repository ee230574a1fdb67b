"""
Tensor parameter container
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from wbprune.errors import ShapeMismatchError


class Tensor:
    """Dense real-valued buffer with an optional gradient buffer of the same shape"""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad: Optional[np.ndarray] = None, dtype=None):
        array = np.asarray(data, dtype=dtype)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float32)
        self.data = np.ascontiguousarray(array)
        self.grad = None
        if grad is not None:
            self.set_grad(grad)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def set_grad(self, grad: np.ndarray):
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.data.shape:
            raise ShapeMismatchError("gradient buffer", grad.shape, self.data.shape)
        self.grad = grad

    def accumulate_grad(self, grad: np.ndarray):
        """Add to the gradient buffer, creating it on first use"""
        if self.grad is None:
            self.set_grad(np.array(grad, dtype=self.data.dtype, copy=True))
        else:
            if grad.shape != self.data.shape:
                raise ShapeMismatchError("gradient buffer", grad.shape, self.data.shape)
            self.grad += grad

    def zero_grad(self):
        self.grad = None

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), None if self.grad is None else self.grad.copy())

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype))

    def take(self, indices: Sequence[int], axis: int) -> "Tensor":
        """New tensor keeping only ``indices`` along ``axis`` (gradient dropped)"""
        return Tensor(np.take(self.data, list(indices), axis=axis))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, grad={'yes' if self.grad is not None else 'no'})"
