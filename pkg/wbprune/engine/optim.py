"""
SGD with momentum and coupled L2 weight decay, plus the step learning-rate schedule
"""

from typing import Dict, Iterable, List, Set

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from wbprune.classes.tensor import Tensor
from wbprune.errors import ShapeMismatchError


class OptimizerState(BaseModel):
    """Per-parameter momentum buffers and SGD hyperparameters"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    lr: float = Field(..., gt=0, description="Current learning rate")
    momentum: float = Field(default=0.9, ge=0, lt=1, description="Momentum coefficient")
    weight_decay: float = Field(default=0.0, ge=0, description="Coupled L2 coefficient")
    no_decay: Set[str] = Field(default_factory=set, description="Parameter names excluded from weight decay")
    buffers: Dict[str, np.ndarray] = Field(default_factory=dict, description="Momentum buffers by parameter name")


def sgd_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray], state: OptimizerState) -> Dict[str, Tensor]:
    """v <- momentum * v + grad + wd * param;  param <- param - lr * v

    Parameters without a gradient entry still move by their momentum buffer.
    """
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        elif grad.shape != param.shape:
            raise ShapeMismatchError(f"gradient of {name}", grad.shape, param.shape)
        if state.weight_decay and name not in state.no_decay:
            grad = grad + state.weight_decay * param.data

        buffer = state.buffers.get(name)
        if buffer is None or buffer.shape != param.shape:
            buffer = np.zeros_like(param.data)
        buffer *= state.momentum
        buffer += grad
        state.buffers[name] = buffer
        param.data -= (state.lr * buffer).astype(param.dtype, copy=False)
    return params


def collect_grads(params: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    return {name: p.grad for name, p in params.items() if p.grad is not None}


def zero_grads(params: Iterable[Tensor]):
    for param in params:
        param.zero_grad()


def step_lr(epoch: int, initial: float, milestones: List[int], factor: float = 0.1) -> float:
    """Learning rate at ``epoch`` (0-based): multiplied by ``factor`` once per milestone reached"""
    passed = sum(1 for milestone in milestones if epoch >= milestone)
    return initial * (factor ** passed)
