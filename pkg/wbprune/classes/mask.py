"""
Class-wise mask, soft label batch and sparsity settings
"""

from typing import Dict, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from wbprune.classes.tensor import Tensor


class ClasswiseMask(BaseModel):
    """Mask M^l of shape D x C_out attached to one conv layer"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    layer_id: str = Field(..., description="Conv layer this mask scales")
    values: Tensor = Field(..., description="D x C_out mask values with gradient buffer")

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]


class SoftLabelBatch(BaseModel):
    """One-hot labels with every off-class entry replaced by a Normal(mu, sigma) draw"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray = Field(..., description="N x D softened labels")
    mu: float = Field(..., description="Mean of the off-class draws")
    sigma: float = Field(..., ge=0, description="Std of the off-class draws")
    rng_seed: Optional[int] = Field(None, description="Seed the draws came from, when known")


class SparsityConfig(BaseModel):
    """Weight and kind of the mask sparsity penalty"""
    lam: float = Field(default=1e-2, ge=0, alias="lambda", description="Penalty weight lambda")
    norm_kind: Literal["l2_group", "l1"] = Field(default="l2_group", description="Group l2 or elementwise l1")

    model_config = ConfigDict(populate_by_name=True)


# Helper functions for mask management
def init_mask(layer_id: str, num_classes: int, num_channels: int, dtype=np.float32) -> ClasswiseMask:
    """All-ones mask, the initial state before mask training"""
    return ClasswiseMask(layer_id=layer_id, values=Tensor(np.ones((num_classes, num_channels), dtype=dtype)))


def mask_column_norms(mask: ClasswiseMask) -> np.ndarray:
    return np.linalg.norm(mask.values.data.astype(np.float64), axis=0)


def mean_column_norm(masks: Dict[str, ClasswiseMask]) -> float:
    """Mean l2 norm of all mask columns across layers"""
    norms = [mask_column_norms(mask) for mask in masks.values()]
    if not norms:
        return 0.0
    return float(np.concatenate(norms).mean())


def restrict_mask(mask: ClasswiseMask, kept: list) -> ClasswiseMask:
    """Mask limited to the kept channels (M hat)"""
    return ClasswiseMask(layer_id=mask.layer_id, values=mask.values.take(kept, axis=1))
