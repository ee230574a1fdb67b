"""
Channel scores, FLOPs cost model and pruning plans
"""

from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

ScoreKind = Literal["abs_sum", "signed_sum", "l2_norm", "random", "l1"]


class ChannelScoreTable(BaseModel):
    """Importance score of every prunable channel, per masked layer"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    scores: Dict[str, np.ndarray] = Field(..., description="layer_id -> score vector of length C_out")
    score_kind: ScoreKind = Field(default="abs_sum", description="How the scores were computed")

    def layer_ids(self) -> List[str]:
        return list(self.scores.keys())


class LayerCost(BaseModel):
    """Multiply-accumulate cost parameters of one conv or linear layer"""
    layer_id: str
    kind: Literal["conv", "linear"]
    in_channels: int = Field(..., ge=0, description="Input channels (conv) or input features (linear)")
    out_channels: int = Field(..., ge=0, description="Output channels (conv) or output features (linear)")
    kernel_size: int = Field(default=1, ge=1)
    stride: int = Field(default=1, ge=1)
    padding: int = Field(default=0, ge=0)
    out_h: int = Field(default=1, ge=1)
    out_w: int = Field(default=1, ge=1)
    producer: Optional[str] = Field(None, description="Prunable layer whose output channels feed this input")
    in_multiplier: int = Field(default=1, ge=1, description="Input features per producer channel")
    prunable: bool = Field(default=False, description="Output channels can be removed")


class FlopsModel(BaseModel):
    """Cost formulas for every counted layer"""
    entries: List[LayerCost] = Field(default_factory=list)

    def original_counts(self) -> Dict[str, int]:
        return {entry.layer_id: entry.out_channels for entry in self.entries if entry.prunable}


class LayerPlan(BaseModel):
    """Kept output channels of one prunable layer"""
    layer_id: str
    kept: List[int] = Field(..., description="Sorted kept output-channel indices")
    original_channels: int = Field(..., ge=1)
    flops_before: int = Field(default=0, ge=0)
    flops_after: int = Field(default=0, ge=0)

    @field_validator("kept")
    @classmethod
    def _kept_sorted_nonempty(cls, kept: List[int]) -> List[int]:
        if not kept:
            raise ValueError("every layer must keep at least one channel")
        if kept != sorted(set(kept)):
            raise ValueError("kept indices must be sorted and unique")
        return kept

    @property
    def pruning_rate(self) -> float:
        return 1.0 - len(self.kept) / self.original_channels


class PruningPlan(BaseModel):
    """Voting result: per-layer kept channels and the achieved FLOPs reduction"""
    layers: List[LayerPlan] = Field(default_factory=list)
    target_rate: float = Field(..., ge=0, lt=1, description="alpha")
    achieved_rate: float = Field(..., ge=0, le=1, description="alpha hat")
    removal_order: List[Tuple[str, int]] = Field(default_factory=list, description="(layer, channel) in removal order")
    score_kind: str = Field(default="abs_sum")
    mu: float = Field(default=0.5, description="Fold coefficient used with this plan")
    baseline_flops: int = Field(default=0, ge=0)
    pruned_flops: int = Field(default=0, ge=0)


# Helper functions for plan management
def kept_counts(plan: PruningPlan) -> Dict[str, int]:
    return {layer.layer_id: len(layer.kept) for layer in plan.layers}


def kept_indices(plan: PruningPlan) -> Dict[str, List[int]]:
    return {layer.layer_id: list(layer.kept) for layer in plan.layers}


def flops_reduction(plan: PruningPlan) -> float:
    """1 - pruned / baseline, straight from the recorded FLOPs"""
    if plan.baseline_flops == 0:
        return 0.0
    return 1.0 - plan.pruned_flops / plan.baseline_flops
