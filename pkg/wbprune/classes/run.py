"""
Run configuration and run report
"""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from wbprune.interface.config.constants import (
    DEFAULT_BATCH_SIZE, DEFAULT_FINETUNE_EPOCHS, DEFAULT_HFLIP_PROB, DEFAULT_LAMBDA, DEFAULT_LR, DEFAULT_LR_DECAY,
    DEFAULT_MILESTONE_FRACTIONS, DEFAULT_MOMENTUM, DEFAULT_MU, DEFAULT_PAD_CROP, DEFAULT_SIGMA,
    DEFAULT_WEIGHT_DECAY, MASK_EPOCH_FRACTION,
)


def default_milestones(finetune_epochs: int) -> List[int]:
    """Decay points at 50% and 75% of fine-tuning (150 and 225 of 300)"""
    points = {int(round(fraction * finetune_epochs)) for fraction in DEFAULT_MILESTONE_FRACTIONS}
    return sorted(p for p in points if 0 < p < finetune_epochs)


class TrainConfig(BaseModel):
    """Every knob of one pruning run"""
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    # Objective
    lam: float = Field(default=DEFAULT_LAMBDA, ge=0, alias="lambda", description="Sparsity weight lambda")
    mu: float = Field(default=DEFAULT_MU, description="Mean of off-class soft label draws")
    sigma: float = Field(default=DEFAULT_SIGMA, ge=0, description="Std of off-class soft label draws")
    norm_kind: Literal["l2_group", "l1"] = Field(default="l2_group")

    # Schedule
    mask_epochs: Optional[int] = Field(None, ge=1, description="T; 10% of finetune_epochs when unset")
    finetune_epochs: int = Field(default=DEFAULT_FINETUNE_EPOCHS, ge=0)
    lr: float = Field(default=DEFAULT_LR, gt=0)
    milestones: Optional[List[int]] = Field(None, description="Fine-tune epochs where lr is decayed")
    lr_decay: float = Field(default=DEFAULT_LR_DECAY, gt=0, le=1)
    momentum: float = Field(default=DEFAULT_MOMENTUM, ge=0, lt=1)
    weight_decay: float = Field(default=DEFAULT_WEIGHT_DECAY, ge=0)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=1)

    # Pruning
    alpha: float = Field(default=0.5, ge=0, lt=1, description="Target FLOPs reduction")
    score_kind: Literal["abs_sum", "signed_sum", "l2_norm"] = Field(default="abs_sum")
    method: Literal["whitebox", "random", "l1"] = Field(default="whitebox")
    classwise: bool = Field(default=True, description="False trains one mask row shared by all classes")
    soft_labels: bool = Field(default=True, description="False activates masks with hard one-hot labels")
    freeze_masks: bool = Field(default=False)
    freeze_weights: bool = Field(default=False)
    select_final_epoch: bool = Field(default=False, description="Keep the last fine-tune epoch, not the best")

    # Model
    arch: Literal["toycnn", "vgg16"] = Field(default="toycnn")
    conv_channels: List[int] = Field(default_factory=lambda: [16, 32, 32, 64])
    width_divisor: int = Field(default=1, ge=1, description="VGG16 channel divisor for desk-scale runs")
    dtype: Literal["float32", "float64"] = Field(default="float32")

    # Data
    dataset: Literal["synthetic", "cifar10"] = Field(default="synthetic")
    data_dir: Optional[str] = Field(None, description="CIFAR-10 directory; WHITEBOX_DATA_DIR when unset")
    num_classes: int = Field(default=10, ge=2)
    n_per_class: int = Field(default=500, ge=1)
    test_per_class: int = Field(default=100, ge=1)
    image_size: int = Field(default=32, ge=4)
    data_seed: int = Field(default=0, ge=0, description="Seed of the synthetic data, shared by seed sweeps")
    augment: bool = Field(default=True)
    pad_crop: int = Field(default=DEFAULT_PAD_CROP, ge=0)
    hflip_prob: float = Field(default=DEFAULT_HFLIP_PROB, ge=0, le=1)

    # Execution
    seed: int = Field(default=0, ge=0)
    threads: int = Field(default=1, ge=1)
    progress: bool = Field(default=False)

    @field_validator("conv_channels")
    @classmethod
    def _positive_channels(cls, channels: List[int]) -> List[int]:
        if not channels or min(channels) < 1:
            raise ValueError("conv_channels needs at least one positive width")
        return channels

    @model_validator(mode="after")
    def _fill_schedule(self):
        if self.mask_epochs is None:
            self.mask_epochs = max(1, int(round(MASK_EPOCH_FRACTION * self.finetune_epochs)))
        if self.milestones is None:
            self.milestones = default_milestones(self.finetune_epochs)
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ValueError(f"milestones must be strictly increasing, got {self.milestones}")
        if self.milestones and (self.milestones[0] < 1 or self.milestones[-1] >= self.finetune_epochs):
            raise ValueError(f"milestones must lie in [1, {self.finetune_epochs}), got {self.milestones}")
        return self

    @property
    def train_mu(self) -> float:
        return self.mu if self.soft_labels else 0.0

    @property
    def train_sigma(self) -> float:
        return self.sigma if self.soft_labels else 0.0


class EpochRecord(BaseModel):
    """One logged epoch of any training phase"""
    phase: str
    epoch: int = Field(..., ge=0)
    lr: float
    loss: float
    cross_entropy: float
    penalty: float = 0.0
    train_accuracy: float
    test_accuracy: float
    mask_norm: Optional[float] = Field(None, description="Mean mask column l2 norm after the epoch")


class LayerRow(BaseModel):
    layer: str
    original: int
    kept: int
    rate: float
    flops_before: int
    flops_after: int


class RunReport(BaseModel):
    """Curves, accuracies and FLOPs of one pipeline run"""
    method: str
    seed: int
    lam: float
    target_rate: float
    achieved_rate: float = Field(..., description="Equals the plan's achieved rate")
    baseline_flops: int
    pruned_flops: int
    masked_accuracy: Optional[float] = Field(None, description="Test accuracy after the mask phase")
    final_accuracy: float
    best_epoch: Optional[int] = None
    curves: List[EpochRecord] = Field(default_factory=list)
    layers: List[LayerRow] = Field(default_factory=list)
    timings: Dict[str, float] = Field(default_factory=dict, description="Wall-clock seconds per phase")
    phases: List[str] = Field(default_factory=list, description="Phases executed in this process")
