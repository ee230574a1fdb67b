"""
Labeled image sets and augmentation settings
"""

from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from wbprune.interface.config.constants import DEFAULT_HFLIP_PROB, DEFAULT_PAD_CROP


class LabeledImageSet(BaseModel):
    """Images in [0, 1] with integer class ids"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    images: np.ndarray = Field(..., description="N x C x H x W pixel values in [0, 1]")
    labels: np.ndarray = Field(..., description="N integer class ids in [0, D)")
    split: Literal["train", "test"] = Field(default="train", description="Split tag")
    num_classes: int = Field(..., ge=1, description="Category count D")

    @model_validator(mode="after")
    def _check_contents(self):
        if self.images.ndim != 4:
            raise ValueError(f"images must be N x C x H x W, got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError(f"labels of shape {self.labels.shape} do not match {self.images.shape[0]} images")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if self.images.size and (not np.all(np.isfinite(self.images))
                                 or self.images.min() < 0 or self.images.max() > 1):
            raise ValueError("image values must be finite and within [0, 1]")
        return self

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])


class AugmentConfig(BaseModel):
    """Pad-and-crop, horizontal flip and per-channel normalization"""
    pad_crop: int = Field(default=DEFAULT_PAD_CROP, ge=0, description="Zero padding before the random crop")
    hflip_prob: float = Field(default=DEFAULT_HFLIP_PROB, ge=0, le=1, description="Mirror probability")
    mean: Optional[List[float]] = Field(None, description="Per-channel mean, no normalization when unset")
    std: Optional[List[float]] = Field(None, description="Per-channel std")

    @model_validator(mode="after")
    def _check_stats(self):
        if (self.mean is None) != (self.std is None):
            raise ValueError("mean and std must be given together")
        if self.std is not None:
            if len(self.std) != len(self.mean):
                raise ValueError("mean and std need one entry per channel")
            if min(self.std) <= 0:
                raise ValueError("std entries must be positive")
        return self


# Helper functions for image sets
def subset(dataset: LabeledImageSet, indices) -> LabeledImageSet:
    return LabeledImageSet(images=dataset.images[indices], labels=dataset.labels[indices],
                           split=dataset.split, num_classes=dataset.num_classes)


def class_counts(dataset: LabeledImageSet) -> np.ndarray:
    return np.bincount(dataset.labels, minlength=dataset.num_classes)
