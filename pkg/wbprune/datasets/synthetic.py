"""
Class-conditional Gaussian blob images for desk-scale runs
"""

from typing import Tuple

import numpy as np

from wbprune.classes.dataset import LabeledImageSet
from wbprune.errors import ConfigError


def _class_patterns(num_classes: int, channels: int, height: int, width: int,
                    rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Blob centre, width and colour per class; centres spread on a ring so classes differ spatially"""
    angles = 2 * np.pi * np.arange(num_classes) / num_classes + rng.uniform(0, 2 * np.pi)
    radius = 0.3 * min(height, width)
    centres = np.stack([height / 2 + radius * np.sin(angles), width / 2 + radius * np.cos(angles)], axis=1)
    widths = rng.uniform(0.08, 0.16, size=num_classes) * min(height, width)
    colours = rng.uniform(0.3, 1.0, size=(num_classes, channels))
    return centres, widths, colours


def synth_blobs(num_classes: int, n_per_class: int, channels: int = 3, height: int = 32, width: int = 32,
                seed: int = 0, split: str = "train", noise: float = 0.05, jitter: float = 1.5) -> LabeledImageSet:
    """Balanced set of class-conditional Gaussian blobs; identical for identical arguments

    Every class shares its pattern across splits (patterns depend only on the
    class count, shape and seed); the per-sample jitter and pixel noise are drawn
    from a split-specific stream.
    """
    if num_classes < 2:
        raise ConfigError(f"synthetic data needs at least 2 classes, got {num_classes}")
    if n_per_class < 0:
        raise ConfigError(f"n_per_class must be non-negative, got {n_per_class}")
    pattern_rng, train_rng, test_rng = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]
    centres, widths, colours = _class_patterns(num_classes, channels, height, width, pattern_rng)
    rng = train_rng if split == "train" else test_rng

    labels = np.repeat(np.arange(num_classes), n_per_class)
    total = labels.shape[0]
    rows = np.arange(height, dtype=np.float64).reshape(1, height, 1)
    cols = np.arange(width, dtype=np.float64).reshape(1, 1, width)
    centre = centres[labels] + rng.normal(0.0, jitter, size=(total, 2))
    spread = widths[labels].reshape(-1, 1, 1)
    blob = np.exp(-((rows - centre[:, 0, None, None]) ** 2 + (cols - centre[:, 1, None, None]) ** 2)
                  / (2 * spread ** 2))
    images = colours[labels][:, :, None, None] * blob[:, None, :, :]
    images = images + rng.normal(0.0, noise, size=images.shape)
    images = np.clip(images, 0.0, 1.0).astype(np.float32)

    order = rng.permutation(total)
    return LabeledImageSet(images=images[order], labels=labels[order].astype(np.int64),
                           split=split, num_classes=num_classes)


def synth_train_test(num_classes: int, n_per_class: int, test_per_class: int, channels: int = 3,
                     height: int = 32, width: int = 32, seed: int = 0) -> Tuple[LabeledImageSet, LabeledImageSet]:
    train = synth_blobs(num_classes, n_per_class, channels, height, width, seed=seed, split="train")
    test = synth_blobs(num_classes, test_per_class, channels, height, width, seed=seed, split="test")
    return train, test
