"""
Training augmentation, normalization and seeded minibatch iteration
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from wbprune.classes.dataset import AugmentConfig, LabeledImageSet
from wbprune.errors import ConfigError, ShapeMismatchError

# Fixed chunking keeps augmentation identical for any thread count
AUGMENT_CHUNKS = 4


def channel_stats(dataset: LabeledImageSet) -> Tuple[List[float], List[float]]:
    """Per-channel mean and std over every pixel of the set"""
    if len(dataset) == 0:
        raise ConfigError("cannot compute normalization statistics of an empty set")
    images = dataset.images.astype(np.float64)
    mean = images.mean(axis=(0, 2, 3))
    std = images.std(axis=(0, 2, 3))
    std = np.where(std > 0, std, 1.0)
    return mean.tolist(), std.tolist()


def normalize(images: np.ndarray, mean: Optional[Sequence[float]], std: Optional[Sequence[float]]) -> np.ndarray:
    if mean is None:
        return images
    if len(mean) != images.shape[1]:
        raise ShapeMismatchError("normalization statistics", (len(mean),), (images.shape[1],))
    mean = np.asarray(mean, dtype=images.dtype).reshape(1, -1, 1, 1)
    std = np.asarray(std, dtype=images.dtype).reshape(1, -1, 1, 1)
    return (images - mean) / std


def pad_crop_flip(images: np.ndarray, pad: int, hflip_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Zero-pad, random crop back to size, then mirror each image with probability ``hflip_prob``"""
    n, _, height, width = images.shape
    out = images.copy()
    if pad:
        padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        offsets = rng.integers(0, 2 * pad + 1, size=(n, 2))
        for i, (dy, dx) in enumerate(offsets):
            out[i] = padded[i, :, dy:dy + height, dx:dx + width]
    flips = rng.random(n) < hflip_prob
    out[flips] = out[flips][..., ::-1]
    return out


def augment(images: np.ndarray, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Training-time view of a batch: pad-crop, flip, then normalize once"""
    out = pad_crop_flip(images, config.pad_crop, config.hflip_prob, rng)
    return normalize(out, config.mean, config.std)


def augment_parallel(images: np.ndarray, config: AugmentConfig, rng: np.random.Generator,
                     threads: int = 1) -> np.ndarray:
    """``augment`` over fixed chunks with one child stream each, mapped onto ``threads`` workers"""
    seeds = rng.integers(0, 2 ** 63 - 1, size=AUGMENT_CHUNKS)
    chunks = np.array_split(np.arange(images.shape[0]), AUGMENT_CHUNKS)

    def run(item):
        seed, index = item
        return augment(images[index], config, np.random.default_rng(int(seed)))

    if threads <= 1:
        parts = [run(item) for item in zip(seeds, chunks)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, zip(seeds, chunks)))
    return np.concatenate(parts)


def minibatches(n: int, batch_size: int, rng: Optional[np.random.Generator] = None,
                shuffle: bool = True) -> Iterator[np.ndarray]:
    """Index arrays covering 0..n-1 once; the last batch may be short"""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    order = rng.permutation(n) if shuffle and rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
