"""
CIFAR-10 binary format: 1 label byte followed by 3 x 32 x 32 channel-planar pixel bytes per record
"""

import logging
import os
from typing import List, Tuple

import numpy as np

from wbprune.classes.dataset import LabeledImageSet, subset
from wbprune.errors import DataFormatError
from wbprune.interface.config.constants import (
    CIFAR_IMAGE_SHAPE, CIFAR_NUM_CLASSES, CIFAR_TEST_FILES, CIFAR_TRAIN_FILES,
)

logger = logging.getLogger(__name__)


def parse_cifar10_bytes(buffer: bytes, split: str = "train",
                        image_shape: Tuple[int, int, int] = CIFAR_IMAGE_SHAPE) -> LabeledImageSet:
    record_bytes = 1 + int(np.prod(image_shape))
    if len(buffer) % record_bytes:
        raise DataFormatError(f"length {len(buffer)} is not a multiple of the {record_bytes}-byte record",
                              offset=len(buffer) - len(buffer) % record_bytes)
    records = np.frombuffer(buffer, dtype=np.uint8).reshape(-1, record_bytes)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= CIFAR_NUM_CLASSES)
    if bad.size:
        raise DataFormatError(f"label {labels[bad[0]]} out of range [0, {CIFAR_NUM_CLASSES})",
                              offset=int(bad[0]) * record_bytes)
    images = records[:, 1:].reshape((-1,) + tuple(image_shape)).astype(np.float32) / 255.0
    return LabeledImageSet(images=images, labels=labels, split=split, num_classes=CIFAR_NUM_CLASSES)


def load_cifar10_binary(path: str, split: str = "train") -> LabeledImageSet:
    """Parse one CIFAR-10 binary batch file; pixels scaled to [0, 1]"""
    with open(path, "rb") as f:
        buffer = f.read()
    try:
        dataset = parse_cifar10_bytes(buffer, split=split)
    except DataFormatError as e:
        raise DataFormatError(f"{path}: {e.reason}", offset=e.offset) from e
    logger.debug("loaded %d records from %s", len(dataset), path)
    return dataset


def cifar10_bytes(dataset: LabeledImageSet) -> bytes:
    """Serialize images (rounded back to 8 bits) in the CIFAR-10 record layout"""
    if dataset.num_classes > 256:
        raise DataFormatError("labels must fit in one byte")
    pixels = np.clip(np.rint(dataset.images * 255.0), 0, 255).astype(np.uint8).reshape(len(dataset), -1)
    labels = dataset.labels.astype(np.uint8).reshape(-1, 1)
    return np.concatenate([labels, pixels], axis=1).tobytes()


def save_cifar10_binary(dataset: LabeledImageSet, path: str):
    """Write a set in CIFAR-10 binary format (also used to export synthetic sets)"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(cifar10_bytes(dataset))


def _concat(parts, split: str) -> LabeledImageSet:
    return LabeledImageSet(
        images=np.concatenate([p.images for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        split=split, num_classes=CIFAR_NUM_CLASSES,
    )


def load_cifar10_dir(directory: str) -> Tuple[LabeledImageSet, LabeledImageSet]:
    """data_batch_1..5.bin as the train split and test_batch.bin as the test split"""
    missing = [name for name in CIFAR_TRAIN_FILES + CIFAR_TEST_FILES
               if not os.path.exists(os.path.join(directory, name))]
    if missing:
        raise DataFormatError(f"{directory}: missing CIFAR-10 files {', '.join(missing)}")
    train = _concat([load_cifar10_binary(os.path.join(directory, n), "train") for n in CIFAR_TRAIN_FILES], "train")
    test = _concat([load_cifar10_binary(os.path.join(directory, n), "test") for n in CIFAR_TEST_FILES], "test")
    logger.info("CIFAR-10 from %s: %d train, %d test", directory, len(train), len(test))
    return train, test


def export_cifar10_dir(train: LabeledImageSet, test: LabeledImageSet, directory: str) -> List[str]:
    """Write a train/test pair as the CIFAR-10 batch files ``load_cifar10_dir`` reads back"""
    for dataset in (train, test):
        if dataset.num_classes > CIFAR_NUM_CLASSES:
            raise DataFormatError(f"{dataset.num_classes} classes do not fit the CIFAR-10 label range")
        if dataset.image_shape != CIFAR_IMAGE_SHAPE:
            raise DataFormatError(f"{dataset.split} images are {dataset.image_shape}, "
                                  f"the CIFAR-10 layout needs {CIFAR_IMAGE_SHAPE}")
    paths = []
    chunks = np.array_split(np.arange(len(train)), len(CIFAR_TRAIN_FILES))
    for name, index in zip(CIFAR_TRAIN_FILES, chunks):
        paths.append(os.path.join(directory, name))
        save_cifar10_binary(subset(train, index), paths[-1])
    paths.append(os.path.join(directory, CIFAR_TEST_FILES[0]))
    save_cifar10_binary(test, paths[-1])
    logger.info("exported %d train and %d test images to %s", len(train), len(test), directory)
    return paths
