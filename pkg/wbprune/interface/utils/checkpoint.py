"""
Binary checkpoint files

Layout (little-endian): 8-byte magic, u32 tensor count, then per tensor a u16
name length, the UTF-8 name, a u8 rank, u64 dims and the raw IEEE-754 payload.
The high bit of the rank byte marks a float64 payload; float32 otherwise.
"""

import logging
import os
import struct
from typing import Dict, Optional, Tuple

import numpy as np

from wbprune.classes.graph import ModelGraph, graph_from_layout, graph_layout, graph_tensors
from wbprune.classes.mask import ClasswiseMask
from wbprune.classes.tensor import Tensor
from wbprune.errors import CheckpointError
from wbprune.interface.config.constants import CHECKPOINT_FILE, CHECKPOINT_MAGIC, GRAPH_FILE, MASK_PREFIX
from wbprune.interface.utils.database import load_data, save_data

logger = logging.getLogger(__name__)

FLOAT64_FLAG = 0x80
MAX_RANK = 0x7F


def encode_tensors(tensors: Dict[str, np.ndarray]) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(tensors))]
    for name, array in tensors.items():
        array = np.asarray(array)
        if array.dtype == np.float64:
            flag, payload_dtype = FLOAT64_FLAG, "<f8"
        else:
            flag, payload_dtype = 0, "<f4"
        if array.ndim > MAX_RANK:
            raise CheckpointError(f"{name}: rank {array.ndim} exceeds {MAX_RANK}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", array.ndim | flag))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=payload_dtype).tobytes())
    return b"".join(parts)


def _read(buffer: bytes, offset: int, size: int, what: str) -> Tuple[bytes, int]:
    if offset + size > len(buffer):
        raise CheckpointError(f"truncated checkpoint while reading {what} at byte {offset}")
    return buffer[offset:offset + size], offset + size


def decode_tensors(buffer: bytes) -> Dict[str, np.ndarray]:
    magic, offset = _read(buffer, 0, len(CHECKPOINT_MAGIC), "magic")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    raw, offset = _read(buffer, offset, 4, "tensor count")
    (count,) = struct.unpack("<I", raw)

    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, offset = _read(buffer, offset, 2, "name length")
        (name_length,) = struct.unpack("<H", raw)
        raw, offset = _read(buffer, offset, name_length, "name")
        name = raw.decode("utf-8")
        raw, offset = _read(buffer, offset, 1, f"rank of {name}")
        rank_byte = raw[0]
        rank = rank_byte & MAX_RANK
        dtype = np.dtype("<f8") if rank_byte & FLOAT64_FLAG else np.dtype("<f4")
        raw, offset = _read(buffer, offset, 8 * rank, f"dims of {name}")
        shape = struct.unpack(f"<{rank}Q", raw)
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        raw, offset = _read(buffer, offset, nbytes, f"payload of {name}")
        tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    if offset != len(buffer):
        raise CheckpointError(f"{len(buffer) - offset} trailing bytes after {count} tensors")
    return tensors


def save_checkpoint(path: str, tensors: Dict[str, np.ndarray]):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode_tensors(tensors))


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        return decode_tensors(f.read())


# Model directories: binary tensors plus a JSON layout sidecar
def save_model(directory: str, graph: ModelGraph, masks: Optional[Dict[str, ClasswiseMask]] = None,
               meta: Optional[dict] = None):
    """Write ``model.wbp`` (parameters, batchnorm statistics, ``mask.<layer>``) and ``graph.json``"""
    masks = masks or {}
    tensors = dict(graph_tensors(graph))
    for layer_id, mask in masks.items():
        tensors[f"{MASK_PREFIX}{layer_id}"] = mask.values.data
    save_checkpoint(os.path.join(directory, CHECKPOINT_FILE), tensors)
    save_data(os.path.join(directory, GRAPH_FILE), {
        "layout": graph_layout(graph),
        "masks": list(masks.keys()),
        "meta": meta or {},
    })
    logger.info("saved checkpoint %s (%d tensors, %d masks)", directory, len(tensors), len(masks))


def load_model(directory: str) -> Tuple[ModelGraph, Dict[str, ClasswiseMask], dict]:
    sidecar = load_data(os.path.join(directory, GRAPH_FILE), required=True)
    tensors = load_checkpoint(os.path.join(directory, CHECKPOINT_FILE))
    try:
        graph = graph_from_layout(sidecar["layout"], tensors)
        masks = {layer_id: ClasswiseMask(layer_id=layer_id, values=Tensor(tensors[f"{MASK_PREFIX}{layer_id}"]))
                 for layer_id in sidecar.get("masks", [])}
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{directory}: checkpoint does not match its layout ({e})")
    return graph, masks, sidecar.get("meta", {})
