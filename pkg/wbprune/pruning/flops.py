"""
FLOPs accounting: multiply-accumulate counts of conv and linear layers (1 MAC = 1 FLOP)
"""

import logging
from typing import Dict, List, Optional, Union

from wbprune.classes.graph import ModelGraph, conv_output_size, infer_shapes
from wbprune.classes.plan import FlopsModel, LayerCost
from wbprune.errors import ArchitectureParseError, ConfigError

logger = logging.getLogger(__name__)

KeptCounts = Dict[str, int]


def build_flops_model(graph: ModelGraph) -> FlopsModel:
    """Cost entries for a sequential graph; every conv is prunable

    A conv's input term follows the previous conv. The first linear layer after
    the last conv follows that conv with one input feature per channel after
    global pooling, or H*W features per channel after flattening.
    """
    shapes = infer_shapes(graph)
    entries: List[LayerCost] = []
    producer: Optional[str] = None
    features_per_channel = 1
    in_shape = tuple(graph.input_shape)
    for layer, out_shape in zip(graph.layers, shapes):
        if layer.kind == "conv":
            entries.append(LayerCost(
                layer_id=layer.layer_id, kind="conv",
                in_channels=layer.in_channels, out_channels=layer.out_channels,
                kernel_size=layer.kernel_size, stride=layer.stride, padding=layer.padding,
                out_h=out_shape[1], out_w=out_shape[2],
                producer=producer, in_multiplier=1, prunable=True,
            ))
            producer = layer.layer_id
            features_per_channel = 1
        elif layer.kind == "flatten" and len(in_shape) == 3:
            features_per_channel = in_shape[1] * in_shape[2]
        elif layer.kind == "linear":
            entries.append(LayerCost(
                layer_id=layer.layer_id, kind="linear",
                in_channels=layer.in_features, out_channels=layer.out_features,
                producer=producer, in_multiplier=features_per_channel, prunable=False,
            ))
            # Only the first linear layer consumes conv channels
            producer = None
            features_per_channel = 1
        in_shape = out_shape
    return FlopsModel(entries=entries)


def _as_model(source: Union[ModelGraph, FlopsModel]) -> FlopsModel:
    if isinstance(source, FlopsModel):
        return source
    return build_flops_model(source)


def entry_flops(entry: LayerCost, kept: Optional[KeptCounts] = None) -> int:
    kept = kept or {}
    out_count = kept.get(entry.layer_id, entry.out_channels) if entry.prunable else entry.out_channels
    if entry.producer is not None and entry.producer in kept:
        in_count = kept[entry.producer] * entry.in_multiplier
    else:
        in_count = entry.in_channels
    if entry.kind == "conv":
        return entry.kernel_size * entry.kernel_size * in_count * out_count * entry.out_h * entry.out_w
    if entry.kind == "linear":
        return in_count * out_count
    raise ConfigError(f"Unknown layer kind for FLOPs: {entry.kind}")


def per_layer_flops(source: Union[ModelGraph, FlopsModel], kept: Optional[KeptCounts] = None) -> Dict[str, int]:
    model = _as_model(source)
    return {entry.layer_id: entry_flops(entry, kept) for entry in model.entries}


def model_flops(source: Union[ModelGraph, FlopsModel], kept: Optional[KeptCounts] = None) -> int:
    """Total MACs with the given kept output-channel counts (all channels when omitted)"""
    model = _as_model(source)
    if kept:
        counts = model.original_counts()
        for layer_id, count in kept.items():
            if layer_id in counts and count > counts[layer_id]:
                raise ConfigError(f"{layer_id}: kept {count} channels but the layer has {counts[layer_id]}")
    return sum(entry_flops(entry, kept) for entry in model.entries)


def removal_delta(model: FlopsModel, kept: KeptCounts, layer_id: str) -> int:
    """FLOPs saved by removing one more output channel of ``layer_id``

    Only the layer's own term and the input terms of its consumers change.
    """
    after = dict(kept)
    after[layer_id] = kept[layer_id] - 1
    delta = 0
    for entry in model.entries:
        if entry.layer_id == layer_id or entry.producer == layer_id:
            delta += entry_flops(entry, kept) - entry_flops(entry, after)
    return delta


def flops_rate(baseline: int, current: int) -> float:
    """Fractional FLOPs reduction"""
    if baseline <= 0:
        return 0.0
    return 1.0 - current / baseline


# ===== ARCHITECTURE DESCRIPTIONS =====

def _parse_fields(tokens: List[str], line_no: int) -> Dict[str, str]:
    fields = {}
    for token in tokens:
        if "=" not in token:
            raise ArchitectureParseError(f"expected key=value, got '{token}'", line_no)
        key, value = token.split("=", 1)
        fields[key.strip()] = value.strip()
    return fields


def _int_field(fields: Dict[str, str], key: str, line_no: int, default: Optional[int] = None) -> int:
    if key not in fields:
        if default is None:
            raise ArchitectureParseError(f"missing '{key}'", line_no)
        return default
    try:
        return int(fields[key])
    except ValueError:
        raise ArchitectureParseError(f"'{key}' must be an integer, got '{fields[key]}'", line_no)


def parse_arch_description(text: str) -> FlopsModel:
    """Flat text, one layer per line: ``kind key=value ...``

    Kinds: input (c, hw | h, w), conv (in, out, k, s, p, optional hw/h/w input
    override for branch convs), maxpool (k, s, p), avgpool (global), linear (in,
    out); bn and relu lines are accepted and cost nothing. A spatial override
    applies to that layer's input; the running size continues from its output.
    """
    entries: List[LayerCost] = []
    height = width = None
    conv_count = linear_count = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *tokens = line.split()
        kind = kind.lower()
        fields = _parse_fields(tokens, line_no)

        if kind == "input":
            hw = _int_field(fields, "hw", line_no, default=0)
            height = _int_field(fields, "h", line_no, default=hw or None)
            width = _int_field(fields, "w", line_no, default=hw or None)
        elif kind == "conv":
            conv_count += 1
            hw = _int_field(fields, "hw", line_no, default=0)
            if hw:
                height = width = hw
            height = _int_field(fields, "h", line_no, default=height or 0) or height
            width = _int_field(fields, "w", line_no, default=width or 0) or width
            if not height or not width:
                raise ArchitectureParseError("conv input size unknown; add an input line or hw=", line_no)
            k = _int_field(fields, "k", line_no, default=1)
            s = _int_field(fields, "s", line_no, default=1)
            p = _int_field(fields, "p", line_no, default=0)
            out_h = conv_output_size(height, k, s, p)
            out_w = conv_output_size(width, k, s, p)
            if out_h < 1 or out_w < 1:
                raise ArchitectureParseError("conv output would be empty", line_no)
            entries.append(LayerCost(
                layer_id=fields.get("name", f"conv{conv_count}"), kind="conv",
                in_channels=_int_field(fields, "in", line_no), out_channels=_int_field(fields, "out", line_no),
                kernel_size=k, stride=s, padding=p, out_h=out_h, out_w=out_w, prunable=True,
            ))
            height, width = out_h, out_w
        elif kind == "maxpool":
            if not height or not width:
                raise ArchitectureParseError("maxpool input size unknown", line_no)
            k = _int_field(fields, "k", line_no, default=2)
            s = _int_field(fields, "s", line_no, default=k)
            p = _int_field(fields, "p", line_no, default=0)
            height = conv_output_size(height, k, s, p)
            width = conv_output_size(width, k, s, p)
        elif kind == "avgpool":
            height = width = 1
        elif kind == "linear":
            linear_count += 1
            entries.append(LayerCost(
                layer_id=fields.get("name", f"fc{linear_count}"), kind="linear",
                in_channels=_int_field(fields, "in", line_no), out_channels=_int_field(fields, "out", line_no),
            ))
        elif kind in ("bn", "relu", "flatten"):
            continue
        else:
            raise ArchitectureParseError(f"unknown layer kind '{kind}'", line_no)

    if not entries:
        raise ArchitectureParseError("architecture has no conv or linear layers")
    logger.debug("parsed architecture: %d conv, %d linear", conv_count, linear_count)
    return FlopsModel(entries=entries)


def load_arch_file(path: str) -> FlopsModel:
    with open(path, "r", encoding="utf-8") as f:
        return parse_arch_description(f.read())


def flops_rows(model: FlopsModel, kept: Optional[KeptCounts] = None) -> List[Dict[str, object]]:
    """Per-layer table rows: shape parameters and MACs before/after"""
    rows = []
    for entry in model.entries:
        rows.append({
            "layer": entry.layer_id,
            "kind": entry.kind,
            "in": entry.in_channels,
            "out": entry.out_channels,
            "k": entry.kernel_size,
            "out_hw": f"{entry.out_h}x{entry.out_w}",
            "macs": entry_flops(entry),
            "macs_kept": entry_flops(entry, kept),
        })
    return rows
