"""
Sequential CNN description: layer specs, shape inference and model builders
"""

from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from wbprune.classes.tensor import Tensor
from wbprune.errors import ConfigError, ShapeMismatchError
from wbprune.interface.config.constants import BATCHNORM_EPS, BATCHNORM_MOMENTUM, VGG16_CFG

LayerKind = Literal["conv", "bn", "relu", "maxpool", "gap", "flatten", "linear"]


class LayerSpec(BaseModel):
    """One layer of a sequential CNN"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    layer_id: str = Field(..., description="Unique layer name, e.g. conv1")
    kind: LayerKind = Field(..., description="Layer kind")

    # conv / bn / maxpool hyperparameters
    in_channels: int = Field(default=0, ge=0, description="Input channels (conv) or features (bn)")
    out_channels: int = Field(default=0, ge=0, description="Output channels (conv) or features (bn)")
    kernel_size: int = Field(default=1, ge=1, description="Square kernel size (conv, maxpool)")
    stride: int = Field(default=1, ge=1, description="Stride (conv, maxpool)")
    padding: int = Field(default=0, ge=0, description="Zero padding (conv)")

    # linear hyperparameters
    in_features: int = Field(default=0, ge=0, description="Linear input width")
    out_features: int = Field(default=0, ge=0, description="Linear output width")

    # Parameters
    weight: Optional[Tensor] = Field(None, description="conv C_out x C_in x K x K, linear D_out x D_in, bn scale")
    bias: Optional[Tensor] = Field(None, description="Per-output bias, or bn shift")

    # Batchnorm state
    running_mean: Optional[np.ndarray] = Field(None, description="bn running mean")
    running_var: Optional[np.ndarray] = Field(None, description="bn running variance")
    num_batches_tracked: int = Field(default=0, ge=0, description="bn statistic updates so far")
    eps: float = Field(default=BATCHNORM_EPS, gt=0)
    momentum: float = Field(default=BATCHNORM_MOMENTUM, gt=0, le=1)


class ModelGraph(BaseModel):
    """Ordered layer list of a sequential CNN"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    layers: List[LayerSpec] = Field(..., min_length=1, description="Layers in execution order")
    input_shape: Tuple[int, int, int] = Field(..., description="C x H x W of one input image")
    num_classes: int = Field(..., ge=1, description="Category count D")

    @model_validator(mode="after")
    def _check_graph(self):
        check_graph(self)
        return self


# ===== SHAPE INFERENCE =====

def conv_output_size(size: int, kernel_size: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel_size) // stride + 1


def infer_shapes(graph: ModelGraph) -> List[Tuple[int, ...]]:
    """Per-layer output shape (without batch); raises on incompatible neighbours"""
    shape: Tuple[int, ...] = tuple(graph.input_shape)
    shapes = []
    for layer in graph.layers:
        shape = _layer_output_shape(layer, shape)
        shapes.append(shape)
    return shapes


def _layer_output_shape(layer: LayerSpec, shape: Tuple[int, ...]) -> Tuple[int, ...]:
    if layer.kind == "conv":
        if len(shape) != 3 or shape[0] != layer.in_channels:
            raise ShapeMismatchError(f"{layer.layer_id} input", shape, (layer.in_channels, "H", "W"))
        h = conv_output_size(shape[1], layer.kernel_size, layer.stride, layer.padding)
        w = conv_output_size(shape[2], layer.kernel_size, layer.stride, layer.padding)
        if h < 1 or w < 1:
            raise ShapeMismatchError(f"{layer.layer_id} spatial output", (h, w), (1, 1))
        return (layer.out_channels, h, w)
    if layer.kind == "bn":
        if len(shape) != 3 or shape[0] != layer.out_channels:
            raise ShapeMismatchError(f"{layer.layer_id} input", shape, (layer.out_channels, "H", "W"))
        return shape
    if layer.kind == "relu":
        return shape
    if layer.kind == "maxpool":
        if len(shape) != 3:
            raise ShapeMismatchError(f"{layer.layer_id} input", shape, ("C", "H", "W"))
        h = conv_output_size(shape[1], layer.kernel_size, layer.stride, 0)
        w = conv_output_size(shape[2], layer.kernel_size, layer.stride, 0)
        if h < 1 or w < 1:
            raise ShapeMismatchError(f"{layer.layer_id} spatial output", (h, w), (1, 1))
        return (shape[0], h, w)
    if layer.kind == "gap":
        if len(shape) != 3:
            raise ShapeMismatchError(f"{layer.layer_id} input", shape, ("C", "H", "W"))
        return (shape[0],)
    if layer.kind == "flatten":
        return (int(np.prod(shape)),)
    if layer.kind == "linear":
        if len(shape) != 1 or shape[0] != layer.in_features:
            raise ShapeMismatchError(f"{layer.layer_id} input", shape, (layer.in_features,))
        return (layer.out_features,)
    raise ConfigError(f"Unknown layer kind: {layer.kind}")


def _expected_param_shapes(layer: LayerSpec) -> Dict[str, Tuple[int, ...]]:
    if layer.kind == "conv":
        return {
            "weight": (layer.out_channels, layer.in_channels, layer.kernel_size, layer.kernel_size),
            "bias": (layer.out_channels,),
        }
    if layer.kind == "bn":
        return {"weight": (layer.out_channels,), "bias": (layer.out_channels,)}
    if layer.kind == "linear":
        return {"weight": (layer.out_features, layer.in_features), "bias": (layer.out_features,)}
    return {}


def check_graph(graph: ModelGraph):
    """Check neighbour compatibility, parameter shapes and the classification head"""
    ids = [layer.layer_id for layer in graph.layers]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"Duplicate layer ids in graph: {ids}")

    for layer in graph.layers:
        expected = _expected_param_shapes(layer)
        if layer.kind in ("conv", "linear", "bn") and layer.weight is None:
            raise ConfigError(f"{layer.layer_id}: {layer.kind} layer has no weight")
        for name, shape in expected.items():
            tensor = getattr(layer, name)
            if tensor is not None and tensor.shape != shape:
                raise ShapeMismatchError(f"{layer.layer_id}.{name}", tensor.shape, shape)
        if layer.kind == "bn":
            for name in ("running_mean", "running_var"):
                stat = getattr(layer, name)
                if stat is not None and stat.shape != (layer.out_channels,):
                    raise ShapeMismatchError(f"{layer.layer_id}.{name}", stat.shape, (layer.out_channels,))

    shapes = infer_shapes(graph)
    head = graph.layers[-1]
    if head.kind != "linear":
        raise ConfigError("The last layer must be the linear classification head")
    if shapes[-1] != (graph.num_classes,):
        raise ShapeMismatchError("classification head output", shapes[-1], (graph.num_classes,))


# ===== GRAPH QUERIES =====

def get_layer(graph: ModelGraph, layer_id: str) -> LayerSpec:
    for layer in graph.layers:
        if layer.layer_id == layer_id:
            return layer
    raise KeyError(layer_id)


def graph_parameters(graph: ModelGraph) -> Dict[str, Tensor]:
    """Trainable parameters keyed as ``<layer_id>.weight`` / ``<layer_id>.bias``"""
    params = {}
    for layer in graph.layers:
        if layer.weight is not None:
            params[f"{layer.layer_id}.weight"] = layer.weight
        if layer.bias is not None:
            params[f"{layer.layer_id}.bias"] = layer.bias
    return params


def graph_dtype(graph: ModelGraph):
    for layer in graph.layers:
        if layer.weight is not None:
            return layer.weight.dtype
    return np.dtype(np.float32)


def copy_graph(graph: ModelGraph) -> ModelGraph:
    """Deep copy of a graph, weights and running statistics included"""
    layers = []
    for layer in graph.layers:
        fields = layer.model_dump(exclude={"weight", "bias", "running_mean", "running_var"})
        layers.append(LayerSpec(
            **fields,
            weight=None if layer.weight is None else Tensor(layer.weight.data.copy()),
            bias=None if layer.bias is None else Tensor(layer.bias.data.copy()),
            running_mean=None if layer.running_mean is None else layer.running_mean.copy(),
            running_var=None if layer.running_var is None else layer.running_var.copy(),
        ))
    return ModelGraph(layers=layers, input_shape=graph.input_shape, num_classes=graph.num_classes)


def graph_layout(graph: ModelGraph) -> Dict[str, Any]:
    """JSON-friendly description of the graph without parameter values"""
    layers = []
    for layer in graph.layers:
        entry = layer.model_dump(exclude={"weight", "bias", "running_mean", "running_var"})
        entry["has_bias"] = layer.bias is not None
        layers.append(entry)
    return {
        "input_shape": list(graph.input_shape),
        "num_classes": graph.num_classes,
        "layers": layers,
    }


def graph_from_layout(layout: Dict[str, Any], tensors: Dict[str, np.ndarray]) -> ModelGraph:
    """Rebuild a graph from ``graph_layout`` output and named parameter arrays"""
    layers = []
    for entry in layout["layers"]:
        entry = dict(entry)
        has_bias = entry.pop("has_bias", False)
        layer_id = entry["layer_id"]

        def fetch(name):
            key = f"{layer_id}.{name}"
            if key not in tensors:
                raise ConfigError(f"Missing tensor {key} for layer {layer_id}")
            return tensors[key]

        if entry["kind"] in ("conv", "linear", "bn"):
            entry["weight"] = Tensor(fetch("weight"))
            if has_bias:
                entry["bias"] = Tensor(fetch("bias"))
        if entry["kind"] == "bn":
            entry["running_mean"] = np.array(fetch("running_mean"))
            entry["running_var"] = np.array(fetch("running_var"))
        layers.append(LayerSpec(**entry))
    return ModelGraph(
        layers=layers,
        input_shape=tuple(layout["input_shape"]),
        num_classes=int(layout["num_classes"]),
    )


def graph_tensors(graph: ModelGraph) -> Dict[str, np.ndarray]:
    """All float arrays of a graph (parameters and batchnorm statistics) by name"""
    tensors = {name: tensor.data for name, tensor in graph_parameters(graph).items()}
    for layer in graph.layers:
        if layer.kind == "bn":
            tensors[f"{layer.layer_id}.running_mean"] = layer.running_mean
            tensors[f"{layer.layer_id}.running_var"] = layer.running_var
    return tensors


# ===== BUILDERS =====

def _kaiming(rng: np.random.Generator, shape: Sequence[int], fan_in: int, dtype) -> Tensor:
    std = np.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=tuple(shape)).astype(dtype))


def make_conv(layer_id: str, in_channels: int, out_channels: int, rng: np.random.Generator,
              kernel_size: int = 3, stride: int = 1, padding: int = 1,
              bias: bool = False, dtype=np.float32) -> LayerSpec:
    """Conv layer with Kaiming-normal weights"""
    fan_in = in_channels * kernel_size * kernel_size
    return LayerSpec(
        layer_id=layer_id, kind="conv",
        in_channels=in_channels, out_channels=out_channels,
        kernel_size=kernel_size, stride=stride, padding=padding,
        weight=_kaiming(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in, dtype),
        bias=Tensor(np.zeros(out_channels, dtype=dtype)) if bias else None,
    )


def make_bn(layer_id: str, channels: int, dtype=np.float32) -> LayerSpec:
    return LayerSpec(
        layer_id=layer_id, kind="bn",
        in_channels=channels, out_channels=channels,
        weight=Tensor(np.ones(channels, dtype=dtype)),
        bias=Tensor(np.zeros(channels, dtype=dtype)),
        running_mean=np.zeros(channels, dtype=dtype),
        running_var=np.ones(channels, dtype=dtype),
    )


def make_linear(layer_id: str, in_features: int, out_features: int, rng: np.random.Generator,
                dtype=np.float32) -> LayerSpec:
    bound = 1.0 / np.sqrt(in_features)
    return LayerSpec(
        layer_id=layer_id, kind="linear",
        in_features=in_features, out_features=out_features,
        weight=Tensor(rng.uniform(-bound, bound, size=(out_features, in_features)).astype(dtype)),
        bias=Tensor(np.zeros(out_features, dtype=dtype)),
    )


def build_toy_cnn(conv_channels: Sequence[int], input_shape: Tuple[int, int, int], num_classes: int,
                  seed: int = 0, batchnorm: bool = True, conv_bias: bool = False,
                  pool_every: int = 2, head: str = "gap", dtype=np.float32) -> ModelGraph:
    """conv-bn-relu blocks with a 2x2 maxpool after every ``pool_every`` blocks and a linear head"""
    if not conv_channels:
        raise ConfigError("conv_channels must name at least one conv layer")
    rng = np.random.default_rng(seed)
    layers: List[LayerSpec] = []
    in_channels, height, width = input_shape
    for index, out_channels in enumerate(conv_channels, start=1):
        layers.append(make_conv(f"conv{index}", in_channels, out_channels, rng,
                                bias=conv_bias or not batchnorm, dtype=dtype))
        if batchnorm:
            layers.append(make_bn(f"bn{index}", out_channels, dtype=dtype))
        layers.append(LayerSpec(layer_id=f"relu{index}", kind="relu"))
        if pool_every and index % pool_every == 0 and min(height, width) >= 4:
            layers.append(LayerSpec(layer_id=f"pool{index}", kind="maxpool", kernel_size=2, stride=2))
            height, width = height // 2, width // 2
        in_channels = out_channels

    if head == "gap":
        layers.append(LayerSpec(layer_id="gap", kind="gap"))
        features = in_channels
    else:
        layers.append(LayerSpec(layer_id="flatten", kind="flatten"))
        features = in_channels * height * width
    layers.append(make_linear("fc", features, num_classes, rng, dtype=dtype))
    return ModelGraph(layers=layers, input_shape=tuple(input_shape), num_classes=num_classes)


def build_vgg16(num_classes: int = 10, input_shape: Tuple[int, int, int] = (3, 32, 32),
                seed: int = 0, width_divisor: int = 1, dtype=np.float32) -> ModelGraph:
    """13-conv VGG backbone for 32x32 inputs with a single linear classifier"""
    rng = np.random.default_rng(seed)
    layers: List[LayerSpec] = []
    in_channels = input_shape[0]
    conv_index = 0
    for item in VGG16_CFG:
        if item == "M":
            layers.append(LayerSpec(layer_id=f"pool{conv_index}", kind="maxpool", kernel_size=2, stride=2))
            continue
        conv_index += 1
        out_channels = max(1, int(item) // width_divisor)
        layers.append(make_conv(f"conv{conv_index}", in_channels, out_channels, rng, dtype=dtype))
        layers.append(make_bn(f"bn{conv_index}", out_channels, dtype=dtype))
        layers.append(LayerSpec(layer_id=f"relu{conv_index}", kind="relu"))
        in_channels = out_channels
    layers.append(LayerSpec(layer_id="flatten", kind="flatten"))
    layers.append(make_linear("fc", in_channels, num_classes, rng, dtype=dtype))
    return ModelGraph(layers=layers, input_shape=tuple(input_shape), num_classes=num_classes)
