"""
Mask folding and structural surgery on a sequential ModelGraph
"""

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from wbprune.classes.graph import LayerSpec, ModelGraph, copy_graph, infer_shapes
from wbprune.classes.mask import ClasswiseMask, restrict_mask
from wbprune.classes.plan import PruningPlan, kept_indices
from wbprune.classes.tensor import Tensor
from wbprune.errors import PlanError, ShapeMismatchError

logger = logging.getLogger(__name__)


def fold_mask(weight: np.ndarray, bias: Optional[np.ndarray], mask: ClasswiseMask,
              mu: float) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Scale each output channel c of ``weight`` by mu * sum_d M[d, c]

    The bias is returned unchanged since training never scaled it.
    """
    if mask.num_channels != weight.shape[0]:
        raise ShapeMismatchError(f"mask {mask.layer_id} vs weight", mask.values.shape, weight.shape)
    factors = mu * mask.values.data.astype(np.float64).sum(axis=0)
    shape = (-1,) + (1,) * (weight.ndim - 1)
    folded = (weight * factors.reshape(shape)).astype(weight.dtype)
    return folded, None if bias is None else bias.copy()


def fold_masks_into_graph(graph: ModelGraph, masks: Dict[str, ClasswiseMask], mu: float) -> ModelGraph:
    """Copy of ``graph`` with every mask folded into its conv weight; the masks are not carried over"""
    folded = copy_graph(graph)
    for layer in folded.layers:
        if layer.layer_id not in masks:
            continue
        if layer.kind != "conv":
            raise PlanError(f"mask {layer.layer_id} is attached to a {layer.kind} layer")
        bias = None if layer.bias is None else layer.bias.data
        weight, bias = fold_mask(layer.weight.data, bias, masks[layer.layer_id], mu)
        layer.weight = Tensor(weight)
        if bias is not None:
            layer.bias = Tensor(bias)
    logger.debug("folded %d masks with coefficient %g", len(masks), mu)
    return folded


def check_plan(graph: ModelGraph, plan: PruningPlan):
    """Every planned layer is a conv of the graph and every kept index exists"""
    convs = {layer.layer_id: layer for layer in graph.layers if layer.kind == "conv"}
    for layer_plan in plan.layers:
        layer = convs.get(layer_plan.layer_id)
        if layer is None:
            raise PlanError(f"plan references unknown conv layer {layer_plan.layer_id}")
        if layer_plan.original_channels != layer.out_channels:
            raise PlanError(f"{layer_plan.layer_id}: plan expects {layer_plan.original_channels} channels, "
                            f"graph has {layer.out_channels}")
        if layer_plan.kept[-1] >= layer.out_channels or layer_plan.kept[0] < 0:
            raise PlanError(f"{layer_plan.layer_id}: kept channel out of range 0..{layer.out_channels - 1}")


def _take(tensor: Optional[Tensor], indices: List[int], axis: int) -> Optional[Tensor]:
    if tensor is None:
        return None
    return tensor.take(indices, axis=axis)


def apply_plan(graph: ModelGraph, plan: PruningPlan) -> ModelGraph:
    """Physically remove the channels a plan drops

    Conv output slices go with their bias and following batchnorm entries; the
    next conv loses the matching input slices; the first linear layer loses
    the features derived from removed channels (H*W per channel after a flatten).
    """
    check_plan(graph, plan)
    keep = kept_indices(plan)
    shapes = infer_shapes(graph)
    layers: List[LayerSpec] = []
    carried: Optional[List[int]] = None  # kept channels flowing into the next consumer
    features_per_channel = 1
    in_shape = tuple(graph.input_shape)

    for layer, out_shape in zip(graph.layers, shapes):
        fields = layer.model_dump(exclude={"weight", "bias", "running_mean", "running_var"})
        weight = None if layer.weight is None else layer.weight.copy()
        bias = None if layer.bias is None else layer.bias.copy()
        running_mean = None if layer.running_mean is None else layer.running_mean.copy()
        running_var = None if layer.running_var is None else layer.running_var.copy()

        if layer.kind == "conv":
            if carried is not None:
                weight = _take(weight, carried, axis=1)
                fields["in_channels"] = len(carried)
            kept = keep.get(layer.layer_id)
            if kept is not None:
                weight = _take(weight, kept, axis=0)
                bias = _take(bias, kept, axis=0)
                fields["out_channels"] = len(kept)
                carried = kept
            else:
                carried = None
            features_per_channel = 1
        elif layer.kind == "bn" and carried is not None:
            weight = _take(weight, carried, axis=0)
            bias = _take(bias, carried, axis=0)
            running_mean = running_mean[carried] if running_mean is not None else None
            running_var = running_var[carried] if running_var is not None else None
            fields["in_channels"] = fields["out_channels"] = len(carried)
        elif layer.kind == "flatten" and len(in_shape) == 3:
            features_per_channel = in_shape[1] * in_shape[2]
        elif layer.kind == "linear":
            if carried is not None:
                columns = [c * features_per_channel + offset
                           for c in carried for offset in range(features_per_channel)]
                weight = _take(weight, columns, axis=1)
                fields["in_features"] = len(columns)
            carried = None
            features_per_channel = 1

        layers.append(LayerSpec(**fields, weight=weight, bias=bias,
                                running_mean=running_mean, running_var=running_var))
        in_shape = out_shape

    pruned = ModelGraph(layers=layers, input_shape=graph.input_shape, num_classes=graph.num_classes)
    removed = sum(p.original_channels - len(p.kept) for p in plan.layers)
    logger.info("surgery removed %d channels across %d layers", removed, len(plan.layers))
    return pruned


def prune_and_fold(graph: ModelGraph, masks: Dict[str, ClasswiseMask], plan: PruningPlan,
                   coefficient: float) -> ModelGraph:
    """Restrict masks to kept channels, fold them into the weights, then cut the graph"""
    keep = kept_indices(plan)
    restricted = {layer_id: restrict_mask(mask, keep[layer_id]) if layer_id in keep else mask
                  for layer_id, mask in masks.items()}
    sliced = apply_plan(graph, plan)
    return fold_masks_into_graph(sliced, restricted, coefficient)
