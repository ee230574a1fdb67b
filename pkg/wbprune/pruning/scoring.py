"""
Channel importance scores from trained class-wise masks, plus baseline scorers
"""

from typing import Dict

import numpy as np

from wbprune.classes.graph import ModelGraph
from wbprune.classes.mask import ClasswiseMask
from wbprune.classes.plan import ChannelScoreTable
from wbprune.errors import ConfigError


def channel_scores(masks: Dict[str, ClasswiseMask], score_kind: str = "abs_sum") -> ChannelScoreTable:
    """Score each channel from its mask column

    abs_sum: sum_d |M[d, c]|; signed_sum: sum_d M[d, c]; l2_norm: ||M[:, c]||_2
    """
    if not masks:
        raise ConfigError("channel_scores needs at least one trained mask")
    scores = {}
    for layer_id, mask in masks.items():
        values = mask.values.data.astype(np.float64)
        if score_kind == "abs_sum":
            scores[layer_id] = np.abs(values).sum(axis=0)
        elif score_kind == "signed_sum":
            scores[layer_id] = values.sum(axis=0)
        elif score_kind == "l2_norm":
            scores[layer_id] = np.linalg.norm(values, axis=0)
        else:
            raise ConfigError(f"Unknown score kind: {score_kind}")
    return ChannelScoreTable(scores=scores, score_kind=score_kind)


def random_scores(graph: ModelGraph, seed: int) -> ChannelScoreTable:
    """Uniform random scores for every conv channel (random-pruning baseline)"""
    rng = np.random.default_rng(seed)
    scores = {layer.layer_id: rng.random(layer.out_channels)
              for layer in graph.layers if layer.kind == "conv"}
    return ChannelScoreTable(scores=scores, score_kind="random")


def weight_l1_scores(graph: ModelGraph) -> ChannelScoreTable:
    """l1 norm of each filter's weights (magnitude baseline)"""
    scores = {}
    for layer in graph.layers:
        if layer.kind == "conv":
            weight = layer.weight.data.astype(np.float64)
            scores[layer.layer_id] = np.abs(weight).reshape(weight.shape[0], -1).sum(axis=1)
    return ChannelScoreTable(scores=scores, score_kind="l1")


def sorted_channels(table: ChannelScoreTable, layer_order=None):
    """All (score, layer_rank, channel, layer_id) ascending; ties by layer then channel"""
    order = layer_order or table.layer_ids()
    rank = {layer_id: index for index, layer_id in enumerate(order)}
    items = []
    for layer_id, values in table.scores.items():
        for channel, score in enumerate(values):
            items.append((float(score), rank[layer_id], channel, layer_id))
    items.sort(key=lambda item: (item[0], item[1], item[2]))
    return items
