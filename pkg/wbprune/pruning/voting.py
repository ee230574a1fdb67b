"""
Global voting: remove the globally lowest-scored channels until the FLOPs target is met
"""

import logging
from typing import Dict, List, Set, Union

from wbprune.classes.graph import ModelGraph
from wbprune.classes.plan import ChannelScoreTable, FlopsModel, LayerPlan, PruningPlan
from wbprune.errors import ConfigError, PlanError, UnreachableBudgetError
from wbprune.pruning.flops import build_flops_model, flops_rate, model_flops, per_layer_flops, removal_delta
from wbprune.pruning.scoring import sorted_channels

logger = logging.getLogger(__name__)


def global_vote(scores: ChannelScoreTable, source: Union[ModelGraph, FlopsModel], alpha: float,
                mu: float = 0.5) -> PruningPlan:
    """Single pass over the ascending score list; a removal that would empty a layer is skipped

    Stops at the first removal that brings the FLOPs reduction to at least ``alpha``.
    """
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must lie in [0, 1), got {alpha}")
    model = source if isinstance(source, FlopsModel) else build_flops_model(source)

    originals = model.original_counts()
    order = [entry.layer_id for entry in model.entries if entry.prunable and entry.layer_id in scores.scores]
    for layer_id, values in scores.scores.items():
        if layer_id not in originals:
            raise PlanError(f"scores reference unknown prunable layer {layer_id}")
        if len(values) != originals[layer_id]:
            raise PlanError(f"{layer_id}: {len(values)} scores for {originals[layer_id]} channels")

    counts: Dict[str, int] = dict(originals)
    removed: Dict[str, Set[int]] = {layer_id: set() for layer_id in originals}
    removal_order: List[tuple] = []
    baseline = model_flops(model)
    current = baseline
    rate = 0.0

    if rate < alpha:
        for _, _, channel, layer_id in sorted_channels(scores, order):
            if counts[layer_id] <= 1:
                continue
            current -= removal_delta(model, counts, layer_id)
            counts[layer_id] -= 1
            removed[layer_id].add(channel)
            removal_order.append((layer_id, channel))
            rate = flops_rate(baseline, current)
            if rate >= alpha:
                break
        if rate < alpha:
            raise UnreachableBudgetError(alpha, rate)

    before = per_layer_flops(model)
    after = per_layer_flops(model, counts)
    layers = []
    for entry in model.entries:
        if not entry.prunable:
            continue
        kept = [c for c in range(entry.out_channels) if c not in removed[entry.layer_id]]
        layers.append(LayerPlan(
            layer_id=entry.layer_id, kept=kept, original_channels=entry.out_channels,
            flops_before=before[entry.layer_id], flops_after=after[entry.layer_id],
        ))

    logger.info("global vote: alpha=%.4f achieved=%.4f removed=%d flops=%d->%d",
                alpha, rate, len(removal_order), baseline, current)
    return PruningPlan(
        layers=layers, target_rate=alpha, achieved_rate=rate, removal_order=removal_order,
        score_kind=scores.score_kind, mu=mu, baseline_flops=baseline, pruned_flops=current,
    )


def keep_all_plan(source: Union[ModelGraph, FlopsModel], mu: float = 0.5, score_kind: str = "abs_sum") -> PruningPlan:
    """Plan that removes nothing"""
    model = source if isinstance(source, FlopsModel) else build_flops_model(source)
    flops = per_layer_flops(model)
    layers = [LayerPlan(layer_id=e.layer_id, kept=list(range(e.out_channels)), original_channels=e.out_channels,
                        flops_before=flops[e.layer_id], flops_after=flops[e.layer_id])
              for e in model.entries if e.prunable]
    baseline = model_flops(model)
    return PruningPlan(layers=layers, target_rate=0.0, achieved_rate=0.0, score_kind=score_kind, mu=mu,
                       baseline_flops=baseline, pruned_flops=baseline)
