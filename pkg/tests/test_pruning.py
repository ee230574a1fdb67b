import itertools

import numpy as np
import pytest

from wbprune.classes.graph import build_toy_cnn
from wbprune.classes.mask import ClasswiseMask
from wbprune.classes.plan import ChannelScoreTable, FlopsModel, LayerCost, flops_reduction, kept_counts
from wbprune.classes.tensor import Tensor
from wbprune.errors import ConfigError, PlanError, UnreachableBudgetError
from wbprune.pruning.flops import build_flops_model, flops_rate, model_flops
from wbprune.pruning.scoring import channel_scores, random_scores, sorted_channels, weight_l1_scores
from wbprune.pruning.voting import global_vote, keep_all_plan


def _independent_layers(*widths):
    """Unlinked 1x1 convs on 1x1 maps: every channel costs exactly one MAC"""
    return FlopsModel(entries=[
        LayerCost(layer_id=f"layer{i}", kind="conv", in_channels=1, out_channels=width, prunable=True)
        for i, width in enumerate(widths, start=1)
    ])


def _table(**scores):
    return ChannelScoreTable(scores={k: np.asarray(v, dtype=np.float64) for k, v in scores.items()})


class TestChannelScores:
    def _masks(self, column):
        return {"conv1": ClasswiseMask(layer_id="conv1", values=Tensor(np.array(column, dtype=np.float64)))}

    def test_zero_column(self):
        for kind in ("abs_sum", "signed_sum", "l2_norm"):
            assert channel_scores(self._masks([[0.0], [0.0]]), kind).scores["conv1"][0] == 0.0

    def test_plus_minus_one(self):
        masks = self._masks([[1.0], [-1.0]])
        assert channel_scores(masks, "signed_sum").scores["conv1"][0] == 0.0
        assert channel_scores(masks, "abs_sum").scores["conv1"][0] == 2.0
        assert channel_scores(masks, "l2_norm").scores["conv1"][0] == pytest.approx(np.sqrt(2))

    def test_random_mask_against_columns(self, rng):
        values = rng.normal(size=(10, 16))
        masks = self._masks(values)
        tables = {kind: channel_scores(masks, kind).scores["conv1"]
                  for kind in ("abs_sum", "signed_sum", "l2_norm")}
        for c in range(16):
            column = values[:, c]
            assert tables["abs_sum"][c] == pytest.approx(sum(abs(v) for v in column), rel=1e-6)
            assert tables["signed_sum"][c] == pytest.approx(sum(column), rel=1e-6)
            assert tables["l2_norm"][c] == pytest.approx(np.sqrt(sum(v * v for v in column)), rel=1e-6)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            channel_scores(self._masks([[1.0]]), "entropy")

    def test_needs_masks(self):
        with pytest.raises(ConfigError):
            channel_scores({})

    def test_baselines_cover_every_conv(self, tiny_graph):
        l1 = weight_l1_scores(tiny_graph)
        assert {k: len(v) for k, v in l1.scores.items()} == {"conv1": 4, "conv2": 6, "conv3": 5}
        weight = tiny_graph.layers[0].weight.data
        assert l1.scores["conv1"][2] == pytest.approx(np.abs(weight[2]).sum())
        first, second = random_scores(tiny_graph, 5), random_scores(tiny_graph, 5)
        np.testing.assert_array_equal(first.scores["conv2"], second.scores["conv2"])

    def test_ties_break_by_layer_then_channel(self):
        items = sorted_channels(_table(b=[1.0, 1.0], a=[1.0]), layer_order=["a", "b"])
        assert [(layer, channel) for _, _, channel, layer in items] == [("a", 0), ("b", 0), ("b", 1)]


def _sorted_prefix_oracle(scores, model, alpha):
    """Walk the full score order, skipping removals that would empty a layer, and
    recount FLOPs from scratch after each removal"""
    originals = model.original_counts()
    baseline = model_flops(model)
    counts = dict(originals)
    removed = []
    order = [e.layer_id for e in model.entries if e.prunable]
    for _, _, channel, layer_id in sorted_channels(scores, order):
        if flops_rate(baseline, model_flops(model, counts)) >= alpha:
            break
        if counts[layer_id] == 1:
            continue
        counts[layer_id] -= 1
        removed.append((layer_id, channel))
    return removed, flops_rate(baseline, model_flops(model, counts))


def _exhaustive_removal(scores, model, alpha):
    """Lowest-score removal set of the smallest size that reaches alpha, found by trying every subset"""
    originals = model.original_counts()
    channels = [(layer_id, c) for layer_id, width in originals.items() for c in range(width)]
    baseline = model_flops(model)
    best = {}
    for bits in range(1 << len(channels)):
        chosen = [channels[i] for i in range(len(channels)) if bits >> i & 1]
        counts = dict(originals)
        for layer_id, _ in chosen:
            counts[layer_id] -= 1
        if min(counts.values()) < 1:
            continue
        total = sum(scores.scores[layer_id][c] for layer_id, c in chosen)
        if len(chosen) not in best or total < best[len(chosen)][0]:
            best[len(chosen)] = (total, chosen, counts)
    for size in sorted(best):
        _, chosen, counts = best[size]
        if flops_rate(baseline, model_flops(model, counts)) >= alpha:
            return set(chosen)
    return None


class TestGlobalVote:
    def test_zero_alpha_keeps_everything(self):
        model = _independent_layers(2, 2)
        plan = global_vote(_table(layer1=[0.1, 5.0], layer2=[0.2, 9.0]), model, 0.0)
        assert plan.removal_order == []
        assert plan.achieved_rate == 0.0
        assert kept_counts(plan) == {"layer1": 2, "layer2": 2}

    def test_equal_costs_remove_lowest_half(self):
        model = _independent_layers(2, 2)
        plan = global_vote(_table(layer1=[0.1, 5.0], layer2=[0.2, 9.0]), model, 0.5)
        assert set(plan.removal_order) == {("layer1", 0), ("layer2", 0)}
        assert plan.achieved_rate == 0.5
        assert [layer.kept for layer in plan.layers] == [[1], [1]]

    def test_greedy_pick_is_best_of_all_half_plans(self):
        scores = {"layer1": [0.1, 5.0], "layer2": [0.2, 9.0]}
        channels = [(layer, c) for layer in scores for c in range(2)]
        # removing both channels of one layer is not allowed
        candidates = [pair for pair in itertools.combinations(channels, 2) if pair[0][0] != pair[1][0]]
        best = min(candidates, key=lambda pair: sum(scores[layer][c] for layer, c in pair))
        plan = global_vote(_table(**scores), _independent_layers(2, 2), 0.5)
        assert set(plan.removal_order) == set(best)

    def test_keeps_one_channel_per_layer(self):
        model = _independent_layers(3, 3)
        plan = global_vote(_table(layer1=[0.0, 0.1, 0.2], layer2=[5.0, 6.0, 7.0]), model, 0.6)
        assert kept_counts(plan) == {"layer1": 1, "layer2": 1}
        assert plan.removal_order[:2] == [("layer1", 0), ("layer1", 1)]

    def test_unreachable_budget_reports_maximum(self):
        model = _independent_layers(2, 2)
        with pytest.raises(UnreachableBudgetError) as info:
            global_vote(_table(layer1=[0.1, 5.0], layer2=[0.2, 9.0]), model, 0.75)
        assert info.value.max_rate == pytest.approx(0.5)
        assert info.value.alpha == 0.75

    def test_alpha_outside_range(self):
        with pytest.raises(ConfigError):
            global_vote(_table(layer1=[1.0]), _independent_layers(1), 1.0)

    def test_scores_must_match_layers(self):
        with pytest.raises(PlanError):
            global_vote(_table(layerX=[1.0, 2.0]), _independent_layers(2), 0.2)
        with pytest.raises(PlanError):
            global_vote(_table(layer1=[1.0]), _independent_layers(2), 0.2)

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_sorted_prefix_oracle(self, seed):
        rng = np.random.default_rng(seed)
        graph = build_toy_cnn([8, 8, 8], (3, 8, 8), 4, seed=seed)
        model = build_flops_model(graph)
        scores = ChannelScoreTable(scores={f"conv{i}": rng.random(8) for i in (1, 2, 3)})
        plan = global_vote(scores, model, 0.5)
        removed, rate = _sorted_prefix_oracle(scores, model, 0.5)
        assert plan.removal_order == removed
        assert plan.achieved_rate == pytest.approx(rate)
        assert plan.pruned_flops == model_flops(model, kept_counts(plan))
        assert flops_reduction(plan) == pytest.approx(plan.achieved_rate)

    @pytest.mark.parametrize("seed", range(30))
    def test_matches_exhaustive_search(self, seed):
        rng = np.random.default_rng(seed)
        widths = [int(w) for w in rng.integers(2, 5, size=3)]
        model = build_flops_model(build_toy_cnn(widths, (3, 8, 8), 3, seed=seed))
        scores = ChannelScoreTable(scores={k: rng.random(v) for k, v in model.original_counts().items()})
        alpha = float(rng.uniform(0.1, 0.6))
        expected = _exhaustive_removal(scores, model, alpha)
        if expected is None:
            with pytest.raises(UnreachableBudgetError):
                global_vote(scores, model, alpha)
        else:
            assert set(global_vote(scores, model, alpha).removal_order) == expected

    @pytest.mark.parametrize("seed", range(20))
    def test_stops_at_first_sufficient_removal(self, seed):
        rng = np.random.default_rng(seed)
        model = build_flops_model(build_toy_cnn([6, 7, 5], (3, 8, 8), 3))
        scores = ChannelScoreTable(scores={k: rng.normal(size=v) for k, v in model.original_counts().items()})
        alpha = float(rng.uniform(0.1, 0.6))
        plan = global_vote(scores, model, alpha)
        assert plan.achieved_rate >= alpha
        counts = model.original_counts()
        for layer_id, _ in plan.removal_order[:-1]:
            counts[layer_id] -= 1
        assert flops_rate(plan.baseline_flops, model_flops(model, counts)) < alpha

    @pytest.mark.parametrize("seed", range(10))
    def test_achieved_rate_grows_with_alpha(self, seed):
        rng = np.random.default_rng(seed)
        model = build_flops_model(build_toy_cnn([6, 6], (3, 8, 8), 3))
        scores = ChannelScoreTable(scores={k: rng.random(v) for k, v in model.original_counts().items()})
        rates = [global_vote(scores, model, alpha).achieved_rate for alpha in (0.1, 0.3, 0.5, 0.7)]
        assert rates == sorted(rates)

    def test_layer_plan_flops(self, tiny_graph):
        model = build_flops_model(tiny_graph)
        scores = weight_l1_scores(tiny_graph)
        plan = global_vote(scores, tiny_graph, 0.4, mu=0.25)
        assert plan.mu == 0.25
        assert plan.score_kind == "l1"
        assert plan.baseline_flops == model_flops(model)
        assert sum(layer.flops_before for layer in plan.layers) < plan.baseline_flops
        for layer in plan.layers:
            assert layer.flops_after <= layer.flops_before

    def test_keep_all_plan(self, tiny_graph):
        plan = keep_all_plan(tiny_graph)
        assert kept_counts(plan) == {"conv1": 4, "conv2": 6, "conv3": 5}
        assert plan.pruned_flops == plan.baseline_flops
        assert all(layer.pruning_rate == 0.0 for layer in plan.layers)
