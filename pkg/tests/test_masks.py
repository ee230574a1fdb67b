import numpy as np
import pytest

from wbprune.classes.graph import graph_parameters
from wbprune.classes.mask import (
    ClasswiseMask, SparsityConfig, init_mask, mask_column_norms, mean_column_norm, restrict_mask,
)
from wbprune.classes.tensor import Tensor
from wbprune.engine import ops
from wbprune.engine.network import forward
from wbprune.engine.optim import OptimizerState, sgd_step, zero_grads
from wbprune.engine.reference import literal_masked_conv
from wbprune.errors import ConfigError, LabelError, MissingSoftLabelsError, ShapeMismatchError
from wbprune.pruning.masks import (
    aggregate_scale, check_masks, expectation_labels, fold_coefficient, init_masks, labels_for_mask_rows,
    masked_conv_forward, soften_labels, sparsity_penalty,
)
from wbprune.pruning.objective import total_objective


def _mask(values, layer_id="conv1"):
    return ClasswiseMask(layer_id=layer_id, values=Tensor(np.asarray(values, dtype=np.float64)))


class TestSoftenLabels:
    def test_degenerate_zero_is_one_hot(self):
        labels = np.eye(4)[[0, 2, 3]]
        soft = soften_labels(labels, mu=0.0, sigma=0.0, rng=0)
        np.testing.assert_array_equal(soft.values, labels)

    def test_degenerate_half(self):
        labels = np.eye(3)[[1, 1, 0]]
        soft = soften_labels(labels, mu=0.5, sigma=0.0).values
        assert np.all(soft[labels == 1] == 1.0)
        assert np.all(soft[labels == 0] == 0.5)

    def test_off_class_moments(self):
        labels = np.eye(2)[np.zeros(10_000, dtype=int)]
        soft = soften_labels(labels, mu=0.5, sigma=1.0, rng=np.random.default_rng(3)).values
        off = soft[:, 1]
        assert abs(off.mean() - 0.5) < 0.05
        assert abs(off.std() - 1.0) < 0.05
        assert np.all(soft[:, 0] == 1.0)

    def test_seeded_draws_repeat(self):
        labels = np.eye(5)[[0, 1, 2, 3]]
        first = soften_labels(labels, 0.5, 1.0, rng=11)
        second = soften_labels(labels, 0.5, 1.0, rng=11)
        np.testing.assert_array_equal(first.values, second.values)
        assert first.rng_seed == 11

    def test_rejects_non_one_hot_rows(self):
        with pytest.raises(LabelError):
            soften_labels(np.array([[1.0, 1.0]]), 0.5, 1.0)

    def test_rejects_negative_sigma(self):
        with pytest.raises(ConfigError):
            soften_labels(np.eye(2), 0.5, -1.0)

    def test_expectation_labels(self):
        np.testing.assert_array_equal(expectation_labels(np.eye(3)[[2]], 0.25), [[0.25, 0.25, 1.0]])


class TestAggregateScale:
    def test_single_class_identity(self):
        np.testing.assert_array_equal(aggregate_scale(np.ones((1, 1)), _mask([[1.0]])), [[1.0]])

    def test_one_hot_selects_row(self):
        scale = aggregate_scale(np.array([[1.0, 0.0]]), _mask([[2.0], [5.0]]))
        assert scale[0, 0] == 2.0

    def test_class_count_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            aggregate_scale(np.ones((2, 3)), _mask(np.ones((2, 4))))


class TestMaskedConv:
    @pytest.mark.parametrize("seed", range(50))
    def test_matches_literal_per_class_sum(self, seed):
        rng = np.random.default_rng(seed)
        num_classes = int(rng.integers(1, 5))
        x = rng.normal(size=(int(rng.integers(1, 4)), 2, 5, 5))
        weight = rng.normal(size=(3, 2, 3, 3))
        bias = rng.normal(size=3) if seed % 2 else None
        mask = _mask(rng.normal(size=(num_classes, 3)))
        soft = rng.normal(size=(x.shape[0], num_classes))
        out, _ = masked_conv_forward(x, weight, bias, mask, soft, 1, 1)
        expected = literal_masked_conv(x, weight, bias, soft, mask.values.data, 1, 1)
        np.testing.assert_allclose(out, expected, rtol=1e-5, atol=1e-10)

    def test_all_ones_mask_with_hard_labels_is_plain_conv(self, rng):
        x = rng.normal(size=(3, 2, 6, 6))
        weight, bias = rng.normal(size=(4, 2, 3, 3)), rng.normal(size=4)
        labels = ops.one_hot(np.array([0, 2, 1]), 3, np.float64)
        soft = soften_labels(labels, mu=0.0, sigma=0.0).values
        out, _ = masked_conv_forward(x, weight, bias, _mask(np.ones((3, 4))), soft, 1, 1)
        plain, _ = ops.conv2d_forward(x, weight, bias, 1, 1)
        np.testing.assert_allclose(out, plain, rtol=1e-12)

    def test_zero_class_row_leaves_only_bias(self, rng):
        x = rng.normal(size=(2, 2, 4, 4))
        weight, bias = rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
        values = np.ones((2, 3))
        values[1] = 0.0
        soft = ops.one_hot(np.array([1, 1]), 2, np.float64)
        out, _ = masked_conv_forward(x, weight, bias, _mask(values), soft, 1, 1)
        np.testing.assert_allclose(out, np.broadcast_to(bias.reshape(1, -1, 1, 1), out.shape))

    def test_missing_soft_labels(self, rng):
        with pytest.raises(MissingSoftLabelsError):
            masked_conv_forward(rng.normal(size=(1, 1, 3, 3)), np.ones((2, 1, 1, 1)), None,
                                _mask(np.ones((2, 2))), None)

    def test_mask_width_must_match_conv(self, rng):
        with pytest.raises(ShapeMismatchError):
            masked_conv_forward(rng.normal(size=(1, 1, 3, 3)), np.ones((2, 1, 1, 1)), None,
                                _mask(np.ones((2, 3))), np.ones((1, 2)))

    def test_mask_attached_to_other_layer(self, rng):
        with pytest.raises(ConfigError):
            masked_conv_forward(rng.normal(size=(1, 1, 3, 3)), np.ones((2, 1, 1, 1)), None,
                                _mask(np.ones((2, 2)), "conv7"), np.ones((1, 2)), layer_id="conv1")

    def test_masked_network_needs_soft_labels(self, tiny_graph, rng):
        with pytest.raises(MissingSoftLabelsError):
            forward(tiny_graph, rng.normal(size=(2, 3, 8, 8)), training=True, masks=init_masks(tiny_graph))


class TestSparsityPenalty:
    def test_zero_masks(self):
        value, grads = sparsity_penalty({"conv1": _mask(np.zeros((2, 3)))}, SparsityConfig())
        assert value == 0.0
        assert not grads["conv1"].any()

    def test_three_four_five(self):
        value, _ = sparsity_penalty({"conv1": _mask([[3.0], [4.0]])}, SparsityConfig())
        assert value == pytest.approx(5.0)

    def test_l1_kind(self):
        value, _ = sparsity_penalty({"conv1": _mask([[3.0], [-4.0]])}, SparsityConfig(norm_kind="l1"))
        assert value == pytest.approx(7.0)

    def test_matches_direct_sum(self, rng):
        masks = {f"conv{i}": _mask(rng.normal(size=(10, 4 + i)), f"conv{i}") for i in range(3)}
        expected = 0.0
        for mask in masks.values():
            for column in mask.values.data.T:
                expected += np.sqrt(np.sum(column ** 2))
        value, _ = sparsity_penalty(masks, SparsityConfig())
        assert value == pytest.approx(expected, rel=1e-6)

    def test_gradient_is_lambda_scaled(self):
        _, grads = sparsity_penalty({"conv1": _mask([[3.0], [4.0]])}, SparsityConfig(lam=2.0))
        np.testing.assert_allclose(grads["conv1"], [[1.2], [1.6]])

    def test_needs_masks(self):
        with pytest.raises(ConfigError):
            sparsity_penalty({}, SparsityConfig())

    def test_lambda_alias(self):
        assert SparsityConfig(**{"lambda": 0.3}).lam == 0.3


class TestMaskSets:
    def test_init_covers_every_conv(self, tiny_graph):
        masks = init_masks(tiny_graph)
        assert list(masks) == ["conv1", "conv2", "conv3"]
        assert masks["conv2"].values.shape == (3, 6)
        assert np.all(masks["conv2"].values.data == 1.0)
        check_masks(tiny_graph, masks, 3)

    def test_class_agnostic_rows(self, tiny_graph):
        masks = init_masks(tiny_graph, num_classes=1)
        assert masks["conv1"].values.shape == (1, 4)
        with pytest.raises(ShapeMismatchError):
            check_masks(tiny_graph, masks, 3)

    def test_labels_for_single_row(self):
        collapsed = labels_for_mask_rows(np.eye(3)[[0, 2]], 1)
        np.testing.assert_array_equal(collapsed, [[1.0], [1.0]])

    def test_fold_coefficients(self):
        assert fold_coefficient(0.5, True, 10) == 0.5
        assert fold_coefficient(0.5, False, 10) == pytest.approx(0.1)
        assert fold_coefficient(0.5, True, 1) == 1.0

    def test_restrict_and_norms(self):
        mask = _mask([[3.0, 1.0, 0.0], [4.0, 1.0, 0.0]])
        np.testing.assert_allclose(mask_column_norms(mask), [5.0, np.sqrt(2), 0.0])
        restricted = restrict_mask(mask, [0, 2])
        np.testing.assert_array_equal(restricted.values.data, [[3.0, 0.0], [4.0, 0.0]])
        assert mean_column_norm({"a": restricted}) == pytest.approx(2.5)

    def test_init_mask_dtype(self):
        assert init_mask("conv1", 2, 3, dtype=np.float64).values.dtype == np.float64


class TestJointObjective:
    def _batch(self, graph, rng, n=6):
        images = rng.normal(size=(n,) + tuple(graph.input_shape))
        labels = ops.one_hot(np.arange(n) % graph.num_classes, graph.num_classes, np.float64)
        return images, labels

    def test_zero_lambda_is_masked_cross_entropy(self, tiny_graph, rng):
        masks = init_masks(tiny_graph)
        images, labels = self._batch(tiny_graph, rng)
        soft = expectation_labels(labels, 0.5)
        result = total_objective(images, labels, tiny_graph, masks, SparsityConfig(lam=0.0), 0.5, 0.0,
                                 soft_labels=soft, compute_grads=False)
        logits, _ = forward(tiny_graph, images, training=True, masks=masks, soft_labels=soft)
        expected, _ = ops.softmax_cross_entropy(logits, labels)
        assert result.loss == pytest.approx(expected, rel=1e-12)
        assert result.penalty > 0

    def test_unmasked_objective_has_no_penalty(self, tiny_graph, rng):
        images, labels = self._batch(tiny_graph, rng)
        result = total_objective(images, labels, tiny_graph, {}, SparsityConfig(lam=5.0), 0.5, 1.0,
                                 compute_grads=False)
        assert result.penalty == 0.0
        assert result.loss == result.cross_entropy

    def test_large_lambda_shrinks_every_column(self, tiny_graph, rng):
        masks = init_masks(tiny_graph)
        before = {layer_id: mask_column_norms(mask) for layer_id, mask in masks.items()}
        images, labels = self._batch(tiny_graph, rng)
        config = SparsityConfig(lam=10.0)
        params = {layer_id: mask.values for layer_id, mask in masks.items()}
        state = OptimizerState(lr=1e-3, momentum=0.0)
        for _ in range(100):
            total_objective(images, labels, tiny_graph, masks, config, 0.5, 1.0, rng=rng)
            sgd_step(params, {name: p.grad for name, p in params.items()}, state)
            zero_grads(params.values())
            zero_grads(graph_parameters(tiny_graph).values())
        for layer_id, mask in masks.items():
            assert np.all(mask_column_norms(mask) < before[layer_id])

    def test_loss_decreases_under_training(self, tiny_graph, rng):
        masks = init_masks(tiny_graph)
        images, labels = self._batch(tiny_graph, rng, n=12)
        soft = expectation_labels(labels, 0.5)
        config = SparsityConfig(lam=1e-3)
        params = dict(graph_parameters(tiny_graph))
        params.update({f"mask.{layer_id}": mask.values for layer_id, mask in masks.items()})
        state = OptimizerState(lr=0.05, momentum=0.9)
        losses = []
        for _ in range(50):
            result = total_objective(images, labels, tiny_graph, masks, config, 0.5, 0.0, soft_labels=soft)
            losses.append(result.loss)
            sgd_step(params, {name: p.grad for name, p in params.items() if p.grad is not None}, state)
            zero_grads(params.values())
        assert losses[-1] < losses[0]
