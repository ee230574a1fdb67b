"""
Finite-difference checks of every backward kernel in double precision
"""

import numpy as np
import pytest

from wbprune.classes.graph import build_toy_cnn
from wbprune.classes.mask import ClasswiseMask, SparsityConfig
from wbprune.classes.tensor import Tensor
from wbprune.engine import ops
from wbprune.engine.gradcheck import FD_STEP, numerical_gradient, projection_loss, relative_error
from wbprune.engine.network import backward, forward
from wbprune.pruning.masks import init_masks, masked_conv_backward, masked_conv_forward, sparsity_penalty
from wbprune.pruning.objective import total_objective

TOLERANCE = 1e-4


def _random_conv_case(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.choice([1, 3]))
    padding = int(rng.integers(0, 2))
    stride = int(rng.integers(1, 3))
    size = int(rng.integers(max(k, 3), 7))
    x = rng.normal(size=(int(rng.integers(1, 3)), int(rng.integers(1, 4)), size, size))
    weight = rng.normal(size=(int(rng.integers(1, 4)), x.shape[1], k, k))
    bias = rng.normal(size=weight.shape[0])
    return rng, x, weight, bias, stride, padding


@pytest.mark.parametrize("seed", range(20))
def test_conv2d_gradients(seed):
    rng, x, weight, bias, stride, padding = _random_conv_case(seed)
    out, cache = ops.conv2d_forward(x, weight, bias, stride, padding)
    projection = rng.normal(size=out.shape)
    dx, dw, db = ops.conv2d_backward(projection, cache)

    def fn():
        return projection_loss(ops.conv2d_forward(x, weight, bias, stride, padding)[0], projection)

    assert relative_error(dx, numerical_gradient(fn, x)) < TOLERANCE
    assert relative_error(dw, numerical_gradient(fn, weight)) < TOLERANCE
    assert relative_error(db, numerical_gradient(fn, bias)) < TOLERANCE


@pytest.mark.parametrize("seed", range(20))
def test_masked_conv_gradients(seed):
    rng, x, weight, bias, stride, padding = _random_conv_case(seed)
    num_classes = int(rng.integers(1, 5))
    mask = ClasswiseMask(layer_id="conv", values=Tensor(rng.normal(size=(num_classes, weight.shape[0]))))
    soft = rng.normal(size=(x.shape[0], num_classes))
    out, cache = masked_conv_forward(x, weight, bias, mask, soft, stride, padding)
    projection = rng.normal(size=out.shape)
    dx, dw, db, dmask = masked_conv_backward(projection, cache)

    def fn():
        return projection_loss(masked_conv_forward(x, weight, bias, mask, soft, stride, padding)[0], projection)

    assert relative_error(dx, numerical_gradient(fn, x)) < TOLERANCE
    assert relative_error(dw, numerical_gradient(fn, weight)) < TOLERANCE
    assert relative_error(db, numerical_gradient(fn, bias)) < TOLERANCE
    assert relative_error(dmask, numerical_gradient(fn, mask.values.data)) < TOLERANCE


@pytest.mark.parametrize("seed", range(20))
def test_channel_scale_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(int(rng.integers(1, 4)), int(rng.integers(1, 5)), 3, 4))
    scale = rng.normal(size=x.shape[:2])
    projection = rng.normal(size=x.shape)
    dx, dscale = ops.channel_scale_backward(projection, x, scale)

    def fn():
        return projection_loss(ops.channel_scale_forward(x, scale), projection)

    assert relative_error(dx, numerical_gradient(fn, x)) < TOLERANCE
    assert relative_error(dscale, numerical_gradient(fn, scale)) < TOLERANCE


@pytest.mark.parametrize("seed", range(20))
def test_linear_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(int(rng.integers(1, 5)), int(rng.integers(1, 7))))
    weight = rng.normal(size=(int(rng.integers(1, 5)), x.shape[1]))
    bias = rng.normal(size=weight.shape[0])
    projection = rng.normal(size=(x.shape[0], weight.shape[0]))
    dx, dw, db = ops.linear_backward(projection, x, weight)

    def fn():
        return projection_loss(ops.linear_forward(x, weight, bias), projection)

    assert relative_error(dx, numerical_gradient(fn, x)) < TOLERANCE
    assert relative_error(dw, numerical_gradient(fn, weight)) < TOLERANCE
    assert relative_error(db, numerical_gradient(fn, bias)) < TOLERANCE


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("training", [True, False])
def test_batchnorm_gradients(seed, training):
    rng = np.random.default_rng(seed)
    channels = int(rng.integers(1, 4))
    x = rng.normal(1.0, 2.0, size=(int(rng.integers(2, 4)), channels, 3, 3))
    gamma = rng.uniform(0.5, 1.5, size=channels)
    beta = rng.normal(size=channels)
    stats = (rng.normal(size=channels), rng.uniform(0.5, 2.0, size=channels))

    def run():
        # fresh statistics each call so eval mode sees the same running values
        mean, var = stats[0].copy(), stats[1].copy()
        return ops.batchnorm2d_forward(x, gamma, beta, mean, var, training=training)

    out, cache = run()
    projection = rng.normal(size=out.shape)
    dx, dgamma, dbeta = ops.batchnorm2d_backward(projection, cache)

    def fn():
        return projection_loss(run()[0], projection)

    assert relative_error(dx, numerical_gradient(fn, x)) < TOLERANCE
    assert relative_error(dgamma, numerical_gradient(fn, gamma)) < TOLERANCE
    assert relative_error(dbeta, numerical_gradient(fn, beta)) < TOLERANCE


@pytest.mark.parametrize("seed", range(20))
def test_cross_entropy_gradient(seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(4, 6))
    labels = ops.one_hot(rng.integers(0, 6, size=4), 6, np.float64)
    _, grad = ops.softmax_cross_entropy(logits, labels)

    def fn():
        return ops.softmax_cross_entropy(logits, labels)[0]

    assert relative_error(grad, numerical_gradient(fn, logits)) < TOLERANCE


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("norm_kind", ["l2_group", "l1"])
def test_sparsity_penalty_gradient(seed, norm_kind):
    rng = np.random.default_rng(seed)
    masks = {
        "a": ClasswiseMask(layer_id="a", values=Tensor(rng.normal(size=(3, 5)))),
        "b": ClasswiseMask(layer_id="b", values=Tensor(rng.normal(size=(3, 2)))),
    }
    config = SparsityConfig(lam=0.7, norm_kind=norm_kind)
    _, grads = sparsity_penalty(masks, config)

    for layer_id, mask in masks.items():
        def fn():
            return config.lam * sparsity_penalty(masks, config)[0]

        assert relative_error(grads[layer_id], numerical_gradient(fn, mask.values.data)) < TOLERANCE


class TestNetworkGradients:
    def _batch(self, graph, rng, n=4):
        images = rng.normal(size=(n,) + tuple(graph.input_shape))
        labels = ops.one_hot(rng.integers(0, graph.num_classes, size=n), graph.num_classes, np.float64)
        return images, labels

    @staticmethod
    def _kink_margin(graph, trace):
        """Smallest distance of any relu input from zero or of any pool window from a tie"""
        margin = np.inf
        for index, (layer, cache) in enumerate(zip(graph.layers, trace.caches)):
            if layer.kind == "relu":
                margin = min(margin, np.min(np.abs(cache)))
            elif layer.kind == "maxpool":
                x = ops.relu_forward(trace.caches[index - 1])
                n, c, h, w = x.shape
                windows = np.sort(x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
                                  .reshape(-1, 4), axis=1)
                gaps = windows[:, -1] - windows[:, -2]
                live = windows[:, -1] > 0
                if live.any():
                    margin = min(margin, np.min(gaps[live]))
        return margin

    def test_masked_network_parameters(self, ready_bn, rng):
        graph = ready_bn(build_toy_cnn([2, 3], (3, 4, 4), num_classes=3, seed=7, dtype=np.float64), rng)
        masks = init_masks(graph)
        clearance = 100 * FD_STEP
        for _ in range(100):
            for mask in masks.values():
                mask.values.data[:] = rng.uniform(0.5, 1.5, size=mask.values.shape)
            images, labels = self._batch(graph, rng, n=2)
            soft = np.where(labels == 1, 1.0, rng.normal(0.5, 1.0, size=labels.shape))
            logits, trace = forward(graph, images, training=True, masks=masks, soft_labels=soft)
            if self._kink_margin(graph, trace) > clearance:
                break
        assert self._kink_margin(graph, trace) > clearance

        def fn():
            out, _ = forward(graph, images, training=True, masks=masks, soft_labels=soft)
            return ops.softmax_cross_entropy(out, labels)[0]

        _, grad_logits = ops.softmax_cross_entropy(logits, labels)
        grad_input = backward(graph, trace, grad_logits, masks)

        assert relative_error(grad_input, numerical_gradient(fn, images)) < TOLERANCE
        for mask in masks.values():
            assert relative_error(mask.values.grad, numerical_gradient(fn, mask.values.data)) < TOLERANCE
        for layer in graph.layers:
            if layer.kind in ("conv", "bn", "linear"):
                assert relative_error(layer.weight.grad, numerical_gradient(fn, layer.weight.data)) < TOLERANCE

    def test_total_objective_mask_gradient(self, tiny_graph, rng):
        masks = init_masks(tiny_graph)
        images, labels = self._batch(tiny_graph, rng)
        soft = np.where(labels == 1, 1.0, 0.5)
        config = SparsityConfig(lam=0.3)

        total_objective(images, labels, tiny_graph, masks, config, mu=0.5, sigma=0.0, soft_labels=soft)
        analytic = masks["conv2"].values.grad.copy()

        def fn():
            return total_objective(images, labels, tiny_graph, masks, config, mu=0.5, sigma=0.0,
                                   soft_labels=soft, compute_grads=False).loss

        assert relative_error(analytic, numerical_gradient(fn, masks["conv2"].values.data)) < TOLERANCE
