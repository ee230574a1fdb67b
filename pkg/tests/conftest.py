import numpy as np
import pytest

from wbprune.classes.graph import ModelGraph, build_toy_cnn
from wbprune.classes.run import TrainConfig
from wbprune.engine.ops import set_debug_checks


@pytest.fixture(autouse=True)
def debug_checks():
    set_debug_checks(True)
    yield
    set_debug_checks(False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def ready_batchnorm(graph: ModelGraph, rng: np.random.Generator) -> ModelGraph:
    """Give every batchnorm layer plausible running statistics so eval mode works"""
    for layer in graph.layers:
        if layer.kind == "bn":
            layer.running_mean[:] = rng.normal(0.0, 0.1, size=layer.out_channels)
            layer.running_var[:] = rng.uniform(0.5, 1.5, size=layer.out_channels)
            layer.weight.data[:] = rng.uniform(0.5, 1.5, size=layer.out_channels)
            layer.bias.data[:] = rng.normal(0.0, 0.1, size=layer.out_channels)
            layer.num_batches_tracked = 1
    return graph


@pytest.fixture
def tiny_graph(rng):
    """Three conv-bn-relu blocks on 3 x 8 x 8 inputs, double precision"""
    graph = build_toy_cnn([4, 6, 5], (3, 8, 8), num_classes=3, seed=7, dtype=np.float64)
    return ready_batchnorm(graph, rng)


@pytest.fixture
def tiny_config():
    """Smallest config that still runs every phase"""
    return TrainConfig(
        num_classes=3, n_per_class=8, test_per_class=4, image_size=8, conv_channels=[4, 6],
        finetune_epochs=2, mask_epochs=1, batch_size=8, lr=0.05, alpha=0.3, seed=0,
    )


@pytest.fixture
def ready_bn():
    return ready_batchnorm
