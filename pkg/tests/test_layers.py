import numpy as np
import pytest

from golfopt import tensor as T
from golfopt.layers import (
    Conv2d,
    InstanceNorm2d,
    LayerSpec,
    Linear,
    ResidualCNN,
    block_forward,
    build_basic_block,
    count_basic_layers,
    param_count,
)
from golfopt.tensor import Tensor

from .oracles import numeric_grad


def _zero_branch(bb):
    for name, p in bb.branch.named_parameters():
        if name.endswith("weight") or name.endswith("beta"):
            p.data[:] = 0.0


@pytest.mark.parametrize(
    "c_in, c_out, expected",
    [(16, 16, 19_008), (32, 32, 75_904), (16, 3, 2_669), (3, 3, 678), (32, 3, 5_101)],
)
def test_basic_block_param_counts(c_in, c_out, expected, rng):
    assert param_count(build_basic_block(c_in, c_out, rng)) == expected


def test_table_rows(rng):
    g = ResidualCNN(16, rng)
    f = ResidualCNN(32, rng)
    assert [n for _, n in g.rows()] == [2_352, 38_016, 38_016, 38_016, 3_347, 441]
    assert [n for _, n in f.rows()] == [4_704, 151_808, 151_808, 151_808, 5_779, 441]
    assert param_count(g) == 120_188
    assert param_count(f) == 466_348


def test_layer_spec_counts():
    assert LayerSpec("Conv7", 3, 32, False).param_count == 4_704
    assert LayerSpec("Conv7", 3, 3, False).param_count == 441
    assert LayerSpec("InstanceNorm", 8, 8, False).param_count == 16
    assert LayerSpec("ReLU", 8, 8, False).param_count == 0


def test_fifty_basic_layers(rng):
    assert count_basic_layers(ResidualCNN(8, rng)) == 50


def test_zero_branch_block_is_identity(rng):
    bb = build_basic_block(4, 4, rng)
    _zero_branch(bb)
    x = Tensor(rng.normal(size=(2, 4, 9, 9)))
    np.testing.assert_array_equal(block_forward(bb, x).data, x.data)


def test_zero_input_zero_output(rng):
    for c_in, c_out in ((4, 4), (4, 3)):
        bb = build_basic_block(c_in, c_out, rng)
        out = block_forward(bb, Tensor(np.zeros((1, c_in, 8, 8))))
        assert not out.data.any()


@pytest.mark.parametrize("c_in, c_out", [(4, 4), (5, 3)])
def test_block_decomposes_into_shortcut_plus_branch(rng, c_in, c_out):
    bb = build_basic_block(c_in, c_out, rng)
    x = Tensor(rng.normal(size=(2, c_in, 8, 8)))
    skip = x.data if bb.shortcut is None else bb.shortcut(x).data
    np.testing.assert_allclose(block_forward(bb, x).data - skip, bb.branch(x).data, atol=1e-12)


def test_block_rejects_wrong_channels(rng):
    with pytest.raises(ValueError, match="channels"):
        build_basic_block(4, 4, rng)(Tensor(np.zeros((1, 3, 8, 8))))
    with pytest.raises(ValueError):
        build_basic_block(0, 4, rng)


def test_init_bounds(rng):
    conv = Conv2d(4, 6, 5, rng)
    bound = np.sqrt(1.0 / (4 * 25))
    assert np.abs(conv.weight.data).max() <= bound
    norm = InstanceNorm2d(6)
    np.testing.assert_array_equal(norm.gamma.data, 1)
    np.testing.assert_array_equal(norm.beta.data, 0)


@pytest.mark.parametrize(
    "make",
    [
        lambda r: Conv2d(2, 3, 5, r),
        lambda r: Conv2d(2, 2, 7, r),
        lambda r: Conv2d(3, 2, 1, r),
        lambda r: InstanceNorm2d(2),
        lambda r: build_basic_block(2, 2, r),
        lambda r: build_basic_block(3, 2, r),
    ],
)
def test_layer_gradients(rng, make):
    layer = make(rng)
    c_in = layer.c_in if hasattr(layer, "c_in") else (layer.in_channels if hasattr(layer, "in_channels") else 2)
    if isinstance(layer, InstanceNorm2d):
        layer.gamma.data = rng.normal(size=2)
        layer.beta.data = rng.normal(size=2)
    x = Tensor(rng.normal(size=(1, c_in, 6, 6)), requires_grad=True)
    w = rng.normal(size=layer(x).shape)
    f = lambda t: T.tsum(T.mul(layer(t), w))  # noqa: E731
    assert T.grad_check(f, x) < 1e-4
    T.zero_grads(layer.parameters().values())
    T.backward(f(x.detach()))
    for name, p in layer.parameters().items():
        def scalar(arr, p=p):
            saved = p.data
            p.data = arr
            with T.no_grad():
                v = f(x.detach()).item()
            p.data = saved
            return v

        numeric = numeric_grad(scalar, p.data.copy())
        err = np.max(np.abs(p.grad - numeric) / (np.abs(p.grad) + np.abs(numeric) + 1e-12))
        assert err < 1e-4, name


def test_linear_layer(rng):
    layer = Linear(3, 2, rng)
    assert param_count(layer) == 8
    assert param_count(Linear(3, 2, rng, bias=False)) == 6
    x = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    assert T.grad_check(lambda t: T.tsum(T.square(layer(t))), x) < 1e-4
