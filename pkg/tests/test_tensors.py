import math

import pytest
import torch

from auformer.errors import ConfigurationError, ShapeError
from auformer.ops.prng import SplitMix64, derive_seed, seeded_init
from auformer.ops.tensors import Conv2dParams, activations, conv2d, grid_to_tokens, softmax, tokens_to_grid

from tests.conftest import seeded_randn


def make_conv(weight, bias=None, dilation=1):
    weight = torch.as_tensor(weight, dtype=torch.float64)
    params = Conv2dParams(weight.shape[1], weight.shape[0], weight.shape[-1], dilation=dilation,
                          dtype=torch.float64)
    with torch.no_grad():
        params.weight.copy_(weight)
        params.bias.copy_(torch.zeros(weight.shape[0]) if bias is None else torch.as_tensor(bias))
    return params


def loop_conv(x, weight, bias, dilation):
    c_out, c_in, k, _ = weight.shape
    _, h, w = x.shape
    pad = dilation * (k // 2)
    out = torch.zeros(c_out, h, w, dtype=torch.float64)
    for o in range(c_out):
        for i in range(h):
            for j in range(w):
                total = float(bias[o])
                for c in range(c_in):
                    for a in range(k):
                        for b in range(k):
                            y, z = i - pad + a * dilation, j - pad + b * dilation
                            if 0 <= y < h and 0 <= z < w:
                                total += float(weight[o, c, a, b]) * float(x[c, y, z])
                out[o, i, j] = total
    return out


def test_conv2d_identity_1x1():
    x = seeded_randn(1, 5, 5, seed=10)
    out = conv2d(x, make_conv([[[[1.0]]]]))
    assert torch.equal(out, x)


def test_conv2d_dilated_impulse_footprint():
    weight = torch.zeros(1, 1, 3, 3, dtype=torch.float64)
    weight[0, 0, 0, 2] = 1.0
    x = torch.zeros(1, 9, 9, dtype=torch.float64)
    x[0, 4, 4] = 1.0
    out = conv2d(x, make_conv(weight, dilation=3))
    offsets = {(i - 4, j - 4) for i, j in (out[0] != 0).nonzero().tolist()}
    assert offsets and offsets <= {(a, b) for a in (-3, 0, 3) for b in (-3, 0, 3)}


def test_conv2d_ones_kernel_center_and_corner():
    out = conv2d(torch.ones(1, 5, 5, dtype=torch.float64), make_conv(torch.ones(1, 1, 3, 3)))
    assert out[0, 2, 2] == 9.0
    assert out[0, 0, 0] == 4.0


@pytest.mark.parametrize("size, dilation", [(4, 1), (6, 2), (8, 3)])
def test_conv2d_matches_nested_loop_oracle(size, dilation):
    gen = torch.Generator().manual_seed(size)
    x = torch.randn(2, size, size, generator=gen, dtype=torch.float64)
    weight = torch.randn(3, 2, 3, 3, generator=gen, dtype=torch.float64)
    bias = torch.randn(3, generator=gen, dtype=torch.float64)
    out = conv2d(x, make_conv(weight, bias, dilation))
    assert out.shape == (3, size, size)
    assert torch.allclose(out, loop_conv(x, weight, bias, dilation), rtol=0, atol=1e-10)


def test_conv2d_channel_mismatch():
    with pytest.raises(ShapeError):
        conv2d(torch.zeros(3, 4, 4, dtype=torch.float64), make_conv(torch.ones(1, 2, 1, 1)))


def test_softmax_examples():
    assert torch.allclose(softmax(torch.full((4,), 2.5)), torch.full((4,), 0.25))
    out = softmax(torch.tensor([0.0, math.log(2.0)], dtype=torch.float64), axis=0)
    assert torch.allclose(out, torch.tensor([1 / 3, 2 / 3], dtype=torch.float64), atol=1e-15)
    x = seeded_randn(3, 7, seed=11)
    assert torch.allclose(softmax(x, 1), softmax(x + 11.0, 1), atol=1e-15)


def test_softmax_rows_sum_to_one():
    x = seeded_randn(16, 9, seed=12, dtype=torch.float32)
    assert torch.allclose(softmax(x, -1).sum(-1), torch.ones(16), atol=1e-6)
    assert torch.allclose(softmax(x.double(), -1).sum(-1), torch.ones(16, dtype=torch.float64), atol=1e-12)
    with pytest.raises(ShapeError):
        softmax(x, axis=2)


@pytest.mark.parametrize("n_tokens, side", [(65, 8), (17, 4)])
def test_tokens_to_grid_shapes_and_round_trip(n_tokens, side):
    tokens = seeded_randn(n_tokens, 64, seed=13, dtype=torch.float32)
    cls, grid = tokens_to_grid(tokens)
    assert cls.shape == (1, 1, 64)
    assert grid.shape == (side, side, 64)
    assert torch.equal(grid_to_tokens(cls, grid), tokens)


def test_tokens_to_grid_batched():
    tokens = seeded_randn(3, 17, 8, seed=14, dtype=torch.float32)
    cls, grid = tokens_to_grid(tokens)
    assert cls.shape == (3, 1, 1, 8) and grid.shape == (3, 4, 4, 8)
    assert torch.equal(grid_to_tokens(cls, grid), tokens)


def test_tokens_to_grid_rejects_non_square():
    with pytest.raises(ConfigurationError):
        tokens_to_grid(torch.zeros(10, 4))


def test_activations():
    assert activations(torch.tensor(0.0), "sigmoid") == 0.5
    assert activations(torch.tensor(0.0), "gelu") == 0.0
    value = activations(torch.tensor(math.log(3.0), dtype=torch.float64), "sigmoid")
    assert abs(float(value) - 0.75) < 1e-15
    with pytest.raises(ValueError):
        activations(torch.zeros(1), "relu")


def test_seeded_init():
    assert torch.count_nonzero(seeded_init((4, 5), "zeros", seed=3)) == 0
    a = seeded_init((64, 32), "trunc_normal", seed=11)
    b = seeded_init((64, 32), "trunc_normal", seed=11)
    assert torch.equal(a, b)
    assert not torch.equal(a, seeded_init((64, 32), "trunc_normal", seed=12))
    assert float(a.abs().max()) <= 0.04
    assert 0.01 < float(a.std()) < 0.02


def test_splitmix_streams_are_deterministic():
    assert (SplitMix64(5).next_uint64(8) == SplitMix64(5).next_uint64(8)).all()
    stream = SplitMix64(9)
    first, second = stream.uniform(4), stream.uniform(4)
    assert not (first == second).all()
    assert derive_seed(1, "a") == derive_seed(1, "a") != derive_seed(1, "b")
    u = SplitMix64(1).uniform(10000)
    assert ((u >= 0) & (u < 1)).all() and abs(u.mean() - 0.5) < 0.02
    assert sorted(SplitMix64(2).permutation(10).tolist()) == list(range(10))
