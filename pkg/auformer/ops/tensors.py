"""
Dense-array kernels used by every other module

All kernels are pure functions over torch tensors. Spatial maps are
channels-first ([C, H, W]) for conv2d and channels-last ([H, W, C]) for token
grids; every kernel accepts an optional leading batch dimension.
"""

import math

import torch
import torch.nn.functional as F
from torch import nn

from auformer.errors import ConfigurationError, ShapeError
from auformer.ops.prng import seeded_init


class Conv2dParams(nn.Module):
    """
    Learnable parameters of one 2D convolution

    Same-size convolutions use k in {1, 3} with padding = dilation * (k // 2);
    the ViT patch embedding uses kernel = stride = patch size and no padding.
    """

    def __init__(self, in_channels, out_channels, kernel_size, dilation=1, stride=1,
                 padding=None, seed=0, std=0.02, zero_init=False, dtype=torch.float32):
        super().__init__()
        if dilation < 1:
            raise ConfigurationError(f"dilation must be positive, got {dilation}")
        if padding is None:
            padding = dilation * (kernel_size // 2)
        if padding < 0:
            raise ConfigurationError(f"padding must be non-negative, got {padding}")

        scheme = "zeros" if zero_init else "trunc_normal"
        self.weight = nn.Parameter(seeded_init(
            (out_channels, in_channels, kernel_size, kernel_size), scheme, seed, std, dtype))
        self.bias = nn.Parameter(torch.zeros(out_channels, dtype=dtype))
        self.dilation = int(dilation)
        self.stride = int(stride)
        self.padding = int(padding)

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def kernel_size(self):
        return self.weight.shape[-1]

    def forward(self, x):
        return conv2d(x, self)

    def extra_repr(self):
        return (f"{self.in_channels}->{self.out_channels}, k={self.kernel_size}, "
                f"dilation={self.dilation}, stride={self.stride}, padding={self.padding}")


def conv2d(x, params):
    """
    Cross-correlation with zero padding and dilation

    Args:
        x (torch.Tensor): [C_in, H, W] or [B, C_in, H, W]
        params (Conv2dParams): Convolution parameters

    Returns:
        torch.Tensor: [C_out, H', W'] (or batched); H' == H for stride 1

    Raises:
        ShapeError: If the input channel count does not match the weight
    """
    if x.dim() not in (3, 4):
        raise ShapeError(f"conv2d expects [C,H,W] or [B,C,H,W], got {tuple(x.shape)}")
    if x.shape[-3] != params.in_channels:
        raise ShapeError(
            f"conv2d channel mismatch: input has {x.shape[-3]}, weight expects {params.in_channels}")
    if x.shape[-1] < 1 or x.shape[-2] < 1:
        raise ShapeError(f"conv2d needs spatial dims >= 1, got {tuple(x.shape[-2:])}")

    unbatched = x.dim() == 3
    if unbatched:
        x = x.unsqueeze(0)
    out = F.conv2d(x, params.weight, params.bias, stride=params.stride,
                   padding=params.padding, dilation=params.dilation)
    return out.squeeze(0) if unbatched else out


def conv2d_hwc(m, params):
    """conv2d over a channels-last map [..., H, W, C]."""
    out = conv2d(m.movedim(-1, -3), params)
    return out.movedim(-3, -1)


def softmax(x, axis=-1):
    """
    Softmax along one axis

    Args:
        x (torch.Tensor): Finite input
        axis (int): Normalisation axis

    Returns:
        torch.Tensor: Non-negative weights summing to 1 along axis
    """
    if not -x.dim() <= axis < x.dim():
        raise ShapeError(f"softmax axis {axis} invalid for rank {x.dim()}")
    return torch.softmax(x, dim=axis)


def activations(x, kind):
    """
    Elementwise activation

    Args:
        x (torch.Tensor): Finite input
        kind (str): 'gelu' (exact erf form) or 'sigmoid'

    Returns:
        torch.Tensor: Activated tensor
    """
    if kind == "gelu":
        return F.gelu(x)
    if kind == "sigmoid":
        return torch.sigmoid(x)
    raise ValueError(f"Unsupported activation: {kind}")


def tokens_to_grid(tokens):
    """
    Split a token sequence into the [CLS] map and the patch grid

    Args:
        tokens (torch.Tensor): [N_t, D] or [B, N_t, D]

    Returns:
        tuple: (cls [..., 1, 1, D], grid [..., H, W, D])

    Raises:
        ConfigurationError: If N_t - 1 is not a perfect square
    """
    n_patches = tokens.shape[-2] - 1
    side = math.isqrt(max(n_patches, 0))
    if n_patches < 1 or side * side != n_patches:
        raise ConfigurationError(
            f"Token count {tokens.shape[-2]} does not hold [CLS] plus a square patch grid")

    lead = tokens.shape[:-2]
    dim = tokens.shape[-1]
    cls = tokens[..., :1, :].reshape(*lead, 1, 1, dim)
    grid = tokens[..., 1:, :].reshape(*lead, side, side, dim)
    return cls, grid


def grid_to_tokens(cls, grid):
    """
    Inverse of tokens_to_grid

    Args:
        cls (torch.Tensor): [..., 1, 1, D]
        grid (torch.Tensor): [..., H, W, D]

    Returns:
        torch.Tensor: [..., 1 + H*W, D]
    """
    lead = grid.shape[:-3]
    dim = grid.shape[-1]
    patches = grid.reshape(*lead, -1, dim)
    return torch.cat([cls.reshape(*lead, 1, dim), patches], dim=-2)
