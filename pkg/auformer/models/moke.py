"""
Mixture-of-Knowledge Expert: down 1x1, basic 3x3 + GELU, MRF and CA operators,
sum fusion and zero-initialised up 1x1
"""

import math
from functools import lru_cache

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, field_validator
from torch import nn

from auformer.models.base_adapter import BaseAdapter
from auformer.ops.prng import derive_seed
from auformer.ops.tensors import (
    Conv2dParams,
    activations,
    conv2d_hwc,
    grid_to_tokens,
    softmax,
    tokens_to_grid,
)


class MoKEConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    d: int = 4
    dilations: tuple[int, ...] = (1, 3, 5)
    neighborhood: int = 3
    scale: float = 1.0

    @field_validator("d")
    @classmethod
    def _positive_d(cls, value):
        if value < 1:
            raise ValueError(f"d must be >= 1, got {value}")
        return value

    @field_validator("dilations")
    @classmethod
    def _increasing_dilations(cls, value):
        if not value or value[0] < 1 or any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"dilations must be strictly increasing positive ints, got {value}")
        return value

    @field_validator("neighborhood")
    @classmethod
    def _odd_neighborhood(cls, value):
        if value < 3 or value % 2 == 0:
            raise ValueError(f"neighborhood S must be odd and >= 3, got {value}")
        return value


class MoKE(BaseAdapter):
    """
    One expert. With use_mrf/use_ca off the operator and its parameters are absent.
    """

    def __init__(self, dim, config: MoKEConfig, site="mhsa", seed=0, use_mrf=True, use_ca=True,
                 dtype=torch.float32):
        super().__init__(dim, site)
        self.config = config
        self.use_mrf = use_mrf
        self.use_ca = use_ca
        d = config.d

        def conv(name, c_in, c_out, k, dilation=1, zero_init=False):
            return Conv2dParams(c_in, c_out, k, dilation=dilation, seed=derive_seed(seed, name),
                                zero_init=zero_init, dtype=dtype)

        self.down = conv("down", dim, d, 1)
        self.basic = conv("basic", d, d, 3)
        if use_mrf:
            self.mrf = nn.ModuleList(
                conv(f"mrf.{i}", d, d, 3, dilation=r) for i, r in enumerate(config.dilations))
            self.fuse = conv("fuse", len(config.dilations) * d, d, 1)
        if use_ca:
            self.ca_q = conv("ca_q", d, d, 1)
            self.ca_k = conv("ca_k", d, d, 1)
            self.ca_v = conv("ca_v", d, d, 1)
        self.up = conv("up", d, dim, 1, zero_init=True)

    def forward(self, tokens, block=None):
        return moke_forward(tokens, self, self.config)

    def flops(self, num_tokens):
        cfg, d, dim, p = self.config, self.config.d, self.dim, num_tokens
        total = 2 * p * dim * d + 2 * p * 9 * d * d + 2 * p * d * dim
        if self.use_mrf:
            total += len(cfg.dilations) * 2 * p * 9 * d * d
            total += 2 * p * len(cfg.dilations) * d * d
        if self.use_ca:
            total += 3 * 2 * p * d * d
            total += 2 * 2 * p * cfg.neighborhood ** 2 * d
        return total


def _expert_map(m, params, cfg):
    """Down, basic 3x3, GELU, operators, fusion and up on one channels-last map."""
    basic = activations(conv2d_hwc(conv2d_hwc(m, params.down), params.basic), "gelu")
    fused = basic
    if params.use_mrf:
        fused = fused + mrf_forward(basic, params, cfg)
    if params.use_ca:
        fused = fused + ca_forward(basic, params, cfg)
    return cfg.scale * conv2d_hwc(fused, params.up)


def moke_forward(tokens, params, cfg: MoKEConfig):
    """
    Expert forward: tokens -> knowledge of the same shape

    The [CLS] token goes through the identical pipeline as a 1x1 map.

    Args:
        tokens (torch.Tensor): [N_t, D] or [B, N_t, D], N_t - 1 a perfect square
        params (MoKE): Expert parameters
        cfg (MoKEConfig): Expert configuration

    Returns:
        torch.Tensor: Knowledge with the shape of tokens
    """
    cls, grid = tokens_to_grid(tokens)
    return grid_to_tokens(_expert_map(cls, params, cfg), _expert_map(grid, params, cfg))


def mrf_forward(m, params, cfg: MoKEConfig):
    """
    Multi-receptive-field operator

    Parallel dilated 3x3 convolutions, concatenated along channels and fused by
    a 1x1 convolution back to d channels.

    Args:
        m (torch.Tensor): [..., H, W, d]
        params (MoKE): Expert parameters
        cfg (MoKEConfig): Expert configuration

    Returns:
        torch.Tensor: [..., H, W, d]
    """
    branches = [conv2d_hwc(m, branch) for branch in params.mrf]
    return conv2d_hwc(torch.cat(branches, dim=-1), params.fuse)


@lru_cache(maxsize=32)
def neighborhood_validity(height, width, size, dtype, device=None):
    """[S*S, H*W] mask of in-bounds neighbours for every position."""
    ones = torch.ones(1, 1, height, width, dtype=dtype, device=device)
    unfolded = torch.nn.functional.unfold(ones, size, padding=size // 2)
    return unfolded.reshape(size * size, height * width) > 0


def ca_forward(m, params, cfg: MoKEConfig):
    """
    Context-aware operator

    For each position x and channel c the logits Q_x[c] * K_x'[c] / sqrt(d) over
    the in-bounds S x S neighbours x' are normalised per channel; the output is
    the weighted sum of V_x'[c]. Out-of-bounds neighbours are excluded.

    Args:
        m (torch.Tensor): [..., H, W, d]
        params (MoKE): Expert parameters
        cfg (MoKEConfig): Expert configuration

    Returns:
        torch.Tensor: [..., H, W, d]
    """
    size = cfg.neighborhood
    lead, (height, width, d) = m.shape[:-3], m.shape[-3:]
    flat = m.reshape(-1, height, width, d)

    def channels_first(params_conv):
        return conv2d_hwc(flat, params_conv).permute(0, 3, 1, 2)

    q = channels_first(params.ca_q).reshape(-1, d, 1, height * width)
    k, v = channels_first(params.ca_k), channels_first(params.ca_v)
    k = torch.nn.functional.unfold(k, size, padding=size // 2).reshape(-1, d, size * size, height * width)
    v = torch.nn.functional.unfold(v, size, padding=size // 2).reshape(-1, d, size * size, height * width)

    valid = neighborhood_validity(height, width, size, m.dtype, m.device)
    logits = (q * k / math.sqrt(d)).masked_fill(~valid, float("-inf"))
    weights = softmax(logits, axis=2)
    out = (weights * v).sum(dim=2)
    return out.reshape(-1, d, height, width).permute(0, 2, 3, 1).reshape(*lead, height, width, d)


def can_stack(experts):
    """True when the experts are MoKEs with one shape and operator set."""
    if len(experts) < 2 or not all(isinstance(e, MoKE) for e in experts):
        return False
    first = experts[0]
    return all(e.config == first.config and e.dim == first.dim and e.use_mrf == first.use_mrf
               and e.use_ca == first.use_ca and e.up.weight.dtype == first.up.weight.dtype
               for e in experts)


def _grouped_conv(x, convs):
    # x: [B, G * C_in, H, W]; expert g owns channel block g
    weight = torch.cat([conv.weight for conv in convs])
    bias = torch.cat([conv.bias for conv in convs])
    first = convs[0]
    return F.conv2d(x, weight, bias, stride=first.stride, padding=first.padding,
                    dilation=first.dilation, groups=len(convs))


def _grouped_centre(v, convs):
    # a same-size convolution of a 1x1 map only reads its centre tap
    centre = convs[0].kernel_size // 2
    weight = torch.stack([conv.weight[:, :, centre, centre] for conv in convs])
    bias = torch.stack([conv.bias for conv in convs])
    return torch.einsum("bgi,goi->bgo", v, weight) + bias


def _grouped_ca(m, experts, cfg: MoKEConfig):
    size = cfg.neighborhood
    batch, channels, height, width = m.shape

    def unfolded(convs):
        out = F.unfold(_grouped_conv(m, convs), size, padding=size // 2)
        return out.reshape(batch, channels, size * size, height * width)

    q = _grouped_conv(m, [e.ca_q for e in experts]).reshape(batch, channels, 1, height * width)
    k, v = unfolded([e.ca_k for e in experts]), unfolded([e.ca_v for e in experts])
    valid = neighborhood_validity(height, width, size, m.dtype, m.device)
    logits = (q * k / math.sqrt(cfg.d)).masked_fill(~valid, float("-inf"))
    return (softmax(logits, axis=2) * v).sum(dim=2).reshape(batch, channels, height, width)


def _stacked_grid(grid, experts, cfg: MoKEConfig):
    """Grid path of G experts on [B, G * D, H, W]; returns [B, G * D, H, W]."""
    g, d = len(experts), cfg.d
    batch, _, height, width = grid.shape
    basic = activations(_grouped_conv(_grouped_conv(grid, [e.down for e in experts]),
                                      [e.basic for e in experts]), "gelu")
    fused = basic
    if experts[0].use_mrf:
        branches = [_grouped_conv(basic, [e.mrf[i] for e in experts]) for i in range(len(cfg.dilations))]
        # per expert: branch 0, branch 1, ... as in mrf_forward
        stacked = torch.stack([b.reshape(batch, g, d, height, width) for b in branches], dim=2)
        fused = fused + _grouped_conv(stacked.reshape(batch, -1, height, width), [e.fuse for e in experts])
    if experts[0].use_ca:
        fused = fused + _grouped_ca(basic, experts, cfg)
    return cfg.scale * _grouped_conv(fused, [e.up for e in experts])


def _stacked_cls(cls, experts, cfg: MoKEConfig):
    """[CLS] path of G experts on [B, G, D]; the CA operator sees only the token itself."""
    basic = activations(_grouped_centre(_grouped_centre(cls, [e.down for e in experts]),
                                        [e.basic for e in experts]), "gelu")
    fused = basic
    if experts[0].use_mrf:
        branches = [_grouped_centre(basic, [e.mrf[i] for e in experts]) for i in range(len(cfg.dilations))]
        fused = fused + _grouped_centre(torch.cat(branches, dim=-1), [e.fuse for e in experts])
    if experts[0].use_ca:
        fused = fused + _grouped_centre(basic, [e.ca_v for e in experts])
    return cfg.scale * _grouped_centre(fused, [e.up for e in experts])


def stacked_moke_forward(tokens, experts, cfg: MoKEConfig):
    """
    Forward of G experts in one pass, expert g reading slice g of the input

    Expert weights are concatenated along the output channels and applied as
    grouped convolutions. The result equals moke_forward per expert up to
    floating-point rounding.

    Args:
        tokens (torch.Tensor): [..., G, N_t, D]
        experts (list): G experts accepted by can_stack
        cfg (MoKEConfig): Shared expert configuration

    Returns:
        torch.Tensor: [..., G, N_t, D]
    """
    g = len(experts)
    lead, (n_tokens, dim) = tokens.shape[:-3], tokens.shape[-2:]
    cls, grid = tokens_to_grid(tokens.reshape(-1, g, n_tokens, dim))
    batch, _, height, width, _ = grid.shape

    grid_out = _stacked_grid(grid.permute(0, 1, 4, 2, 3).reshape(batch, g * dim, height, width), experts, cfg)
    grid_out = grid_out.reshape(batch, g, dim, height * width).transpose(-2, -1)
    cls_out = _stacked_cls(cls.reshape(batch, g, dim), experts, cfg)
    out = torch.cat([cls_out.unsqueeze(-2), grid_out], dim=-2)
    return out.reshape(*lead, g, n_tokens, dim)
