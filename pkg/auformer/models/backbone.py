"""
Frozen pre-norm Vision Transformer providing the residual stream for the adapters
"""

import logging
import math
from typing import Literal

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, model_validator
from torch import nn

from auformer.errors import DimensionError
from auformer.ops.prng import derive_seed, seeded_init
from auformer.ops.tensors import Conv2dParams, activations, conv2d, softmax
from auformer.utils.weights_io import load_tensors, save_tensors

logger = logging.getLogger(__name__)

DTYPES = {"float32": torch.float32, "float64": torch.float64}


class ViTConfig(BaseModel):
    """
    Backbone shape. The default is the desk-scale configuration.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    image_size: int = 32
    patch_size: int = 4
    channels: int = 1
    depth: int = 4
    dim: int = 64
    heads: int = 4
    mlp_ratio: float = 4.0
    dtype: Literal["float32", "float64"] = "float32"
    moke_input: Literal["pre_norm", "post_norm"] = "pre_norm"
    seed: int = 0

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} is not a multiple of patch_size {self.patch_size}")
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if min(self.depth, self.dim, self.heads, self.channels) < 1:
            raise ValueError("depth, dim, heads and channels must be positive")
        return self

    @property
    def grid_size(self):
        return self.image_size // self.patch_size

    @property
    def num_patches(self):
        return self.grid_size ** 2

    @property
    def num_tokens(self):
        return self.num_patches + 1

    @property
    def head_dim(self):
        return self.dim // self.heads

    @property
    def hidden_dim(self):
        return int(self.dim * self.mlp_ratio)

    @property
    def torch_dtype(self):
        return DTYPES[self.dtype]


def _linear(in_features, out_features, seed, dtype):
    layer = nn.Linear(in_features, out_features, dtype=dtype)
    with torch.no_grad():
        layer.weight.copy_(seeded_init((out_features, in_features), "trunc_normal", seed,
                                       std=in_features ** -0.5, dtype=dtype))
        layer.bias.zero_()
    return layer


class TransformerBlock(nn.Module):
    """
    One pre-norm block: LN -> MHSA and LN -> MLP, each on a residual branch
    """

    def __init__(self, config: ViTConfig, seed):
        super().__init__()
        dim, hidden, dtype = config.dim, config.hidden_dim, config.torch_dtype
        self.heads = config.heads
        self.ln1 = nn.LayerNorm(dim, eps=1e-6, dtype=dtype)
        self.q = _linear(dim, dim, derive_seed(seed, "q"), dtype)
        self.k = _linear(dim, dim, derive_seed(seed, "k"), dtype)
        self.v = _linear(dim, dim, derive_seed(seed, "v"), dtype)
        self.o = _linear(dim, dim, derive_seed(seed, "o"), dtype)
        self.ln2 = nn.LayerNorm(dim, eps=1e-6, dtype=dtype)
        self.fc1 = _linear(dim, hidden, derive_seed(seed, "fc1"), dtype)
        self.fc2 = _linear(hidden, dim, derive_seed(seed, "fc2"), dtype)


def _project(h, layer, deltas, key):
    weight = layer.weight
    if deltas and key in deltas:
        weight = weight + deltas[key]
    return F.linear(h, weight, layer.bias)


def mhsa_forward(x, block, deltas=None):
    """
    MHSA branch of a block (residual added by the caller)

    Args:
        x (torch.Tensor): [N_t, D] or [B, N_t, D]
        block (TransformerBlock): Frozen block
        deltas (dict): Optional weight deltas keyed 'q', 'k', 'v', 'o'

    Returns:
        torch.Tensor: Same shape as x
    """
    h = block.ln1(x)
    n_tokens, dim = x.shape[-2], x.shape[-1]
    head_dim = dim // block.heads

    def split(t):
        return t.reshape(*t.shape[:-1], block.heads, head_dim).transpose(-3, -2)

    q = split(_project(h, block.q, deltas, "q"))
    k = split(_project(h, block.k, deltas, "k"))
    v = split(_project(h, block.v, deltas, "v"))
    attn = softmax(q @ k.transpose(-2, -1) / math.sqrt(head_dim), axis=-1)
    merged = (attn @ v).transpose(-3, -2).reshape(*x.shape[:-2], n_tokens, dim)
    return _project(merged, block.o, deltas, "o")


def mlp_forward(x, block, deltas=None):
    """
    MLP branch of a block: LN -> W1 -> GELU -> W2

    Args:
        x (torch.Tensor): [N_t, D] or [B, N_t, D]
        block (TransformerBlock): Frozen block
        deltas (dict): Optional weight deltas keyed 'fc1', 'fc2'

    Returns:
        torch.Tensor: Same shape as x
    """
    h = activations(_project(block.ln2(x), block.fc1, deltas, "fc1"), "gelu")
    return _project(h, block.fc2, deltas, "fc2")


def residual_attention(x, block, inject=None):
    out = x + mhsa_forward(x, block)
    return out if inject is None else out + inject


def residual_mlp(x, block, inject=None):
    out = x + mlp_forward(x, block)
    return out if inject is None else out + inject


def block_forward(x, block, inject_mhsa=None, inject_mlp=None):
    """
    A Transformer block with knowledge injected after each branch

    Args:
        x (torch.Tensor): Block input X_{l-1}
        block (TransformerBlock): Frozen block
        inject_mhsa (torch.Tensor): K^{MHSA}_l or None (zero)
        inject_mlp (torch.Tensor): K^{MLP}_l or None (zero)

    Returns:
        tuple: (x_mid, x_out)
    """
    x_mid = residual_attention(x, block, inject_mhsa)
    return x_mid, residual_mlp(x_mid, block, inject_mlp)


class Backbone(nn.Module):
    """
    Patch embedding, [CLS] token, learned positions and L Transformer blocks
    """

    def __init__(self, config: ViTConfig):
        super().__init__()
        self.config = config
        dtype, seed = config.torch_dtype, config.seed
        self.patch_embed = Conv2dParams(
            config.channels, config.dim, config.patch_size, stride=config.patch_size, padding=0,
            seed=derive_seed(seed, "patch_embed"),
            std=(config.channels * config.patch_size ** 2) ** -0.5, dtype=dtype)
        self.cls_token = nn.Parameter(
            seeded_init((1, config.dim), "trunc_normal", derive_seed(seed, "cls_token"), 0.02, dtype))
        self.pos_embed = nn.Parameter(
            seeded_init((config.num_tokens, config.dim), "trunc_normal",
                        derive_seed(seed, "pos_embed"), 0.02, dtype))
        self.blocks = nn.ModuleList(
            TransformerBlock(config, derive_seed(seed, f"blocks.{i}")) for i in range(config.depth))
        self.frozen = False

    def freeze(self):
        self.requires_grad_(False)
        self.frozen = True
        return self

    def patch_embed_tokens(self, images):
        """
        Tokenise images: patch conv, prepend [CLS], add positions

        Args:
            images (torch.Tensor): [C, H, W] or [B, C, H, W]

        Returns:
            torch.Tensor: [N_t, D] or [B, N_t, D]

        Raises:
            DimensionError: If the image does not match the config
        """
        cfg = self.config
        expected = (cfg.channels, cfg.image_size, cfg.image_size)
        if images.dim() not in (3, 4) or tuple(images.shape[-3:]) != expected:
            raise DimensionError(f"Expected image shape {expected}, got {tuple(images.shape)}")

        unbatched = images.dim() == 3
        if unbatched:
            images = images.unsqueeze(0)
        patches = conv2d(images, self.patch_embed).flatten(2).transpose(1, 2)
        cls = self.cls_token.expand(images.shape[0], 1, cfg.dim)
        tokens = torch.cat([cls, patches], dim=1) + self.pos_embed
        return tokens.squeeze(0) if unbatched else tokens

    def forward_features(self, images):
        """Plain ViT forward with no injection; returns final tokens."""
        x = self.patch_embed_tokens(images)
        for block in self.blocks:
            _, x = block_forward(x, block)
        return x

    def forward(self, images):
        return self.forward_features(images)


def save_weights(backbone, path):
    """
    Write backbone tensors to an AUFW file

    Args:
        backbone (Backbone): Backbone to save
        path (str): Destination file
    """
    save_tensors(backbone.state_dict(), path)
    logger.info(f"Saved backbone weights to {path}")


def load_weights(path, config: ViTConfig):
    """
    Build a frozen backbone from an AUFW file

    Args:
        path (str): Source file
        config (ViTConfig): Configuration the file must match

    Returns:
        Backbone: Frozen backbone

    Raises:
        FormatError: On malformed files
        DimensionError: If stored shapes disagree with the config
    """
    tensors = load_tensors(path)
    backbone = Backbone(config)
    expected = backbone.state_dict()
    if set(tensors) != set(expected):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise DimensionError(f"Weight file tensors do not match config (missing={missing}, extra={extra})")
    for name, tensor in tensors.items():
        if tuple(tensor.shape) != tuple(expected[name].shape):
            raise DimensionError(
                f"Tensor {name} has shape {tuple(tensor.shape)}, config expects {tuple(expected[name].shape)}")
    backbone.load_state_dict({k: v.to(config.torch_dtype) for k, v in tensors.items()})
    return backbone.freeze()


