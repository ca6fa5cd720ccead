"""
Parameter and FLOP accounting

FLOPs are 2 x multiply-accumulates of convolutions and matrix products per
sample; normalisation, softmax and elementwise activations are not counted.
"""

from auformer.errors import DimensionError
from auformer.models.collaboration import frozen_parameters, learnable_parameters


def count_params(model):
    """
    Learnable and frozen parameter counts

    Args:
        model (AUFormerModel): Model

    Returns:
        dict: learnable, frozen and ratio = learnable / (learnable + frozen)
    """
    learnable = sum(p.numel() for _, p in learnable_parameters(model))
    frozen = sum(p.numel() for _, p in frozen_parameters(model))
    return {"learnable": learnable, "frozen": frozen, "ratio": learnable / (learnable + frozen)}


def backbone_flops(config):
    """Per-sample FLOPs of the frozen ViT."""
    d, n_t, hidden = config.dim, config.num_tokens, config.hidden_dim
    patch = 2 * config.num_patches * config.channels * config.patch_size ** 2 * d
    attention = 4 * 2 * n_t * d * d + 2 * 2 * n_t * n_t * d
    mlp = 2 * 2 * n_t * d * hidden
    return patch + config.depth * (attention + mlp)


def _batch_size(config, input_shape):
    if input_shape is None:
        return 1
    shape = tuple(input_shape)
    expected = (config.channels, config.image_size, config.image_size)
    if shape[-3:] != expected or len(shape) not in (3, 4):
        raise DimensionError(f"Input shape {shape} does not match image shape {expected}")
    return shape[0] if len(shape) == 4 else 1


def flop_breakdown(model, input_shape=None):
    """
    FLOPs of the backbone, the adaptation modules and the heads

    Args:
        model (AUFormerModel): Model
        input_shape (tuple): [C, H, W] or [B, C, H, W]; one sample if omitted

    Returns:
        dict: backbone, adapters, heads, total and adapter_overhead_pct
            (adapter FLOPs as a percentage of backbone FLOPs)
    """
    config = model.vit_config
    batch = _batch_size(config, input_shape)
    backbone = backbone_flops(config)
    adapters = sum(expert.flops(config.num_tokens) for group in model.groups for expert in group.experts)
    heads = 2 * config.dim * model.num_aus * (2 if model.aux_heads is not None else 1)
    return {
        "backbone": batch * backbone,
        "adapters": batch * adapters,
        "heads": batch * heads,
        "total": batch * (backbone + adapters + heads),
        "adapter_overhead_pct": 100.0 * adapters / backbone,
    }


def estimate_flops(model, input_shape=None):
    return flop_breakdown(model, input_shape)["total"]
