"""
Tensor kernels and deterministic initialisation
"""

from auformer.ops.prng import SplitMix64, derive_seed, seeded_init
from auformer.ops.tensors import (
    Conv2dParams,
    activations,
    conv2d,
    conv2d_hwc,
    grid_to_tokens,
    softmax,
    tokens_to_grid,
)

__all__ = [
    'SplitMix64', 'derive_seed', 'seeded_init', 'Conv2dParams', 'activations',
    'conv2d', 'conv2d_hwc', 'grid_to_tokens', 'softmax', 'tokens_to_grid',
]
