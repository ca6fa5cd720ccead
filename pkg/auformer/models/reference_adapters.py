"""
Reference adaptation modules compared against MoKE: bottleneck Adapter and LoRA
"""

import torch
import torch.nn.functional as F
from torch import nn

from auformer.errors import ConfigurationError
from auformer.models.backbone import mhsa_forward, mlp_forward
from auformer.models.base_adapter import BaseAdapter
from auformer.ops.prng import derive_seed, seeded_init
from auformer.ops.tensors import activations


class BottleneckAdapter(BaseAdapter):
    """
    Token-wise bottleneck: Linear D->d, GELU, Linear d->D (zero-init), times scale
    """

    def __init__(self, dim, rank, site="mhsa", seed=0, scale=1.0, dtype=torch.float32):
        super().__init__(dim, site)
        self.rank = rank
        self.scale = scale
        self.down_weight = nn.Parameter(
            seeded_init((rank, dim), "trunc_normal", derive_seed(seed, "down"), 0.02, dtype))
        self.down_bias = nn.Parameter(torch.zeros(rank, dtype=dtype))
        self.up_weight = nn.Parameter(torch.zeros(dim, rank, dtype=dtype))
        self.up_bias = nn.Parameter(torch.zeros(dim, dtype=dtype))

    def forward(self, tokens, block=None):
        hidden = activations(F.linear(tokens, self.down_weight, self.down_bias), "gelu")
        return self.scale * F.linear(hidden, self.up_weight, self.up_bias)

    def flops(self, num_tokens):
        return 2 * 2 * num_tokens * self.dim * self.rank


# Frozen projections adapted at each site
_LORA_TARGETS = {
    "mhsa": ("q", "v"),
    "mlp": ("fc1", "fc2"),
}


class LoRAAdapter(BaseAdapter):
    """
    Low-rank updates W + scale * B A of the site's frozen projections

    The knowledge is the change the update makes to the sublayer output, so the
    adapter plugs into the same injection points as MoKE.
    """

    reads_raw_tokens = True

    def __init__(self, dim, rank, site="mhsa", seed=0, scale=1.0, hidden_dim=None, dtype=torch.float32):
        super().__init__(dim, site)
        if site not in _LORA_TARGETS:
            raise ConfigurationError(f"Unsupported LoRA site: {site}")
        hidden_dim = hidden_dim or 4 * dim
        shapes = {"q": (dim, dim), "v": (dim, dim), "fc1": (hidden_dim, dim), "fc2": (dim, hidden_dim)}
        self.rank = rank
        self.scale = scale
        self.targets = _LORA_TARGETS[site]
        self.shapes = {name: shapes[name] for name in self.targets}
        self.lora_a = nn.ParameterDict({
            name: nn.Parameter(seeded_init((rank, shape[1]), "trunc_normal",
                                           derive_seed(seed, f"lora_a.{name}"), 0.02, dtype))
            for name, shape in self.shapes.items()
        })
        self.lora_b = nn.ParameterDict({
            name: nn.Parameter(torch.zeros(shape[0], rank, dtype=dtype))
            for name, shape in self.shapes.items()
        })

    def deltas(self):
        return {name: self.scale * (self.lora_b[name] @ self.lora_a[name]) for name in self.targets}

    def forward(self, tokens, block=None):
        if block is None:
            raise ConfigurationError("LoRA adapter needs the frozen block of its site")
        sublayer = mhsa_forward if self.site == "mhsa" else mlp_forward
        return sublayer(tokens, block, self.deltas()) - sublayer(tokens, block)

    def flops(self, num_tokens):
        return sum(2 * num_tokens * self.rank * (out_f + in_f) for out_f, in_f in self.shapes.values())
