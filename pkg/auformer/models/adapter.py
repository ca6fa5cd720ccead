"""
Adapter factory
"""

from auformer.models.moke import MoKE
from auformer.models.reference_adapters import BottleneckAdapter, LoRAAdapter

ADAPTER_KINDS = ("moke", "adapter", "lora")


def get_adapter(kind, vit_config, moke_config, site, seed, use_mrf=True, use_ca=True):
    """
    Factory function to get the appropriate adaptation module

    Args:
        kind (str): Adapter type (moke, adapter, lora)
        vit_config (ViTConfig): Backbone configuration
        moke_config (MoKEConfig): Supplies reduced channels d and scale s
        site (str): 'mhsa' or 'mlp'
        seed (int): Seed of this adapter's parameter streams
        use_mrf (bool): Keep the MRF operator (MoKE only)
        use_ca (bool): Keep the CA operator (MoKE only)

    Returns:
        BaseAdapter: The appropriate adapter instance

    Raises:
        ValueError: If the adapter type is not supported
    """
    dtype = vit_config.torch_dtype
    kind = kind.lower()
    if kind == "moke":
        return MoKE(vit_config.dim, moke_config, site=site, seed=seed,
                    use_mrf=use_mrf, use_ca=use_ca, dtype=dtype)
    elif kind == "adapter":
        return BottleneckAdapter(vit_config.dim, moke_config.d, site=site, seed=seed,
                                 scale=moke_config.scale, dtype=dtype)
    elif kind == "lora":
        return LoRAAdapter(vit_config.dim, moke_config.d, site=site, seed=seed,
                           scale=moke_config.scale, hidden_dim=vit_config.hidden_dim, dtype=dtype)
    else:
        raise ValueError(f"Unsupported adapter type: {kind}")
