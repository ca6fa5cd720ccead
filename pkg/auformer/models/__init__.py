"""
Backbone, adaptation modules and the collaborative AUFormer model
"""

from auformer.models.adapter import ADAPTER_KINDS, get_adapter
from auformer.models.backbone import Backbone, TransformerBlock, ViTConfig, load_weights, save_weights
from auformer.models.base_adapter import BaseAdapter
from auformer.models.collaboration import (
    AblationConfig,
    AUFormerModel,
    ExpertGroup,
    GenerationState,
    ModelOutput,
    group_forward,
    learnable_parameters,
    model_forward,
)
from auformer.models.moke import MoKE, MoKEConfig
from auformer.models.reference_adapters import BottleneckAdapter, LoRAAdapter

__all__ = [
    'ADAPTER_KINDS', 'get_adapter', 'Backbone', 'TransformerBlock', 'ViTConfig', 'load_weights',
    'save_weights', 'BaseAdapter', 'AblationConfig', 'AUFormerModel', 'ExpertGroup',
    'GenerationState', 'ModelOutput', 'group_forward', 'learnable_parameters', 'model_forward',
    'MoKE', 'MoKEConfig', 'BottleneckAdapter', 'LoRAAdapter',
]
