"""
MoKE groups, knowledge inheritance across generations, intra-group averaging,
injection into the frozen backbone and the prediction heads
"""

from dataclasses import dataclass
from typing import Literal, Optional

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict
from torch import nn

from auformer.errors import ConfigurationError
from auformer.models.adapter import get_adapter
from auformer.models.backbone import Backbone, ViTConfig, residual_attention, residual_mlp
from auformer.models.moke import MoKEConfig, can_stack, stacked_moke_forward
from auformer.ops.prng import derive_seed, seeded_init
from auformer.ops.tensors import activations

SITES = ("mhsa", "mlp")


class AblationConfig(BaseModel):
    """
    Component switches; every combination is a valid model/loss pair
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    petl: bool = True
    collab: bool = True
    mrf: bool = True
    ca: bool = True
    gamma: bool = True
    margin: bool = True
    adapter: Literal["moke", "adapter", "lora"] = "moke"


@dataclass
class GenerationState:
    """
    Per-AU knowledge handed from one group to the next; None stands for zero
    """

    knowledge: list

    @classmethod
    def initial(cls, num_aus):
        return cls([None] * num_aus)


class ExpertGroup(nn.Module):
    """
    The experts attached to one site of one block

    Identically configured MoKE experts run as one stacked pass unless
    fused is switched off.
    """

    def __init__(self, experts, site, layer, collaborate=True):
        super().__init__()
        self.experts = nn.ModuleList(experts)
        self.site = site
        self.layer = layer
        self.collaborate = collaborate
        self.fused = collaborate and can_stack(experts)

    def __len__(self):
        return len(self.experts)


def group_forward(x_site, group, prev, block=None):
    """
    Each expert reads the site tokens plus its inherited knowledge;
    the group output is the mean over experts

    With collaboration off the group holds a single shared expert that reads
    only the site tokens; its output stands in for every AU.

    Args:
        x_site (torch.Tensor): Site input tokens [..., N_t, D]
        group (ExpertGroup): Experts of this site
        prev (GenerationState): Knowledge of the previous group
        block (TransformerBlock): Frozen block of the site

    Returns:
        tuple: (K_group, next GenerationState)

    Raises:
        ConfigurationError: If the state size does not match the group
    """
    if not group.collaborate:
        knowledge = group.experts[0](x_site, block)
        return knowledge, GenerationState([knowledge] * len(prev.knowledge))

    if len(prev.knowledge) != len(group):
        raise ConfigurationError(
            f"Generation state holds {len(prev.knowledge)} entries, group has {len(group)} experts")

    inputs = [x_site if inherited is None else x_site + inherited for inherited in prev.knowledge]
    if group.fused:
        first = group.experts[0]
        stacked = stacked_moke_forward(torch.stack(inputs, dim=-3), list(group.experts), first.config)
        outputs = list(stacked.unbind(dim=-3))
    else:
        outputs = [expert(tokens, block) for expert, tokens in zip(group.experts, inputs)]

    # fixed ascending summation order
    total = outputs[0]
    for knowledge in outputs[1:]:
        total = total + knowledge
    return total / len(outputs), GenerationState(outputs)


class AuxHeads(nn.Module):
    """
    N independent linear maps D -> 1, one per AU
    """

    def __init__(self, num_aus, dim, seed=0, dtype=torch.float32):
        super().__init__()
        self.weight = nn.Parameter(seeded_init((num_aus, dim), "trunc_normal", seed, 0.02, dtype))
        self.bias = nn.Parameter(torch.zeros(num_aus, dtype=dtype))

    def forward(self, cls_per_au):
        # cls_per_au: [..., N, D]
        return (cls_per_au * self.weight).sum(dim=-1) + self.bias


@dataclass
class ModelOutput:
    logits: torch.Tensor
    probs: torch.Tensor
    aux_logits: Optional[torch.Tensor] = None
    aux_probs: Optional[torch.Tensor] = None


class AUFormerModel(nn.Module):
    """
    Frozen backbone, 2L expert groups, main head and per-AU aux heads
    """

    def __init__(self, vit: ViTConfig, moke: MoKEConfig, num_aus, ablation: AblationConfig = None,
                 seed=0, backbone=None):
        super().__init__()
        ablation = ablation or AblationConfig()
        self.vit_config = vit
        self.moke_config = moke
        self.ablation = ablation
        self.num_aus = num_aus
        self.seed = seed
        self.backbone = (backbone or Backbone(vit)).freeze()

        groups = []
        if ablation.petl:
            experts_per_group = num_aus if ablation.collab else 1
            for layer in range(vit.depth):
                for site in SITES:
                    experts = [
                        get_adapter(ablation.adapter, vit, moke, site,
                                    derive_seed(seed, f"groups.{layer}.{site}.{i}"),
                                    use_mrf=ablation.mrf, use_ca=ablation.ca)
                        for i in range(experts_per_group)
                    ]
                    groups.append(ExpertGroup(experts, site, layer, collaborate=ablation.collab))
        self.groups = nn.ModuleList(groups)

        dtype = vit.torch_dtype
        self.main_head = nn.Linear(vit.dim, num_aus, dtype=dtype)
        with torch.no_grad():
            self.main_head.weight.copy_(seeded_init(
                (num_aus, vit.dim), "trunc_normal", derive_seed(seed, "main_head"), 0.02, dtype))
            self.main_head.bias.zero_()
        self.aux_heads = (AuxHeads(num_aus, vit.dim, derive_seed(seed, "aux_heads"), dtype)
                          if ablation.petl else None)

    def forward(self, images):
        return model_forward(self, images)


def _site_input(x, norm, mode, group):
    # adapters that re-run the sublayer apply its LayerNorm themselves
    if mode == "pre_norm" or group.experts[0].reads_raw_tokens:
        return x
    return norm(x)


def model_forward(model, images):
    """
    Full forward: thread the generation state through MHSA group -> inject ->
    MLP group -> inject for every block, then the heads

    Args:
        model (AUFormerModel): Model
        images (torch.Tensor): [C, H, W] or [B, C, H, W]

    Returns:
        ModelOutput: logits Z, probs p and the aux counterparts
    """
    backbone = model.backbone
    mode = model.vit_config.moke_input
    x = backbone.patch_embed_tokens(images)
    state = GenerationState.initial(model.num_aus)

    for layer, block in enumerate(backbone.blocks):
        k_mhsa = k_mlp = None
        if model.groups:
            group = model.groups[2 * layer]
            k_mhsa, state = group_forward(_site_input(x, block.ln1, mode, group), group, state, block)
        x_mid = residual_attention(x, block, k_mhsa)
        if model.groups:
            group = model.groups[2 * layer + 1]
            k_mlp, state = group_forward(_site_input(x_mid, block.ln2, mode, group), group, state, block)
        x = residual_mlp(x_mid, block, k_mlp)

    logits = F.linear(x[..., 0, :], model.main_head.weight, model.main_head.bias)
    output = ModelOutput(logits=logits, probs=activations(logits, "sigmoid"))
    if model.aux_heads is not None:
        cls_per_au = torch.stack([k[..., 0, :] for k in state.knowledge], dim=-2)
        output.aux_logits = model.aux_heads(cls_per_au)
        output.aux_probs = activations(output.aux_logits, "sigmoid")
    return output


def learnable_parameters(model):
    """
    Named learnable tensors: every group and head tensor, no backbone tensor

    Args:
        model (AUFormerModel): Model

    Returns:
        list: (name, parameter) pairs, each name once
    """
    return [(name, param) for name, param in model.named_parameters()
            if not name.startswith("backbone.")]


def frozen_parameters(model):
    return [(name, param) for name, param in model.named_parameters() if name.startswith("backbone.")]
