import pytest
import torch
import torch.nn.functional as F

from auformer.errors import ConfigurationError
from auformer.losses.config import LossConfig
from auformer.losses.objective import AUFormerObjective
from auformer.models.backbone import ViTConfig, mhsa_forward, mlp_forward
from auformer.models.collaboration import (
    AblationConfig,
    AUFormerModel,
    ExpertGroup,
    GenerationState,
    frozen_parameters,
    group_forward,
    learnable_parameters,
    model_forward,
)
from auformer.models.moke import MoKE, MoKEConfig
from auformer.services.gradcheck import randomize_parameters

from tests.conftest import random_images, seeded_randn


def random_group(n, seed=0, same=False):
    experts = [MoKE(8, MoKEConfig(d=2), seed=seed if same else seed + i, dtype=torch.float64) for i in range(n)]
    group = ExpertGroup(experts, "mhsa", 0)
    with torch.no_grad():
        for i, expert in enumerate(group.experts):
            for j, (_, param) in enumerate(sorted(expert.named_parameters())):
                gen = torch.Generator().manual_seed(1000 * (0 if same else i) + j)
                param.copy_(0.3 * torch.randn(param.shape, generator=gen, dtype=torch.float64))
    return group


def test_single_expert_group_is_identity_average():
    group = random_group(1)
    x = seeded_randn(17, 8, seed=10)
    k_group, state = group_forward(x, group, GenerationState.initial(1))
    assert torch.equal(k_group, state.knowledge[0])
    assert torch.equal(k_group, group.experts[0](x))


def test_identical_experts_give_identical_knowledge():
    group = random_group(3, same=True)
    x = seeded_randn(17, 8, seed=11)
    k_group, state = group_forward(x, group, GenerationState.initial(3))
    for knowledge in state.knowledge:
        assert torch.allclose(k_group, knowledge, rtol=0, atol=1e-12)


def test_group_average_matches_mean_oracle():
    group = random_group(3, seed=5)
    x = seeded_randn(2, 17, 8, seed=12)
    prev = GenerationState([seeded_randn(2, 17, 8, seed=13) for _ in range(3)])
    k_group, state = group_forward(x, group, prev)
    outputs = [expert(x + inherited) for expert, inherited in zip(group.experts, prev.knowledge)]
    assert torch.allclose(k_group, torch.stack(outputs).mean(0), rtol=0, atol=1e-12)
    for got, want in zip(state.knowledge, outputs):
        assert torch.allclose(got, want, rtol=0, atol=1e-12)


def test_group_rejects_state_size_mismatch():
    with pytest.raises(ConfigurationError):
        group_forward(torch.zeros(17, 8, dtype=torch.float64), random_group(3), GenerationState.initial(2))


def test_identity_at_init(make_model, tiny_vit):
    model = make_model()
    images = random_images(4, tiny_vit, seed=3)
    output = model_forward(model, images)
    cls = model.backbone.forward_features(images)[:, 0]
    assert torch.equal(output.logits, F.linear(cls, model.main_head.weight, model.main_head.bias))
    assert ((output.probs > 0) & (output.probs < 1)).all()
    assert output.aux_logits.shape == (4, 3)


def test_identity_at_init_desk_config():
    vit = ViTConfig()
    model = AUFormerModel(vit, MoKEConfig(), 4)
    images = random_images(100, vit, seed=1)
    cls = model.backbone.forward_features(images)[:, 0]
    assert torch.equal(model(images).logits, F.linear(cls, model.main_head.weight, model.main_head.bias))


def test_collaboration_off_ignores_inheritance():
    expert = random_group(1, seed=2).experts[0]
    group = ExpertGroup([expert], "mhsa", 0, collaborate=False)
    x = seeded_randn(2, 17, 8, seed=16)
    prev = GenerationState([seeded_randn(2, 17, 8, seed=17 + i) for i in range(3)])
    k_group, state = group_forward(x, group, prev)
    alone = expert(x)
    assert torch.equal(k_group, alone)
    assert len(state.knowledge) == 3
    assert all(torch.equal(knowledge, alone) for knowledge in state.knowledge)

    shared = random_group(3, seed=2, same=True)
    k_shared, _ = group_forward(x, shared, prev)
    assert not torch.allclose(k_shared, alone)


def test_collaboration_off_matches_shared_expert_oracle(make_model, tiny_vit):
    model = make_model(ablation=AblationConfig(collab=False), randomize=True)
    assert all(len(group) == 1 for group in model.groups)
    images = random_images(2, tiny_vit, seed=4)

    x = model.backbone.patch_embed_tokens(images)
    for layer, block in enumerate(model.backbone.blocks):
        knowledge = model.groups[2 * layer].experts[0](x)
        x = x + mhsa_forward(x, block) + knowledge
        knowledge = model.groups[2 * layer + 1].experts[0](x)
        x = x + mlp_forward(x, block) + knowledge

    output = model(images)
    logits = F.linear(x[:, 0], model.main_head.weight, model.main_head.bias)
    cls = knowledge[:, 0].unsqueeze(1)
    aux_logits = (cls * model.aux_heads.weight).sum(-1) + model.aux_heads.bias
    assert torch.allclose(output.logits, logits, rtol=0, atol=1e-12)
    assert torch.allclose(output.aux_logits, aux_logits, rtol=0, atol=1e-12)


def test_stacked_experts_match_per_expert_forward(make_model, tiny_vit):
    model = make_model(randomize=True)
    assert all(group.fused for group in model.groups)
    rates = torch.tensor([0.3, 0.5, 0.2], dtype=torch.float64)
    objective = AUFormerObjective(LossConfig.from_rates(rates))
    labels = torch.tensor([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]], dtype=torch.float64)
    images = random_images(2, tiny_vit, seed=6)

    results = []
    for fused in (True, False):
        for group in model.groups:
            group.fused = fused
        model.zero_grad(set_to_none=True)
        output = model(images)
        objective(output, labels)[0].backward()
        grads = {name: param.grad.clone() for name, param in learnable_parameters(model)}
        results.append((output, grads))

    (stacked, stacked_grads), (looped, looped_grads) = results
    assert torch.allclose(stacked.logits, looped.logits, rtol=0, atol=1e-12)
    assert torch.allclose(stacked.aux_logits, looped.aux_logits, rtol=0, atol=1e-12)
    for name, grad in looped_grads.items():
        assert torch.allclose(stacked_grads[name], grad, rtol=1e-9, atol=1e-12), name


def test_stacking_needs_matching_moke_experts(tiny_vit, tiny_moke):
    assert not AUFormerModel(tiny_vit, tiny_moke, 2, AblationConfig(adapter="lora")).groups[0].fused
    assert not AUFormerModel(tiny_vit, tiny_moke, 2, AblationConfig(collab=False)).groups[0].fused
    mixed = [MoKE(8, MoKEConfig(d=2)), MoKE(8, MoKEConfig(d=2), use_ca=False)]
    assert not ExpertGroup(mixed, "mhsa", 0).fused


def test_petl_off_is_heads_only(make_model, tiny_vit):
    model = make_model(ablation=AblationConfig(petl=False), randomize=True)
    names = [name for name, _ in learnable_parameters(model)]
    assert names == ["main_head.weight", "main_head.bias"]
    output = model(random_images(2, tiny_vit))
    assert output.aux_logits is None and output.aux_probs is None


def test_learnable_parameters_exclude_backbone(make_model):
    model = make_model()
    names = [name for name, _ in learnable_parameters(model)]
    assert len(names) == len(set(names))
    assert not any(name.startswith("backbone.") for name in names)
    assert {name for name, _ in frozen_parameters(model)} == {f"backbone.{n}" for n, _ in model.backbone.named_parameters()}


def test_learnable_count_matches_shape_enumeration():
    big_d, d, n, depth = 64, 4, 4, 4
    def conv(c_in, c_out, k):
        return c_out * c_in * k * k + c_out

    per_expert = (conv(big_d, d, 1) + conv(d, d, 3) + 3 * conv(d, d, 3) + conv(3 * d, d, 1)
                  + 3 * conv(d, d, 1) + conv(d, big_d, 1))
    heads = (big_d * n + n) * 2
    model = AUFormerModel(ViTConfig(), MoKEConfig(), n)
    learnable = sum(p.numel() for _, p in learnable_parameters(model))
    assert learnable == 2 * depth * n * per_expert + heads == 41608


def test_gradient_isolation(make_model, tiny_vit):
    model = make_model(randomize=True)
    rates = torch.tensor([0.3, 0.5, 0.2], dtype=torch.float64)
    objective = AUFormerObjective(LossConfig.from_rates(rates))
    labels = torch.tensor([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]], dtype=torch.float64)
    loss, _ = objective(model(random_images(2, tiny_vit)), labels)
    loss.backward()
    assert all(p.grad is None for _, p in frozen_parameters(model))
    assert all(p.grad is not None for _, p in learnable_parameters(model))


def test_generation_chaining(make_model, tiny_vit):
    model = make_model(randomize=True)
    for group in model.groups:
        group.fused = False
    calls = {}

    def recorder(group_index, expert_index):
        def hook(module, args, output):
            calls[(group_index, expert_index)] = (args[0], output)
        return hook

    handles = [expert.register_forward_hook(recorder(g, i))
               for g, group in enumerate(model.groups) for i, expert in enumerate(group.experts)]
    model(random_images(1, tiny_vit))
    for handle in handles:
        handle.remove()

    assert torch.equal(calls[(0, 0)][0], calls[(0, 1)][0])
    for g in range(1, len(model.groups)):
        # site input shared by the group, recovered by removing each expert's inheritance
        sites = [calls[(g, i)][0] - calls[(g - 1, i)][1] for i in range(3)]
        assert torch.allclose(sites[0], sites[1], rtol=0, atol=1e-12)
        assert torch.allclose(sites[0], sites[2], rtol=0, atol=1e-12)


def test_expert_permutation_is_equivariant(make_model, tiny_vit):
    model = make_model(randomize=True)
    perm = [2, 0, 1]
    state = model.state_dict()
    permuted = {}
    for name, tensor in state.items():
        parts = name.split(".")
        if parts[0] == "groups" and parts[2] == "experts":
            source = ".".join(parts[:3] + [str(perm[int(parts[3])])] + parts[4:])
            permuted[name] = state[source]
        elif parts[0] in ("aux_heads", "main_head"):
            permuted[name] = tensor[perm]
        else:
            permuted[name] = tensor
    other = make_model()
    other.load_state_dict(permuted)

    images = random_images(2, tiny_vit, seed=9)
    base, moved = model(images), other(images)
    assert torch.allclose(moved.aux_logits, base.aux_logits[:, perm], rtol=0, atol=1e-10)
    assert torch.allclose(moved.logits, base.logits[:, perm], rtol=0, atol=1e-10)


@pytest.mark.parametrize("adapter", ["adapter", "lora"])
def test_reference_adapters_keep_identity_at_init(make_model, tiny_vit, adapter):
    model = make_model(ablation=AblationConfig(adapter=adapter))
    images = random_images(2, tiny_vit)
    cls = model.backbone.forward_features(images)[:, 0]
    assert torch.equal(model(images).logits, F.linear(cls, model.main_head.weight, model.main_head.bias))


def test_post_norm_input_mode(tiny_moke):
    vit = ViTConfig(image_size=8, patch_size=2, depth=2, dim=8, heads=2, dtype="float64", moke_input="post_norm")
    model = randomize_parameters(AUFormerModel(vit, tiny_moke, 2), seed=3, std=0.2)
    pre = randomize_parameters(AUFormerModel(vit.model_copy(update={"moke_input": "pre_norm"}), tiny_moke, 2),
                               seed=3, std=0.2)
    images = random_images(1, vit)
    assert not torch.allclose(model(images).logits, pre(images).logits)


def test_model_rejects_unknown_adapter(tiny_vit, tiny_moke):
    with pytest.raises(ValueError):
        AUFormerModel(tiny_vit, tiny_moke, 2, AblationConfig.model_construct(adapter="vpt", petl=True,
                                                                             collab=True, mrf=True, ca=True))


def test_lora_reads_raw_tokens_in_post_norm_mode(tiny_moke):
    vit = ViTConfig(image_size=8, patch_size=2, depth=1, dim=8, heads=2, dtype="float64", moke_input="post_norm")
    model = randomize_parameters(AUFormerModel(vit, tiny_moke, 2, AblationConfig(adapter="lora")), seed=5, std=0.2)
    seen = []
    handle = model.groups[0].experts[0].register_forward_hook(lambda module, args, output: seen.append(args[0]))
    images = random_images(1, vit)
    model(images)
    handle.remove()
    assert torch.equal(seen[0], model.backbone.patch_embed_tokens(images))
