import json
from collections import Counter

import pytest
import torch

from auformer.data.manifest import Manifest, ManifestRow, load_dataset
from auformer.errors import ConfigurationError, DimensionError, DivergenceError
from auformer.losses.objective import AUFormerObjective
from auformer.models.backbone import ViTConfig
from auformer.models.collaboration import AblationConfig, AUFormerModel, frozen_parameters, learnable_parameters
from auformer.models.moke import MoKEConfig
from auformer.services.accounting import backbone_flops, count_params, estimate_flops, flop_breakdown
from auformer.services.checkpoint import load_checkpoint, save_checkpoint, sidecar_path
from auformer.services.folds import subject_folds
from auformer.services.gradcheck import randomize_parameters
from auformer.services.metrics import (
    confusion_counts,
    evaluate_f1,
    f1_from_counts,
    metrics_from_predictions,
    predict,
)
from auformer.services.trainer import TrainConfig, build_loss_config, build_optimizer, train, train_step

from tests.conftest import random_dataset


def manifest_with_counts(counts):
    rows, next_id = [], 0
    for subject, count in enumerate(counts):
        for _ in range(count):
            rows.append(ManifestRow(next_id, subject, (1,), f"{next_id}.autd"))
            next_id += 1
    return Manifest(rows=rows)


def test_f1_examples():
    assert f1_from_counts([3], [1], [2]).tolist() == pytest.approx([6 / 9])
    assert f1_from_counts([0], [0], [0]).tolist() == [0.0]
    assert f1_from_counts([4], [0], [0]).tolist() == [1.0]


def test_metrics_match_counting_oracle():
    generator = torch.Generator().manual_seed(0)
    probs = torch.rand(50, 3, generator=generator, dtype=torch.float64)
    labels = (torch.rand(50, 3, generator=generator) < 0.4).float()
    metrics = metrics_from_predictions(probs, labels)
    for au in range(3):
        tp = sum(1 for s in range(50) if probs[s, au] >= 0.5 and labels[s, au] == 1)
        fp = sum(1 for s in range(50) if probs[s, au] >= 0.5 and labels[s, au] == 0)
        fn = sum(1 for s in range(50) if probs[s, au] < 0.5 and labels[s, au] == 1)
        assert (metrics.tp[au], metrics.fp[au], metrics.fn[au]) == (tp, fp, fn)
        assert metrics.per_au_f1[au] == pytest.approx(2 * tp / (2 * tp + fp + fn))
    assert metrics.avg_f1 == pytest.approx(sum(metrics.per_au_f1) / 3)


def test_threshold_is_inclusive():
    tp, fp, fn = confusion_counts(torch.tensor([[0.5]]) >= 0.5, torch.tensor([[True]]))
    assert (int(tp[0]), int(fp[0]), int(fn[0])) == (1, 0, 0)


def test_subject_folds_balance_by_count():
    manifest = manifest_with_counts([10, 9, 8, 2, 2, 1])
    folds = subject_folds(manifest, k=3, seed=0)
    sizes = Counter()
    for subject, fold in folds.assignment.items():
        sizes[fold] += manifest.subjects.count(subject)
    assert sorted(sizes.values(), reverse=True) == [11, 11, 10]

    train_rows, test_rows = folds.split(manifest.subjects, 0)
    assert sorted(train_rows + test_rows) == list(range(32))
    test_subjects = {manifest.subjects[i] for i in test_rows}
    assert test_subjects == set(folds.subjects_in(0))
    assert not test_subjects & {manifest.subjects[i] for i in train_rows}


def test_subject_folds_errors():
    with pytest.raises(ConfigurationError):
        subject_folds(manifest_with_counts([3, 3]), k=3)
    with pytest.raises(ConfigurationError):
        subject_folds(manifest_with_counts([3, 3, 3]), k=3).split([0, 1, 2], 3)


def test_count_params_desk_config():
    model = AUFormerModel(ViTConfig(), MoKEConfig(), 4)
    counts = count_params(model)
    assert counts["learnable"] == 41608
    assert counts["frozen"] == 205248
    assert counts["ratio"] == pytest.approx(41608 / (41608 + 205248))

    heads_only = AUFormerModel(ViTConfig(), MoKEConfig(), 4, AblationConfig(petl=False))
    assert count_params(heads_only)["learnable"] == 260
    assert count_params(heads_only)["frozen"] == 205248


def test_flop_breakdown():
    model = AUFormerModel(ViTConfig(), MoKEConfig(), 4)
    breakdown = flop_breakdown(model)
    assert breakdown["adapters"] == 2 * 4 * 4 * 163280
    assert breakdown["backbone"] == backbone_flops(model.vit_config)
    assert breakdown["heads"] == 2 * 2 * 64 * 4
    assert breakdown["total"] == breakdown["backbone"] + breakdown["adapters"] + breakdown["heads"]
    assert estimate_flops(model, (3, 1, 32, 32)) == 3 * breakdown["total"]
    with pytest.raises(DimensionError):
        estimate_flops(model, (1, 3, 32, 32))


def test_collaboration_off_shrinks_adapter_cost():
    full = AUFormerModel(ViTConfig(), MoKEConfig(), 4)
    shared = AUFormerModel(ViTConfig(), MoKEConfig(), 4, AblationConfig(collab=False))
    assert flop_breakdown(shared)["adapters"] * 4 == flop_breakdown(full)["adapters"]


def test_zero_epochs_leaves_model_untouched(make_model, tiny_vit):
    model = make_model()
    before = {name: tensor.clone() for name, tensor in model.state_dict().items()}
    _, history = train(model, random_dataset(8, tiny_vit), TrainConfig(epochs=0))
    assert history == []
    assert all(torch.equal(before[name], tensor) for name, tensor in model.state_dict().items())


def test_training_updates_only_learnable_tensors(make_model, tiny_vit):
    model = make_model()
    frozen = {name: param.clone() for name, param in frozen_parameters(model)}
    learnable = {name: param.clone() for name, param in learnable_parameters(model)}
    _, history = train(model, random_dataset(8, tiny_vit), TrainConfig(epochs=2, batch_size=4))

    assert [record["epoch"] for record in history] == [1, 2]
    assert {"loss", "mdwa", "wdi", "aux_mdwa", "train_f1"} <= set(history[0])
    assert all(torch.equal(frozen[name], param) for name, param in frozen_parameters(model))
    changed = [name for name, param in learnable_parameters(model) if not torch.equal(learnable[name], param)]
    assert "main_head.weight" in changed
    assert any(".up." in name for name in changed)


def test_training_is_deterministic(make_model, tiny_vit):
    dataset = random_dataset(10, tiny_vit)
    cfg = TrainConfig(epochs=2, batch_size=4, seed=5)
    first, history_a = train(make_model(), dataset, cfg)
    second, history_b = train(make_model(), dataset, cfg)
    assert history_a == history_b
    for (name, a), (_, b) in zip(first.state_dict().items(), second.state_dict().items()):
        assert torch.equal(a, b), name


def test_fixed_batch_loss_decreases_over_first_steps(dataset_dir):
    dataset = load_dataset(str(dataset_dir))
    vit = ViTConfig(image_size=16, patch_size=4, depth=1, dim=16, heads=2, dtype="float64")
    images, labels = dataset.images[:12].double(), dataset.labels[:12].double()
    curves = []
    for seed in range(5):
        model = AUFormerModel(vit, MoKEConfig(d=2), dataset.num_aus, seed=seed)
        objective = AUFormerObjective(build_loss_config(model, dataset))
        optimizer = build_optimizer(model, TrainConfig(learning_rate=1e-3, seed=seed))
        losses = [float(train_step(model, objective, optimizer, images, labels).value) for _ in range(5)]
        with torch.no_grad():
            losses.append(float(objective(model(images), labels)[1].value))
        curves.append(losses)

    median = torch.tensor(curves, dtype=torch.float64).median(dim=0).values
    assert bool((median[1:] < median[:-1]).all()), curves


def test_training_stops_at_target_f1(make_model, tiny_vit):
    dataset = random_dataset(8, tiny_vit)
    cfg = TrainConfig(epochs=3, batch_size=4)
    _, full = train(make_model(), dataset, cfg)
    best = max(range(3), key=lambda i: full[i]["train_f1"])
    _, stopped = train(make_model(), dataset, cfg.model_copy(update={"target_f1": full[best]["train_f1"]}))
    assert stopped == full[:best + 1]


def test_non_finite_loss_raises(make_model, tiny_vit):
    dataset = random_dataset(4, tiny_vit)
    dataset.images[1] = float("nan")
    with pytest.raises(DivergenceError):
        train(make_model(), dataset, TrainConfig(epochs=1, batch_size=4))


def test_loss_config_follows_ablation(make_model, tiny_vit):
    dataset = random_dataset(8, tiny_vit)
    cfg = build_loss_config(make_model(ablation=AblationConfig(gamma=False, margin=False)), dataset)
    assert cfg.margin == 0.0
    assert torch.equal(cfg.gammas, torch.ones(3, dtype=torch.float64))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def test_checkpoint_round_trip(tmp_path):
    vit = ViTConfig(image_size=8, patch_size=2, depth=2, dim=8, heads=2)
    model = randomize_parameters(AUFormerModel(vit, MoKEConfig(d=2), 3, seed=4), seed=2, std=0.2)
    path = str(tmp_path / "model.aufw")
    save_checkpoint(model, path, {"config_hash": "abc"})

    restored, meta = load_checkpoint(path)
    assert meta["config_hash"] == "abc" and meta["num_aus"] == 3
    assert restored.ablation == model.ablation
    dataset = random_dataset(6, vit)
    assert torch.equal(predict(restored, dataset), predict(model, dataset))
    assert evaluate_f1(restored, dataset).to_dict() == evaluate_f1(model, dataset).to_dict()


def test_checkpoint_shape_mismatch(tmp_path):
    vit = ViTConfig(image_size=8, patch_size=2, depth=2, dim=8, heads=2)
    path = str(tmp_path / "model.aufw")
    save_checkpoint(AUFormerModel(vit, MoKEConfig(d=2), 3), path)
    with open(sidecar_path(path), "r", encoding="utf-8") as f:
        meta = json.load(f)
    meta["num_aus"] = 4
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump(meta, f)
    with pytest.raises(DimensionError):
        load_checkpoint(path)


def test_checkpoint_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(str(tmp_path / "absent.aufw"))


def test_predict_batches(make_model, tiny_vit):
    model = make_model(randomize=True)
    dataset = random_dataset(5, tiny_vit)
    assert torch.allclose(predict(model, dataset, batch_size=2), predict(model, dataset, batch_size=5),
                          rtol=0, atol=1e-12)
