"""
Shared fixtures: tiny float64 configurations, models and generated datasets
"""

import json

import pytest
import torch

from auformer.data.datagen import SyntheticSpec, generate_dataset
from auformer.data.manifest import AUDataset
from auformer.models.backbone import ViTConfig
from auformer.models.collaboration import AblationConfig, AUFormerModel
from auformer.models.moke import MoKEConfig
from auformer.ops.prng import SplitMix64
from auformer.services.gradcheck import randomize_parameters


@pytest.fixture
def tiny_vit():
    return ViTConfig(image_size=8, patch_size=2, depth=2, dim=8, heads=2, dtype="float64")


@pytest.fixture
def tiny_moke():
    return MoKEConfig(d=2)


@pytest.fixture
def make_model(tiny_vit, tiny_moke):
    def build(num_aus=3, ablation=None, seed=0, randomize=False, vit=None):
        model = AUFormerModel(vit or tiny_vit, tiny_moke, num_aus, ablation or AblationConfig(), seed=seed)
        return randomize_parameters(model, seed + 1, std=0.2) if randomize else model
    return build


def random_images(count, vit, seed=0):
    shape = (count, vit.channels, vit.image_size, vit.image_size)
    values = SplitMix64(seed).normal(count * vit.channels * vit.image_size ** 2)
    return torch.from_numpy(values).reshape(shape).to(vit.torch_dtype)


def random_dataset(count, vit, num_aus=3, seed=0):
    stream = SplitMix64(seed + 100)
    labels = torch.from_numpy((stream.uniform(count * num_aus) < 0.4).astype("float32")).reshape(count, num_aus)
    labels[0] = 1.0
    return AUDataset(images=random_images(count, vit, seed).float(), labels=labels,
                     subjects=torch.arange(count) % 4, ids=torch.arange(count))


SMALL_SPEC = {
    "num_aus": 4,
    "image_size": 16,
    "scales": [1.0, 1.5, 2.0, 3.0],
    "base_rates": [0.3, 0.4, 0.5, 0.35],
    "num_subjects": 6,
    "num_samples": 36,
    "seed": 7,
}

SMALL_RUN = {
    "vit": {"image_size": 16, "patch_size": 4, "depth": 1, "dim": 16, "heads": 2},
    "moke": {"d": 2},
    "train": {"epochs": 2, "batch_size": 12},
}


@pytest.fixture
def spec_path(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(SMALL_SPEC))
    return path


@pytest.fixture
def run_config_path(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(SMALL_RUN))
    return path


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthetic")
    generate_dataset(SyntheticSpec(**SMALL_SPEC), str(out))
    return out


def seeded_randn(*shape, seed=0, dtype=torch.float64):
    return torch.randn(*shape, generator=torch.Generator().manual_seed(seed), dtype=dtype)
