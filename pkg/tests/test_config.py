import itertools
import json

import pytest
import torch

from auformer.errors import ConfigurationError
from auformer.losses.config import LossConfig
from auformer.losses.objective import AUFormerObjective
from auformer.models.collaboration import AblationConfig
from auformer.utils.config_hash import canonical_json, config_hash
from auformer.utils.run_config import DataConfig, RunConfig, apply_ablation, load_run_config, parse_run_config

from tests.conftest import random_images

SWITCHES = ("petl", "collab", "mrf", "ca", "gamma", "margin")


def test_defaults():
    config = load_run_config()
    assert config.moke.d == 4
    assert config.moke.dilations == (1, 3, 5)
    assert config.moke.neighborhood == 3
    assert (config.loss.gamma_left, config.loss.gamma_right) == (1.0, 2.0)
    assert (config.loss.smooth, config.loss.margin) == (1.0, 0.1)
    assert config.data == DataConfig()
    assert len(config.digest) == 64


def test_unknown_keys_are_rejected(tmp_path):
    with pytest.raises(ConfigurationError):
        parse_run_config({"moke": {"d": 4, "width": 3}})
    with pytest.raises(ConfigurationError):
        parse_run_config({"optimiser": {}})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_run_config(str(bad))


def test_load_from_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"train": {"epochs": 3}, "data": {"folds": 4, "test_fold": 2}}))
    config = load_run_config(str(path))
    assert config.train.epochs == 3
    assert (config.data.folds, config.data.test_fold) == (4, 2)
    with pytest.raises(ConfigurationError):
        parse_run_config({"data": {"folds": 2, "test_fold": 2}})


def test_canonical_hash_ignores_key_order():
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'
    assert config_hash({"b": 1, "a": 2}) == config_hash({"a": 2, "b": 1})
    assert config_hash(RunConfig()) == RunConfig().digest


def test_ablation_overrides():
    config = apply_ablation(RunConfig(), ["collab=off", "MRF=Off", "adapter=lora"])
    assert config.ablation == AblationConfig(collab=False, mrf=False, adapter="lora")
    assert apply_ablation(config, []) is config
    for bad in (["collab"], ["collab=maybe"], ["dropout=on"], ["adapter=vpt"]):
        with pytest.raises(ConfigurationError):
            apply_ablation(RunConfig(), bad)


def test_every_switch_combination_has_a_distinct_hash():
    digests = set()
    for values in itertools.product(("on", "off"), repeat=len(SWITCHES)):
        overrides = [f"{key}={value}" for key, value in zip(SWITCHES, values)]
        digests.add(apply_ablation(RunConfig(), overrides).digest)
    assert len(digests) == 2 ** len(SWITCHES)


@pytest.mark.parametrize("values", list(itertools.product((True, False), repeat=4)))
def test_every_model_switch_combination_runs(make_model, tiny_vit, values):
    ablation = AblationConfig(**dict(zip(("petl", "collab", "mrf", "ca"), values)))
    model = make_model(ablation=ablation, randomize=True)
    labels = torch.tensor([[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]], dtype=torch.float64)
    for use_gamma, use_margin in itertools.product((True, False), repeat=2):
        cfg = LossConfig.from_rates([0.3, 0.2, 0.6], use_gamma=use_gamma, use_margin=use_margin)
        loss, _ = AUFormerObjective(cfg)(model(random_images(2, tiny_vit)), labels)
        model.zero_grad(set_to_none=True)
        loss.backward()
        assert torch.isfinite(loss)
