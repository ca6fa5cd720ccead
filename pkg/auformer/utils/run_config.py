"""
Run configuration document and ablation overrides
"""

import json

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from auformer.errors import ConfigurationError
from auformer.losses.config import LossSettings
from auformer.models.backbone import ViTConfig
from auformer.models.collaboration import AblationConfig
from auformer.models.moke import MoKEConfig
from auformer.services.trainer import TrainConfig
from auformer.utils.config_hash import config_hash

_SWITCHES = {"on": True, "off": False}


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    folds: int = Field(default=3, ge=1)
    test_fold: int = Field(default=0, ge=0)
    fold_seed: int = 0

    @model_validator(mode="after")
    def _check_fold(self):
        if self.test_fold >= self.folds:
            raise ValueError(f"test_fold {self.test_fold} out of range for {self.folds} folds")
        return self


class RunConfig(BaseModel):
    """
    Every section defaults to the desk-scale settings
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    vit: ViTConfig = ViTConfig()
    moke: MoKEConfig = MoKEConfig()
    loss: LossSettings = LossSettings()
    train: TrainConfig = TrainConfig()
    data: DataConfig = DataConfig()
    ablation: AblationConfig = AblationConfig()

    @property
    def digest(self):
        return config_hash(self)


def parse_run_config(document):
    """
    Validate a configuration document

    Args:
        document (dict): Parsed JSON

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigurationError: On unknown keys or invalid values
    """
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid run configuration: {str(e)}")


def load_run_config(path=None):
    if path is None:
        return RunConfig()
    with open(path, "r", encoding="utf-8") as f:
        try:
            document = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path} is not valid JSON: {str(e)}")
    return parse_run_config(document)


def apply_ablation(config: RunConfig, overrides):
    """
    Patch the ablation section from 'key=on|off' and 'adapter=<kind>' overrides

    Args:
        config (RunConfig): Base configuration
        overrides (list): Override strings

    Returns:
        RunConfig: Configuration with the patched ablation section

    Raises:
        ConfigurationError: On malformed overrides or unknown keys
    """
    if not overrides:
        return config
    patch = {}
    for override in overrides:
        key, sep, value = override.partition("=")
        key, value = key.strip().lower(), value.strip().lower()
        if not sep or key not in AblationConfig.model_fields:
            raise ConfigurationError(f"Unsupported ablation override: {override}")
        if key == "adapter":
            patch[key] = value
        elif value in _SWITCHES:
            patch[key] = _SWITCHES[value]
        else:
            raise ConfigurationError(f"Ablation switch {key} takes on|off, got {value}")

    document = config.model_dump(mode="json")
    document["ablation"].update(patch)
    return parse_run_config(document)
