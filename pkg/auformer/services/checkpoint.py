"""
Model checkpoints: AUFW tensor container plus a JSON sidecar
"""

import json
import logging

from auformer.errors import DimensionError, FormatError
from auformer.models.backbone import ViTConfig
from auformer.models.collaboration import AblationConfig, AUFormerModel
from auformer.models.moke import MoKEConfig
from auformer.utils.weights_io import load_tensors, save_tensors

logger = logging.getLogger(__name__)


def sidecar_path(path):
    return f"{path}.json"


def save_checkpoint(model, path, extra=None):
    """
    Write the full model state and its construction settings

    Args:
        model (AUFormerModel): Model to save
        path (str): Container path; the sidecar goes to <path>.json
        extra (dict): Additional JSON fields (loss settings, config hash, ...)
    """
    save_tensors(model.state_dict(), path)
    meta = {
        "vit": model.vit_config.model_dump(mode="json"),
        "moke": model.moke_config.model_dump(mode="json"),
        "num_aus": model.num_aus,
        "ablation": model.ablation.model_dump(mode="json"),
        "seed": model.seed,
    }
    meta.update(extra or {})
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Saved checkpoint to {path}")


def load_checkpoint(path):
    """
    Rebuild a model from a checkpoint

    Args:
        path (str): Container path

    Returns:
        tuple: (AUFormerModel, sidecar dict)

    Raises:
        FileNotFoundError: If the container or its sidecar is missing
        FormatError: On a malformed container or sidecar
        DimensionError: If stored tensors disagree with the recorded settings
    """
    with open(sidecar_path(path), "r", encoding="utf-8") as f:
        try:
            meta = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"Malformed checkpoint sidecar: {str(e)}")

    try:
        model = AUFormerModel(ViTConfig(**meta["vit"]), MoKEConfig(**meta["moke"]), int(meta["num_aus"]),
                              AblationConfig(**meta["ablation"]), seed=int(meta.get("seed", 0)))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"Checkpoint sidecar does not describe a model: {str(e)}")

    tensors = load_tensors(path)
    expected = model.state_dict()
    if set(tensors) != set(expected):
        raise DimensionError(f"Checkpoint tensors do not match the recorded model "
                             f"(missing={sorted(set(expected) - set(tensors))}, "
                             f"extra={sorted(set(tensors) - set(expected))})")
    for name, tensor in tensors.items():
        if tuple(tensor.shape) != tuple(expected[name].shape):
            raise DimensionError(f"Checkpoint tensor {name} has shape {tuple(tensor.shape)}, "
                                 f"model expects {tuple(expected[name].shape)}")
    dtype = model.vit_config.torch_dtype
    model.load_state_dict({name: tensor.to(dtype) for name, tensor in tensors.items()})
    return model, meta
