"""
Training loop over the learnable parameters of an AUFormer model
"""

import logging
import math
from typing import Literal, Optional

import torch
from pydantic import BaseModel, ConfigDict, Field

from auformer.data.manifest import occurrence_rates
from auformer.errors import DivergenceError
from auformer.losses.config import LossConfig, LossSettings
from auformer.losses.objective import AUFormerObjective
from auformer.models.collaboration import learnable_parameters, model_forward
from auformer.ops.prng import SplitMix64, derive_seed
from auformer.services.metrics import evaluate_f1

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(default=100, ge=0)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    betas: tuple[float, float] = (0.9, 0.999)
    optimizer: Literal["adamw"] = "adamw"
    seed: int = 0
    # stop once the train F1 of an epoch reaches this value
    target_f1: Optional[float] = Field(default=None, gt=0, le=1)


def build_optimizer(model, cfg: TrainConfig):
    params = [param for _, param in learnable_parameters(model)]
    return torch.optim.AdamW(params, lr=cfg.learning_rate, betas=cfg.betas, weight_decay=cfg.weight_decay)


def build_loss_config(model, dataset, settings: LossSettings = None):
    """LossConfig from the dataset's occurrence rates and the model's gamma/margin switches."""
    settings = settings or LossSettings()
    rates = occurrence_rates(dataset.labels, settings.min_rate)
    return LossConfig.from_rates(rates, settings, use_gamma=model.ablation.gamma,
                                 use_margin=model.ablation.margin)


def train_step(model, objective, optimizer, images, labels):
    """
    One optimizer step on a batch

    Returns:
        LossOutput: Loss of the batch before the step

    Raises:
        DivergenceError: If the loss is not finite
    """
    output = model_forward(model, images)
    loss, result = objective(output, labels)
    if not torch.isfinite(loss):
        parts = {name: float(value) for name, value in result.components.items()}
        raise DivergenceError(f"Non-finite loss {float(loss)} (components {parts})")
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    return result


def train(model, dataset, cfg: TrainConfig, loss_settings: LossSettings = None):
    """
    Train the expert groups and heads; the backbone stays frozen

    Batches follow a per-epoch seeded permutation of the dataset, so the run is
    a pure function of (model, dataset, cfg). With cfg.target_f1 set the run
    ends after the first epoch whose train F1 reaches it.

    Args:
        model (AUFormerModel): Model, updated in place
        dataset (AUDataset): Training samples
        cfg (TrainConfig): Optimisation settings
        loss_settings (LossSettings): Margin, gamma boundaries and smooth term

    Returns:
        tuple: (model, history), one dict per epoch with the mean loss
        components and the train F1

    Raises:
        DivergenceError: If a batch produces a non-finite loss
    """
    loss_cfg = build_loss_config(model, dataset, loss_settings)
    objective = AUFormerObjective(loss_cfg)
    optimizer = build_optimizer(model, cfg)
    dtype = model.vit_config.torch_dtype
    history = []

    for epoch in range(cfg.epochs):
        order = SplitMix64(derive_seed(cfg.seed, f"epoch.{epoch}")).permutation(len(dataset))
        totals, seen = {}, 0
        for step, start in enumerate(range(0, len(dataset), cfg.batch_size)):
            index = torch.as_tensor(order[start:start + cfg.batch_size], dtype=torch.long)
            images, labels = dataset.images[index].to(dtype), dataset.labels[index].to(dtype)
            try:
                result = train_step(model, objective, optimizer, images, labels)
            except DivergenceError as e:
                raise DivergenceError(f"Epoch {epoch} step {step}: {str(e)}")

            count = len(index)
            seen += count
            totals["loss"] = totals.get("loss", 0.0) + float(result.value) * count
            for name, value in result.components.items():
                totals[name] = totals.get(name, 0.0) + float(value) * count
            logger.debug(f"epoch {epoch} step {step} loss {float(result.value):.6f}")

        record = {"epoch": epoch + 1}
        record.update({name: total / seen for name, total in totals.items()})
        record["train_f1"] = evaluate_f1(model, dataset).avg_f1
        history.append(record)
        logger.info(f"Epoch {epoch + 1}/{cfg.epochs}: loss={record['loss']:.4f} "
                    f"train_f1={record['train_f1']:.4f}")
        if not math.isfinite(record["loss"]):
            raise DivergenceError(f"Epoch {epoch + 1} mean loss is not finite")
        if cfg.target_f1 is not None and record["train_f1"] >= cfg.target_f1:
            logger.info(f"Train F1 target {cfg.target_f1} reached at epoch {epoch + 1}")
            break

    return model, history
