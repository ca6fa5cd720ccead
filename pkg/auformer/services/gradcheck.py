"""
Finite-difference verification of the closed-form loss gradients and of the
end-to-end parameter gradients
"""

import logging

import numpy as np
import torch

from auformer.errors import ConfigurationError
from auformer.losses.config import LossConfig, LossSettings
from auformer.losses.mdwa import mdwa_loss
from auformer.losses.objective import AUFormerObjective, total_loss
from auformer.losses.wdi import wdi_loss
from auformer.models.backbone import ViTConfig
from auformer.models.collaboration import AUFormerModel, learnable_parameters, model_forward
from auformer.models.moke import MoKEConfig
from auformer.ops.prng import SplitMix64, derive_seed, seeded_init

logger = logging.getLogger(__name__)

LOSS_NAMES = ("mdwa", "wdi", "total")
KINK_EXCLUSION = 1e-3
DEFAULT_RATES = (0.3, 0.5, 0.2, 0.6)


def relative_error(analytic, numeric, floor=1e-8):
    """|a - n| / max(|a|, |n|, floor)."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _central_difference(f, z, h):
    return (f(z + h) - f(z - h)) / (2.0 * h)


def _draw_point(stream):
    u = stream.uniform(5)
    p = 0.01 + 0.98 * float(u[0])
    y = float(u[1] < 0.5)
    gamma = 1.0 + float(u[2])
    margin = 0.3 * float(u[3])
    weight = 0.5 + 1.5 * float(u[4])
    if y == 0.0 and abs(p - margin) < KINK_EXCLUSION:
        p = margin + 2 * KINK_EXCLUSION
    return {"p": p, "y": y, "gamma": gamma, "margin": margin, "weight": weight}


def _single_au_config(point):
    def one(value):
        return torch.tensor([value], dtype=torch.float64)

    return LossConfig(rates=one(0.5), weights=one(point["weight"]), gammas=one(point["gamma"]),
                      margin=point["margin"])


def _check_point(name, point, aux_p, h, negate):
    cfg = _single_au_config(point)
    y = torch.tensor([[point["y"]]], dtype=torch.float64)
    z0 = torch.logit(torch.tensor([[point["p"]]], dtype=torch.float64))
    aux = None if aux_p is None else torch.tensor([[aux_p]], dtype=torch.float64)

    def evaluate(z):
        p = torch.sigmoid(z)
        if name == "mdwa":
            return mdwa_loss(p, y, cfg)
        if name == "wdi":
            return wdi_loss(p, y, cfg)
        return total_loss(p, aux, y, cfg)

    def value(z):
        result = evaluate(z)
        if name != "total":
            return result.value
        # the aux term does not depend on Z
        return result.components["mdwa"] + result.components["wdi"]

    analytic = float(evaluate(z0).grad_wrt_logits[0, 0])
    numeric = float(_central_difference(value, z0, h))
    if negate:
        analytic = -analytic
    return analytic, numeric


def check_loss_gradients(losses=LOSS_NAMES, points=1000, seed=0, h=1e-6, negate=False):
    """
    Compare analytic dL/dZ with f64 central differences at random points

    Points draw p in [0.01, 0.99], y in {0, 1}, gamma in [1, 2], m in [0, 0.3]
    and w in [0.5, 2]; negatives within 1e-3 of the margin kink are moved off it.
    The relative error uses a 1e-8 denominator floor.

    Args:
        losses (tuple): Subset of 'mdwa', 'wdi', 'total'
        points (int): Points per loss
        seed (int): Point stream seed
        h (float): Finite-difference step in logit space
        negate (bool): Flip the analytic sign (negative control)

    Returns:
        list: One {loss, point, analytic, numeric, rel_err} dict per check

    Raises:
        ConfigurationError: If points < 1 or a loss name is unknown
    """
    if points < 1:
        raise ConfigurationError(f"points must be >= 1, got {points}")
    unknown = [name for name in losses if name not in LOSS_NAMES]
    if unknown:
        raise ConfigurationError(f"Unsupported losses for gradcheck: {unknown}")

    report = []
    for name in losses:
        stream = SplitMix64(derive_seed(seed, f"gradcheck.{name}"))
        for _ in range(points):
            point = _draw_point(stream)
            aux_p = 0.01 + 0.98 * float(stream.uniform(1)[0]) if name == "total" else None
            analytic, numeric = _check_point(name, point, aux_p, h, negate)
            if aux_p is not None:
                point = dict(point, aux_p=aux_p)
            report.append({"loss": name, "point": point, "analytic": analytic, "numeric": numeric,
                           "rel_err": relative_error(analytic, numeric)})
    return report


def randomize_parameters(model, seed=0, std=0.02):
    """Overwrite every learnable tensor (zero-initialised ones included) with seeded values."""
    with torch.no_grad():
        for name, param in learnable_parameters(model):
            param.copy_(seeded_init(param.shape, "trunc_normal", derive_seed(seed, name), std, param.dtype))
    return model


def check_model_gradients(model=None, num_params=20, seed=0, h=1e-5, batch_size=2, floor=1e-5,
                          negate=False):
    """
    Compare back-propagated parameter gradients of the total loss with central differences

    Defaults to the desk configuration in float64 with randomised learnable
    tensors, so gradients also flow through the expert internals.

    Args:
        model (AUFormerModel): float64 model; a desk model if omitted
        num_params (int): Scalar parameters to check
        seed (int): Seed for the model, the inputs and the choice of parameters
        h (float): Finite-difference step
        batch_size (int): Random images per check
        floor (float): Denominator floor of the relative error
        negate (bool): Flip the analytic sign (negative control)

    Returns:
        list: One {loss, point, analytic, numeric, rel_err} dict per parameter
    """
    if num_params < 1:
        raise ConfigurationError(f"num_params must be >= 1, got {num_params}")
    if model is None:
        vit = ViTConfig(dtype="float64", seed=seed)
        model = randomize_parameters(AUFormerModel(vit, MoKEConfig(), len(DEFAULT_RATES), seed=seed), seed)
    vit = model.vit_config

    stream = SplitMix64(derive_seed(seed, "model_gradcheck"))
    shape = (batch_size, vit.channels, vit.image_size, vit.image_size)
    images = torch.from_numpy(stream.normal(batch_size * vit.channels * vit.image_size ** 2)).reshape(shape)
    images = images.to(vit.torch_dtype)
    labels = torch.from_numpy((stream.uniform(batch_size * model.num_aus) < 0.5).astype("float64"))
    labels = labels.reshape(batch_size, model.num_aus).to(vit.torch_dtype)
    rates = torch.tensor(DEFAULT_RATES[:model.num_aus] if model.num_aus <= len(DEFAULT_RATES)
                         else [0.5] * model.num_aus, dtype=torch.float64)
    objective = AUFormerObjective(LossConfig.from_rates(rates, LossSettings(), model.ablation.gamma,
                                                        model.ablation.margin))

    named = learnable_parameters(model)
    model.zero_grad(set_to_none=True)
    loss, _ = objective(model_forward(model, images), labels)
    loss.backward()

    sizes = np.array([param.numel() for _, param in named], dtype=np.float64)
    cumulative = np.cumsum(sizes) / sizes.sum()
    picks = stream.uniform(2 * num_params)
    report = []
    for i in range(num_params):
        tensor_index = min(int(np.searchsorted(cumulative, picks[2 * i], side="right")), len(named) - 1)
        name, param = named[tensor_index]
        flat_index = int(picks[2 * i + 1] * param.numel())
        flat = param.data.view(-1)

        def value_at(offset):
            original = flat[flat_index].item()
            flat[flat_index] = original + offset
            with torch.no_grad():
                out = model_forward(model, images)
                value = float(objective(out, labels)[1].value)
            flat[flat_index] = original
            return value

        numeric = (value_at(h) - value_at(-h)) / (2.0 * h)
        analytic = 0.0 if param.grad is None else float(param.grad.view(-1)[flat_index])
        if negate:
            analytic = -analytic
        report.append({"loss": "model", "point": {"param": name, "index": flat_index},
                       "analytic": analytic, "numeric": numeric,
                       "rel_err": relative_error(analytic, numeric, floor)})
    return report


def summarize(report, tolerance):
    worst = max((row["rel_err"] for row in report), default=0.0)
    failures = sum(row["rel_err"] > tolerance for row in report)
    if failures:
        logger.warning(f"{failures}/{len(report)} gradient checks exceed rel_err {tolerance:g}")
    else:
        logger.info(f"{len(report)} gradient checks within rel_err {tolerance:g} (max {worst:.3g})")
    return {"checks": len(report), "failures": failures, "max_rel_err": worst}
