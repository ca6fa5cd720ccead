"""
Weighted multi-label dice loss
"""

import torch

from auformer.losses.config import LossConfig
from auformer.losses.mdwa import reduce_output


def dice_terms(p, y, weights, smooth):
    """
    Per-element w_i (1 - (2 y p + eps) / (y^2 + p^2 + eps))

    Evaluated as w_i (y - p)^2 / (y^2 + p^2 + eps), which is the same value
    without the cancellation near a correct prediction.
    """
    return weights * (y - p) ** 2 / (y * y + p * p + smooth)


def dice_grad(p, y, weights, smooth):
    """Per-element dl/dZ of dice_terms (chain through p (1 - p))."""
    numerator = 2.0 * y * p + smooth
    denominator = y * y + p * p + smooth
    d_ratio = (2.0 * y * denominator - numerator * 2.0 * p) / (denominator * denominator)
    return -weights * d_ratio * p * (1.0 - p)


def wdi_loss(p, y, cfg: LossConfig):
    """
    WDI loss, batch mean of (1/N) sum_i dice term

    Args:
        p (torch.Tensor): Probabilities [B, N] (or [N])
        y (torch.Tensor): Binary labels
        cfg (LossConfig): Loss configuration

    Returns:
        LossOutput: Value and dL/dZ
    """
    weights = cfg.weights.to(p.dtype)
    terms = dice_terms(p, y, weights, cfg.smooth)
    return reduce_output(terms, torch.atleast_2d(dice_grad(p, y, weights, cfg.smooth)))
