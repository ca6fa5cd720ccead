"""
Margin-truncated difficulty-aware weighted asymmetric loss and its closed-form
gradient with respect to the logits Z
"""

from dataclasses import dataclass, field
from typing import Optional

import torch

from auformer.losses.config import LossConfig


@dataclass
class LossOutput:
    """
    Reduced loss value and its gradient with respect to the logits

    Attributes:
        value (torch.Tensor): Scalar loss
        grad_wrt_logits (torch.Tensor): dL/dZ, shaped like the logits
        grad_wrt_aux_logits (torch.Tensor): dL/dZ' for the aux heads, if any
        components (dict): Named scalar parts of a composite loss
    """

    value: torch.Tensor
    grad_wrt_logits: torch.Tensor
    grad_wrt_aux_logits: Optional[torch.Tensor] = None
    components: dict = field(default_factory=dict)


def asymmetric_terms(p, y, weights, gammas, margin, clamp=1e-7):
    """
    Per-element weighted asymmetric loss with truncation margin and focusing

    Args:
        p (torch.Tensor): Probabilities [..., N]
        y (torch.Tensor): Binary labels [..., N]
        weights (torch.Tensor): Per-AU weights [N]
        gammas (torch.Tensor): Per-AU focusing exponents [N]
        margin (float): Truncation margin m
        clamp (float): Probability clamp

    Returns:
        torch.Tensor: Unreduced loss [..., N]
    """
    pc = p.clamp(clamp, 1.0 - clamp)
    pm = (pc - margin).clamp(min=0.0)
    positive = -torch.log(pc)
    negative = -(pm ** gammas) * torch.log1p(-pm)
    return weights * (y * positive + (1.0 - y) * negative)


def asymmetric_grad(p, y, weights, gammas, margin, clamp=1e-7):
    """
    Closed-form per-element dl/dZ of asymmetric_terms

    Negatives: 0 for p < m, otherwise
        p_m^g * (1 / (1 - p_m) - g * log(1 - p_m) / p_m) * p (1 - p)
    Positives: w (p - 1). The kink p = m takes the p >= m branch.

    The clamp only keeps the logs finite: positives use the unclamped p and
    negatives the formula at the clamped p, so saturated mistakes still carry
    a gradient.

    Returns:
        torch.Tensor: Unreduced gradient [..., N]
    """
    pc = p.clamp(clamp, 1.0 - clamp)
    pm = (pc - margin).clamp(min=0.0)
    safe_pm = torch.where(pm > 0, pm, torch.ones_like(pm))
    log_ratio = torch.where(pm > 0, torch.log1p(-pm) / safe_pm, -torch.ones_like(pm))
    slope = pc * (1.0 - pc)
    negative = torch.where(
        pc >= margin,
        pm ** gammas * (1.0 / (1.0 - pm) - gammas * log_ratio) * slope,
        torch.zeros_like(pc),
    )
    positive = p - 1.0
    return weights * (y * positive + (1.0 - y) * negative)


def reduce_output(terms, grad):
    """Batch mean of the per-sample AU mean, with the matching gradient scale."""
    terms = torch.atleast_2d(terms)
    scale = terms.shape[0] * terms.shape[1]
    return LossOutput(value=terms.mean(dim=-1).mean(), grad_wrt_logits=grad / scale)


def mdwa_grad_analytic(p, y, cfg: LossConfig):
    """
    Unreduced closed-form dl/dZ of the MDWA loss

    Args:
        p (torch.Tensor): Probabilities [..., N]
        y (torch.Tensor): Binary labels [..., N]
        cfg (LossConfig): Loss configuration

    Returns:
        torch.Tensor: Per-element gradient [..., N]
    """
    return asymmetric_grad(p, y, cfg.weights.to(p.dtype), cfg.gammas.to(p.dtype), cfg.margin, cfg.clamp)


def mdwa_loss(p, y, cfg: LossConfig):
    """
    MDWA loss: batch mean of -(1/N) sum_i w_i [y log p + (1-y) p_m^g log(1-p_m)]

    Args:
        p (torch.Tensor): Probabilities [B, N] (or [N])
        y (torch.Tensor): Binary labels, same shape
        cfg (LossConfig): Loss configuration

    Returns:
        LossOutput: Value and dL/dZ
    """
    weights, gammas = cfg.weights.to(p.dtype), cfg.gammas.to(p.dtype)
    terms = asymmetric_terms(p, y, weights, gammas, cfg.margin, cfg.clamp)
    grad = asymmetric_grad(p, y, weights, gammas, cfg.margin, cfg.clamp)
    return reduce_output(terms, torch.atleast_2d(grad))
