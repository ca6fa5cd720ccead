"""
Overall objective: MDWA + WDI on the main head plus MDWA on the aux heads
"""

import torch
from torch import nn

from auformer.losses.config import LossConfig
from auformer.losses.mdwa import LossOutput, mdwa_loss
from auformer.losses.wdi import wdi_loss


def total_loss(p, aux_p, y, cfg: LossConfig):
    """
    L = L_MDWA(p) + L_WDI(p) + L'_MDWA(aux_p)

    Args:
        p (torch.Tensor): Main-head probabilities [B, N]
        aux_p (torch.Tensor): Aux-head probabilities [B, N], or None when the
            model has no expert groups
        y (torch.Tensor): Binary labels [B, N]
        cfg (LossConfig): Shared loss configuration

    Returns:
        LossOutput: Total value, dL/dZ, dL/dZ' and the named components
    """
    main = mdwa_loss(p, y, cfg)
    dice = wdi_loss(p, y, cfg)
    value = main.value + dice.value
    components = {"mdwa": main.value, "wdi": dice.value}
    aux_grad = None
    if aux_p is not None:
        aux = mdwa_loss(aux_p, y, cfg)
        value = value + aux.value
        components["aux_mdwa"] = aux.value
        aux_grad = aux.grad_wrt_logits
    return LossOutput(value=value, grad_wrt_logits=main.grad_wrt_logits + dice.grad_wrt_logits,
                      grad_wrt_aux_logits=aux_grad, components=components)


class _ClosedForm(torch.autograd.Function):
    """Returns a precomputed value and back-propagates a precomputed dL/dZ."""

    @staticmethod
    def forward(ctx, logits, value, grad):
        ctx.save_for_backward(grad)
        return value.clone()

    @staticmethod
    def backward(ctx, grad_output):
        (grad,) = ctx.saved_tensors
        return grad_output * grad, None, None


def closed_form(logits, value, grad):
    return _ClosedForm.apply(logits, value.detach(), grad.detach().reshape(logits.shape))


class AUFormerObjective(nn.Module):
    """
    Training objective whose backward pass is the closed-form logit gradient
    """

    def __init__(self, cfg: LossConfig):
        super().__init__()
        self.cfg = cfg

    def forward(self, output, targets):
        """
        Args:
            output (ModelOutput): Model predictions
            targets (torch.Tensor): Binary labels [B, N]

        Returns:
            tuple: (scalar loss attached to the logits, LossOutput)
        """
        dtype = output.logits.dtype
        cfg = self.cfg.to(dtype)
        targets = targets.to(dtype)
        aux_probs = output.aux_probs.detach() if output.aux_probs is not None else None
        with torch.no_grad():
            result = total_loss(output.probs.detach(), aux_probs, targets, cfg)

        loss = closed_form(output.logits, result.value, result.grad_wrt_logits)
        if output.aux_logits is not None:
            loss = loss + closed_form(output.aux_logits, torch.zeros_like(result.value),
                                      result.grad_wrt_aux_logits)
        return loss, result
