"""
Reference losses the MDWA loss reduces to, and gradient-curve sampling
"""

import torch

from auformer.losses.mdwa import asymmetric_grad, asymmetric_terms, reduce_output

def _clamp_mask(p, clamp):
    return p.clamp(clamp, 1.0 - clamp), ((p >= clamp) & (p <= 1.0 - clamp)).to(p.dtype)


DEFAULT_CURVE_GAMMAS = (1.0, 1.5, 2.0)


def wce_terms(p, y, weights, clamp=1e-7):
    pc, _ = _clamp_mask(p, clamp)
    return -weights * (y * torch.log(pc) + (1.0 - y) * torch.log1p(-pc))


def wce_grad(p, y, weights, clamp=1e-7):
    pc, inside = _clamp_mask(p, clamp)
    return weights * (pc - y) * inside


def reference_losses(p, y, weights, wa_gamma=1.0, margin=0.1, clamp=1e-7):
    """
    Weighted cross-entropy and the two degenerate asymmetric losses

    WA is the asymmetric loss with no margin and a constant focusing exponent;
    MWA keeps the margin and fixes every exponent to 1.

    Args:
        p (torch.Tensor): Probabilities [B, N]
        y (torch.Tensor): Binary labels [B, N]
        weights (torch.Tensor): Per-AU weights [N]
        wa_gamma (float): Focusing exponent of WA
        margin (float): Margin of MWA
        clamp (float): Probability clamp

    Returns:
        dict: 'wce', 'wa', 'mwa' -> LossOutput
    """
    weights = torch.as_tensor(weights, dtype=p.dtype)
    constant = torch.full_like(weights, float(wa_gamma))
    ones = torch.ones_like(weights)
    return {
        "wce": reduce_output(wce_terms(p, y, weights, clamp), torch.atleast_2d(wce_grad(p, y, weights, clamp))),
        "wa": reduce_output(asymmetric_terms(p, y, weights, constant, 0.0, clamp),
                            torch.atleast_2d(asymmetric_grad(p, y, weights, constant, 0.0, clamp))),
        "mwa": reduce_output(asymmetric_terms(p, y, weights, ones, margin, clamp),
                             torch.atleast_2d(asymmetric_grad(p, y, weights, ones, margin, clamp))),
    }


def gradient_curves(p_grid=None, gammas=DEFAULT_CURVE_GAMMAS, margin=0.1, wa_gamma=1.0):
    """
    Negative-branch (y = 0, w = 1) Z-gradients sampled on a probability grid

    Args:
        p_grid (torch.Tensor): Increasing probabilities; defaults to 0.01..0.99
        gammas (tuple): Exponents for the MDWA columns
        margin (float): Margin of MWA and MDWA
        wa_gamma (float): Focusing exponent of WA

    Returns:
        dict: Column name -> float64 tensor; 'p' first, then 'wce', 'wa', 'mwa'
        and one 'mdwa_gamma_<g>' column per exponent
    """
    if p_grid is None:
        p_grid = torch.linspace(0.01, 0.99, 99, dtype=torch.float64)
    p = torch.as_tensor(p_grid, dtype=torch.float64)
    y = torch.zeros_like(p)
    ones = torch.ones_like(p)

    columns = {
        "p": p,
        "wce": wce_grad(p, y, ones),
        "wa": asymmetric_grad(p, y, ones, ones * wa_gamma, 0.0),
        "mwa": asymmetric_grad(p, y, ones, ones, margin),
    }
    for gamma in gammas:
        columns[f"mdwa_gamma_{gamma:g}"] = asymmetric_grad(p, y, ones, ones * gamma, margin)
    return columns
