"""
MDWA/WDI loss family with closed-form logit gradients
"""

from auformer.losses.config import LossConfig, LossSettings, class_weights, gamma_schedule
from auformer.losses.mdwa import LossOutput, mdwa_grad_analytic, mdwa_loss
from auformer.losses.objective import AUFormerObjective, total_loss
from auformer.losses.reference import gradient_curves, reference_losses
from auformer.losses.wdi import wdi_loss

__all__ = [
    'LossConfig', 'LossSettings', 'class_weights', 'gamma_schedule', 'LossOutput',
    'mdwa_grad_analytic', 'mdwa_loss', 'AUFormerObjective', 'total_loss', 'gradient_curves',
    'reference_losses', 'wdi_loss',
]
