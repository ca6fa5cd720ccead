"""
Loss configuration: class weights, difficulty exponents, margin and smooth term
"""

import logging
from dataclasses import dataclass

import torch
from pydantic import BaseModel, ConfigDict, model_validator

from auformer.errors import ConfigurationError

logger = logging.getLogger(__name__)


class LossSettings(BaseModel):
    """
    Run-level loss settings; per-AU quantities are derived from occurrence rates
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    margin: float = 0.1
    gamma_left: float = 1.0
    gamma_right: float = 2.0
    smooth: float = 1.0
    min_rate: float = 1e-3
    clamp: float = 1e-7

    @model_validator(mode="after")
    def _check(self):
        if not 0.0 <= self.margin <= 1.0:
            raise ValueError(f"margin must lie in [0, 1], got {self.margin}")
        if self.gamma_left > self.gamma_right:
            raise ValueError(f"gamma_left {self.gamma_left} exceeds gamma_right {self.gamma_right}")
        return self


@dataclass(frozen=True)
class LossConfig:
    """
    Per-AU loss parameters

    Attributes:
        rates (torch.Tensor): Occurrence rates r_i
        weights (torch.Tensor): Class weights w_i (sum N)
        gammas (torch.Tensor): Difficulty exponents
        margin (float): Truncation margin m
        smooth (float): Dice smooth term
        clamp (float): Probability clamp for the logs
    """

    rates: torch.Tensor
    weights: torch.Tensor
    gammas: torch.Tensor
    margin: float = 0.1
    smooth: float = 1.0
    clamp: float = 1e-7

    @property
    def num_aus(self):
        return self.weights.shape[0]

    @classmethod
    def from_rates(cls, rates, settings: LossSettings = None, use_gamma=True, use_margin=True,
                   dtype=torch.float64):
        settings = settings or LossSettings()
        rates = torch.as_tensor(rates, dtype=dtype)
        clamped = rates.clamp(settings.min_rate, 1.0)
        if not torch.equal(clamped, rates):
            logger.warning(f"Occurrence rates clamped to [{settings.min_rate}, 1]")
        gammas = (gamma_schedule(clamped, settings.gamma_left, settings.gamma_right)
                  if use_gamma else torch.ones_like(clamped))
        return cls(
            rates=clamped,
            weights=class_weights(clamped),
            gammas=gammas,
            margin=settings.margin if use_margin else 0.0,
            smooth=settings.smooth,
            clamp=settings.clamp,
        )

    def to(self, dtype):
        return LossConfig(self.rates.to(dtype), self.weights.to(dtype), self.gammas.to(dtype),
                          self.margin, self.smooth, self.clamp)


def class_weights(rates):
    """
    Inverse-rate weights normalised to sum to N

    Args:
        rates (torch.Tensor): Occurrence rates in [r_min, 1]

    Returns:
        torch.Tensor: w_i = N (1/r_i) / sum_j (1/r_j)

    Raises:
        ConfigurationError: If no rates are given or a rate is not positive
    """
    rates = torch.as_tensor(rates, dtype=torch.float64) if not torch.is_tensor(rates) else rates
    if rates.numel() == 0:
        raise ConfigurationError("class_weights needs at least one occurrence rate")
    if bool((rates <= 0).any()):
        raise ConfigurationError("Occurrence rates must be positive after clamping")
    inverse = 1.0 / rates
    return rates.shape[0] * inverse / inverse.sum()


def gamma_schedule(rates, left, right):
    """
    Linear difficulty exponents: gamma_i = B_L + (B_R - B_L) * r_i

    Args:
        rates (torch.Tensor): Occurrence rates in [0, 1]
        left (float): Left boundary B_L
        right (float): Right boundary B_R

    Returns:
        torch.Tensor: Exponents in [B_L, B_R]

    Raises:
        ConfigurationError: If B_L > B_R
    """
    if left > right:
        raise ConfigurationError(f"gamma boundaries out of order: B_L={left} > B_R={right}")
    rates = torch.as_tensor(rates, dtype=torch.float64) if not torch.is_tensor(rates) else rates
    return left + (right - left) * rates
