"""
Counter-based SplitMix64 generator and seeded tensor initialisation

The generator is defined by this module, not by the platform RNG, so the same
(seed, shape, scheme) gives the same bits on every machine.
"""

import hashlib
import math

import numpy as np
import torch

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB

# Standard normal CDF at -2 and +2, bounds of the 2-sigma truncation
_PHI_LO = 0.5 * math.erfc(2.0 / math.sqrt(2.0))
_PHI_HI = 1.0 - _PHI_LO


def _mix(z):
    """SplitMix64 finaliser over a uint64 array (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX_1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX_2)
        return z ^ (z >> np.uint64(31))


def derive_seed(seed, key):
    """
    Derive an independent 64-bit seed for a named stream

    Args:
        seed (int): Base seed
        key (str | int): Stream name (tensor name, sample id, ...)

    Returns:
        int: Derived 64-bit seed
    """
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    salt = int.from_bytes(digest[:8], "little")
    state = np.array([(int(seed) ^ salt) & MASK64], dtype=np.uint64)
    return int(_mix(state)[0])


class SplitMix64:
    """
    Stateful SplitMix64 stream; draws are generated in vectorised blocks
    """

    def __init__(self, seed):
        self.seed = int(seed) & MASK64
        self.counter = 0

    def next_uint64(self, n):
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + idx * np.uint64(GOLDEN_GAMMA)
        return _mix(state)

    def uniform(self, n):
        """Uniform float64 draws in [0, 1) with 53-bit resolution."""
        bits = self.next_uint64(n) >> np.uint64(11)
        return bits.astype(np.float64) * (1.0 / (1 << 53))

    def normal(self, n):
        """Standard normal float64 draws (Box-Muller)."""
        half = (n + 1) // 2
        u1 = 1.0 - self.uniform(half)  # (0, 1]
        u2 = self.uniform(half)
        radius = np.sqrt(-2.0 * np.log(u1))
        out = np.concatenate([radius * np.cos(2.0 * np.pi * u2), radius * np.sin(2.0 * np.pi * u2)])
        return out[:n]

    def permutation(self, n):
        """Deterministic permutation of range(n)."""
        return np.argsort(self.uniform(n), kind="stable")


def seeded_init(shape, scheme="trunc_normal", seed=0, std=0.02, dtype=torch.float32):
    """
    Build a deterministic tensor

    Args:
        shape (tuple): Tensor shape
        scheme (str): 'trunc_normal' (2-sigma truncation) or 'zeros'
        seed (int): 64-bit seed
        std (float): Standard deviation for 'trunc_normal'
        dtype (torch.dtype): Output dtype

    Returns:
        torch.Tensor: Initialised tensor
    """
    shape = tuple(int(s) for s in shape)
    if scheme == "zeros":
        return torch.zeros(shape, dtype=dtype)
    if scheme != "trunc_normal":
        raise ValueError(f"Unsupported init scheme: {scheme}")

    count = math.prod(shape)
    u = SplitMix64(seed).uniform(count)
    u = _PHI_LO + u * (_PHI_HI - _PHI_LO)
    # inverse normal CDF restricted to [-2, 2]
    z = math.sqrt(2.0) * torch.erfinv(torch.from_numpy(2.0 * u - 1.0))
    values = (z * std).to(dtype).clamp(-2.0 * std, 2.0 * std)
    return values.reshape(shape)
