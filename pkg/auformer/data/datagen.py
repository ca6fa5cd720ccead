"""
Synthetic multi-label images with planted multi-scale, correlated pseudo-AUs
"""

import itertools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, model_validator

from auformer.data.manifest import Manifest, ManifestRow
from auformer.data.sample_format import SampleRecord, write_sample
from auformer.ops.prng import SplitMix64, derive_seed
from auformer.utils.config_hash import config_hash
from auformer.utils.settings import THREADS

logger = logging.getLogger(__name__)

MAX_ENUMERATED_AUS = 12
SAMPLES_DIR = "samples"


class SyntheticSpec(BaseModel):
    """
    Generator settings; list fields hold one entry per pseudo-AU

    scales are blob radii in px (small to large), couplings are symmetric
    pairwise logit couplings with a zero diagonal. Each subject shifts every
    blob by up to jitter px and the background by up to intensity.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    num_aus: int = 4
    image_size: int = 32
    channels: int = 1
    scales: tuple[float, ...] = (1.5, 2.5, 3.5, 5.0)
    base_rates: tuple[float, ...] = (0.3, 0.4, 0.5, 0.35)
    couplings: Optional[tuple[tuple[float, ...], ...]] = None
    centers: Optional[tuple[tuple[float, float], ...]] = None
    amplitude: float = 1.0
    noise: float = 0.05
    jitter: float = 1.5
    intensity: float = 0.1
    num_subjects: int = 8
    num_samples: int = 320
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        n = self.num_aus
        if not 1 <= n <= MAX_ENUMERATED_AUS:
            raise ValueError(f"num_aus must lie in [1, {MAX_ENUMERATED_AUS}], got {n}")
        for name in ("scales", "base_rates"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} needs {n} entries, got {len(getattr(self, name))}")
        if any(not 0.0 < r < 1.0 for r in self.base_rates):
            raise ValueError(f"base_rates must lie in (0, 1), got {self.base_rates}")
        if any(s <= 0 for s in self.scales):
            raise ValueError("scales must be positive")
        if self.couplings is not None:
            matrix = np.asarray(self.couplings, dtype=np.float64)
            if matrix.shape != (n, n):
                raise ValueError(f"couplings must be {n}x{n}, got {matrix.shape}")
            if not np.array_equal(matrix, matrix.T) or np.any(np.diag(matrix) != 0):
                raise ValueError("couplings must be symmetric with a zero diagonal")
        if self.centers is not None and len(self.centers) != n:
            raise ValueError(f"centers needs {n} entries, got {len(self.centers)}")
        if min(self.num_subjects, self.num_samples, self.image_size, self.channels) < 1:
            raise ValueError("num_subjects, num_samples, image_size and channels must be positive")
        return self

    def coupling_matrix(self):
        if self.couplings is None:
            return np.zeros((self.num_aus, self.num_aus))
        return np.asarray(self.couplings, dtype=np.float64)

    def blob_centers(self):
        if self.centers is not None:
            return [tuple(c) for c in self.centers]
        middle, radius = (self.image_size - 1) / 2.0, self.image_size / 4.0
        return [(middle + radius * math.cos(2 * math.pi * i / self.num_aus),
                 middle + radius * math.sin(2 * math.pi * i / self.num_aus))
                for i in range(self.num_aus)]


def label_distribution(spec: SyntheticSpec):
    """
    Exact probability table of the pairwise label model

    P(s) is proportional to exp(sum_i h_i s_i + sum_{i<j} J_ij s_i s_j) with
    h_i = logit(base_rate_i), so zero couplings give independent labels with
    the base rates as marginals.

    Returns:
        tuple: (states [2^N, N] uint8, probabilities [2^N] float64)
    """
    rates = np.asarray(spec.base_rates, dtype=np.float64)
    field_h = np.log(rates) - np.log1p(-rates)
    couplings = spec.coupling_matrix()
    states = np.array(list(itertools.product((0, 1), repeat=spec.num_aus)), dtype=np.uint8)
    s = states.astype(np.float64)
    energy = s @ field_h + 0.5 * np.einsum("ki,ij,kj->k", s, couplings, s)
    weights = np.exp(energy - energy.max())
    return states, weights / weights.sum()


def sample_labels(spec: SyntheticSpec, uniforms, table=None):
    """Inverse-CDF draws from the exact table, one per uniform."""
    states, probs = table or label_distribution(spec)
    cdf = np.cumsum(probs)
    index = np.searchsorted(cdf, np.asarray(uniforms) * cdf[-1], side="right")
    return states[np.minimum(index, len(states) - 1)]


def render_blob(size, center, radius, amplitude=1.0):
    """Isotropic Gaussian blob [size, size] centred at (x, y)."""
    coords = np.arange(size, dtype=np.float64)
    dy = (coords[:, None] - center[1]) ** 2
    dx = (coords[None, :] - center[0]) ** 2
    return amplitude * np.exp(-(dx + dy) / (2.0 * radius ** 2))


def subject_appearance(spec: SyntheticSpec, subject_id):
    """Per-subject (dx, dy, intensity shift), uniform within the configured bounds."""
    u = SplitMix64(derive_seed(spec.seed, f"subject.{subject_id}")).uniform(3)
    dx, dy = (2.0 * u[:2] - 1.0) * spec.jitter
    return float(dx), float(dy), float((2.0 * u[2] - 1.0) * spec.intensity)


def generate_sample(spec: SyntheticSpec, sample_id, table=None):
    """
    Build one sample from its own derived stream

    Args:
        spec (SyntheticSpec): Generator settings
        sample_id (int): Sample id; the subject is sample_id % num_subjects
        table (tuple): Precomputed label_distribution(spec)

    Returns:
        SampleRecord: The sample
    """
    stream = SplitMix64(derive_seed(spec.seed, f"sample.{sample_id}"))
    labels = sample_labels(spec, stream.uniform(1), table)[0]
    subject_id = sample_id % spec.num_subjects
    dx, dy, shift = subject_appearance(spec, subject_id)

    size = spec.image_size
    image = np.full((size, size), shift, dtype=np.float64)
    for i, (cx, cy) in enumerate(spec.blob_centers()):
        if labels[i]:
            image += render_blob(size, (cx + dx, cy + dy), spec.scales[i], spec.amplitude)
    image = np.broadcast_to(image, (spec.channels, size, size))
    image = image + spec.noise * stream.normal(image.size).reshape(image.shape)
    return SampleRecord(id=sample_id, subject_id=subject_id,
                        image=torch.from_numpy(image.astype(np.float32)), labels=tuple(labels.tolist()))


def generate_dataset(spec: SyntheticSpec, out_dir):
    """
    Generate, write and index a synthetic dataset

    Args:
        spec (SyntheticSpec): Generator settings
        out_dir (str): Destination directory (created if missing)

    Returns:
        Manifest: Rows sorted by id with the empirical occurrence rates
    """
    os.makedirs(os.path.join(out_dir, SAMPLES_DIR), exist_ok=True)
    table = label_distribution(spec)

    def build(sample_id):
        record = generate_sample(spec, sample_id, table)
        relative = os.path.join(SAMPLES_DIR, f"{sample_id:06d}.autd")
        write_sample(record, os.path.join(out_dir, relative))
        return ManifestRow(record.id, record.subject_id, record.labels, relative)

    with ThreadPoolExecutor(max_workers=THREADS) as pool:
        rows = list(pool.map(build, range(spec.num_samples)))

    manifest = Manifest(rows=rows, root=out_dir)
    manifest.save({"spec": spec.model_dump(mode="json"), "config_hash": config_hash(spec)})
    logger.info(f"Generated {len(rows)} samples ({spec.num_aus} AUs, {spec.num_subjects} subjects) "
                f"in {out_dir}; rates={[round(r, 3) for r in manifest.rates]}")
    return manifest
