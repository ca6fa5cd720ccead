"""
Dataset manifest, occurrence rates and in-memory datasets
"""

import json
import logging
import os
from dataclasses import dataclass, field

import torch

from auformer.data.sample_format import read_sample
from auformer.errors import ConfigurationError, FormatError

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.jsonl"
STATS_FILE = "stats.json"
MIN_RATE = 1e-3


@dataclass(frozen=True)
class ManifestRow:
    id: int
    subject_id: int
    labels: tuple
    file: str

    def to_dict(self):
        return {"id": self.id, "subject_id": self.subject_id, "labels": list(self.labels), "file": self.file}


@dataclass
class Manifest:
    """
    Rows sorted by id plus the dataset-level statistics

    Attributes:
        rows (list): ManifestRow per sample
        root (str): Dataset directory the row files are relative to
        rates (list): Empirical label means over all rows
    """

    rows: list
    root: str = "."
    rates: list = field(default_factory=list)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda row: row.id)
        if not self.rates and self.rows:
            self.rates = label_means([row.labels for row in self.rows]).tolist()

    @property
    def num_aus(self):
        return len(self.rows[0].labels) if self.rows else 0

    @property
    def subjects(self):
        return [row.subject_id for row in self.rows]

    def path_of(self, row):
        return os.path.join(self.root, row.file)

    def save(self, extra_stats=None):
        """Write manifest.jsonl and stats.json into root."""
        with open(os.path.join(self.root, MANIFEST_FILE), "w", encoding="utf-8") as f:
            for row in self.rows:
                f.write(json.dumps(row.to_dict(), sort_keys=True) + "\n")
        stats = {"num_samples": len(self.rows), "num_aus": self.num_aus, "occurrence_rates": self.rates}
        stats.update(extra_stats or {})
        with open(os.path.join(self.root, STATS_FILE), "w", encoding="utf-8") as f:
            json.dump(stats, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, data_dir):
        """
        Read manifest.jsonl from a dataset directory

        Raises:
            FileNotFoundError: If the directory holds no manifest
            FormatError: On malformed rows
        """
        path = os.path.join(data_dir, MANIFEST_FILE)
        rows = []
        with open(path, "r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                    rows.append(ManifestRow(int(doc["id"]), int(doc["subject_id"]),
                                            tuple(int(v) for v in doc["labels"]), str(doc["file"])))
                except (ValueError, KeyError, TypeError) as e:
                    raise FormatError(f"{path}:{line_no}: malformed manifest row: {str(e)}")
        return cls(rows=rows, root=data_dir)


def label_means(labels):
    labels = torch.as_tensor(labels, dtype=torch.float64)
    if labels.dim() != 2 or labels.shape[0] == 0:
        raise ConfigurationError("Occurrence rates need at least one labelled row")
    return labels.mean(dim=0)


def occurrence_rates(source, min_rate=MIN_RATE):
    """
    Per-AU occurrence rates clamped to [min_rate, 1]

    Args:
        source (Manifest | AUDataset | torch.Tensor): Training rows
        min_rate (float): Lower clamp

    Returns:
        torch.Tensor: float64 rates [N]

    Raises:
        ConfigurationError: If there are no rows
    """
    if isinstance(source, Manifest):
        labels = [row.labels for row in source.rows]
    elif isinstance(source, AUDataset):
        labels = source.labels
    else:
        labels = source
    return label_means(labels).clamp(min_rate, 1.0)


@dataclass
class AUDataset:
    """
    Stacked samples of a dataset split

    Attributes:
        images (torch.Tensor): [S, C, H, W] float32
        labels (torch.Tensor): [S, N] float32 in {0, 1}
        subjects (torch.Tensor): [S] int64
        ids (torch.Tensor): [S] int64
    """

    images: torch.Tensor
    labels: torch.Tensor
    subjects: torch.Tensor
    ids: torch.Tensor

    def __len__(self):
        return self.images.shape[0]

    @property
    def num_aus(self):
        return self.labels.shape[1]

    def subset(self, indices):
        index = torch.as_tensor(indices, dtype=torch.long)
        return AUDataset(self.images[index], self.labels[index], self.subjects[index], self.ids[index])

    def to(self, dtype):
        return AUDataset(self.images.to(dtype), self.labels.to(dtype), self.subjects, self.ids)


def load_dataset(data_dir):
    """
    Read every sample listed in the manifest

    Args:
        data_dir (str): Dataset directory

    Returns:
        AUDataset: Samples in manifest order

    Raises:
        FormatError: If a sample file disagrees with its manifest row
    """
    manifest = Manifest.load(data_dir)
    if not manifest.rows:
        raise ConfigurationError(f"Dataset at {data_dir} has no samples")

    images, labels = [], []
    for row in manifest.rows:
        record = read_sample(manifest.path_of(row))
        if (record.id, record.subject_id, record.labels) != (row.id, row.subject_id, row.labels):
            raise FormatError(f"Sample file {row.file} does not match its manifest row")
        images.append(record.image)
        labels.append(record.labels)

    logger.info(f"Loaded {len(images)} samples from {data_dir}")
    return AUDataset(
        images=torch.stack(images),
        labels=torch.tensor(labels, dtype=torch.float32),
        subjects=torch.tensor(manifest.subjects, dtype=torch.long),
        ids=torch.tensor([row.id for row in manifest.rows], dtype=torch.long),
    )
