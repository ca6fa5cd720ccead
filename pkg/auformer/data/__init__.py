"""
Synthetic data generation, sample files and manifests
"""

from auformer.data.datagen import SyntheticSpec, generate_dataset, label_distribution
from auformer.data.manifest import AUDataset, Manifest, ManifestRow, load_dataset, occurrence_rates
from auformer.data.sample_format import SampleRecord, read_sample, write_sample

__all__ = [
    'SyntheticSpec', 'generate_dataset', 'label_distribution', 'AUDataset', 'Manifest',
    'ManifestRow', 'load_dataset', 'occurrence_rates', 'SampleRecord', 'read_sample', 'write_sample',
]
