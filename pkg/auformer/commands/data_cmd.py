"""
Dataset generation command
"""

import json
import os

import click
from pydantic import ValidationError

from auformer.commands.common import emit, handle_errors
from auformer.data.datagen import SyntheticSpec, generate_dataset
from auformer.data.manifest import MANIFEST_FILE
from auformer.errors import ConfigurationError
from auformer.utils.config_hash import config_hash


def load_spec(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            return SyntheticSpec.model_validate(json.load(f))
        except (json.JSONDecodeError, ValidationError) as e:
            raise ConfigurationError(f"Invalid dataset spec {path}: {str(e)}")


@click.command("gen-data")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON document with SyntheticSpec fields.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Destination directory.")
@handle_errors
def gen_data(spec_path, out_dir):
    """Generate a synthetic pseudo-AU dataset."""
    spec = load_spec(spec_path)
    manifest = generate_dataset(spec, out_dir)
    emit({
        "status": "success",
        "config_hash": config_hash(spec),
        "manifest": os.path.join(out_dir, MANIFEST_FILE),
        "num_samples": len(manifest.rows),
        "occurrence_rates": manifest.rates,
    })
