"""
Training and evaluation commands
"""

import csv
import json
import logging
import os

import click

from auformer.commands.common import ablation_option, emit, handle_errors
from auformer.data.manifest import Manifest, load_dataset
from auformer.errors import ConfigurationError
from auformer.models.collaboration import AUFormerModel
from auformer.services.accounting import count_params, flop_breakdown
from auformer.services.checkpoint import load_checkpoint, save_checkpoint
from auformer.services.folds import subject_folds
from auformer.services.metrics import evaluate_f1
from auformer.services.trainer import train
from auformer.utils.run_config import DataConfig, apply_ablation, load_run_config

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "model.aufw"
METRICS_FILE = "metrics.json"
HISTORY_FILE = "history.csv"


def split_dataset(data_dir, data_config):
    """Load a dataset and split it into (train, test) by subject-exclusive folds."""
    manifest = Manifest.load(data_dir)
    dataset = load_dataset(data_dir)
    folds = subject_folds(manifest, data_config.folds, data_config.fold_seed)
    train_idx, test_idx = folds.split(manifest.subjects, data_config.test_fold)
    if not train_idx:
        raise ConfigurationError("Training split is empty")
    return dataset.subset(train_idx), dataset.subset(test_idx) if test_idx else None, dataset


def write_history(history, path):
    columns = sorted({key for record in history for key in record} - {"epoch"})
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch"] + columns)
        for record in history:
            writer.writerow([record["epoch"]] + [repr(record.get(c, "")) for c in columns])


@click.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="RunConfig JSON; defaults apply when omitted.")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@ablation_option
@handle_errors
def train_command(config_path, data_dir, out_dir, ablation):
    """Train AUFormer and write the checkpoint, metrics and history."""
    config = apply_ablation(load_run_config(config_path), ablation)
    digest = config.digest
    train_set, test_set, _ = split_dataset(data_dir, config.data)

    model = AUFormerModel(config.vit, config.moke, train_set.num_aus, config.ablation, seed=config.train.seed)
    logger.info(f"Training config {digest[:12]} on {len(train_set)} samples")
    model, history = train(model, train_set, config.train, config.loss)

    os.makedirs(out_dir, exist_ok=True)
    checkpoint = os.path.join(out_dir, CHECKPOINT_FILE)
    save_checkpoint(model, checkpoint, {"config_hash": digest, "loss": config.loss.model_dump(mode="json"),
                                        "data": config.data.model_dump(mode="json")})
    write_history(history, os.path.join(out_dir, HISTORY_FILE))

    train_metrics = evaluate_f1(model, train_set)
    test_metrics = evaluate_f1(model, test_set) if test_set is not None else train_metrics
    params = count_params(model)
    document = {
        "status": "success",
        "config_hash": digest,
        "per_au_f1": test_metrics.per_au_f1,
        "avg_f1": test_metrics.avg_f1,
        "train_avg_f1": train_metrics.avg_f1,
        "loss_history": [record["loss"] for record in history],
        "learnable_params": params["learnable"],
        "frozen_params": params["frozen"],
        "flops": flop_breakdown(model)["total"],
    }
    with open(os.path.join(out_dir, METRICS_FILE), "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")
    emit(document)


@click.command("eval")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--threshold", default=0.5, show_default=True, type=click.FloatRange(0.0, 1.0))
@click.option("--split", "split", default="test", show_default=True,
              type=click.Choice(["train", "test", "all"]))
@handle_errors
def eval_command(checkpoint_path, data_dir, threshold, split):
    """Evaluate a checkpoint on a dataset split."""
    if not os.path.exists(checkpoint_path):
        raise FileNotFoundError(f"Checkpoint not found: {checkpoint_path}")
    model, meta = load_checkpoint(checkpoint_path)
    train_set, test_set, full = split_dataset(data_dir, DataConfig(**meta.get("data", {})))
    dataset = {"train": train_set, "test": test_set or train_set, "all": full}[split]

    metrics = evaluate_f1(model, dataset, threshold=threshold)
    document = {"status": "success", "config_hash": meta.get("config_hash"), "split": split,
                "threshold": threshold, "num_samples": len(dataset)}
    document.update(metrics.to_dict())
    emit(document)
