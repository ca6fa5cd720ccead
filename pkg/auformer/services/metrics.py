"""
Multi-label F1 evaluation
"""

from dataclasses import dataclass

import torch

from auformer.models.collaboration import model_forward


@dataclass
class Metrics:
    per_au_f1: list
    avg_f1: float
    tp: list
    fp: list
    fn: list

    def to_dict(self):
        return {"per_au_f1": self.per_au_f1, "avg_f1": self.avg_f1, "tp": self.tp, "fp": self.fp, "fn": self.fn}


def confusion_counts(predictions, labels):
    """Per-AU (TP, FP, FN) of binary predictions [S, N] against labels [S, N]."""
    predictions, labels = predictions.bool(), labels.bool()
    tp = (predictions & labels).sum(dim=0)
    fp = (predictions & ~labels).sum(dim=0)
    fn = (~predictions & labels).sum(dim=0)
    return tp, fp, fn


def f1_from_counts(tp, fp, fn):
    """2TP / (2TP + FP + FN) per AU; 0 where the denominator is 0."""
    tp, fp, fn = (torch.as_tensor(c, dtype=torch.float64) for c in (tp, fp, fn))
    denominator = 2 * tp + fp + fn
    return torch.where(denominator > 0, 2 * tp / denominator.clamp(min=1), torch.zeros_like(tp))


def metrics_from_predictions(probs, labels, threshold=0.5):
    """
    F1 metrics of thresholded probabilities

    Args:
        probs (torch.Tensor): [S, N] probabilities
        labels (torch.Tensor): [S, N] binary labels
        threshold (float): p >= threshold predicts occurrence

    Returns:
        Metrics: Per-AU and average F1 with the confusion counts
    """
    tp, fp, fn = confusion_counts(probs >= threshold, labels > 0.5)
    per_au = f1_from_counts(tp, fp, fn)
    return Metrics(per_au_f1=per_au.tolist(), avg_f1=float(per_au.mean()),
                   tp=tp.tolist(), fp=fp.tolist(), fn=fn.tolist())


@torch.no_grad()
def predict(model, dataset, batch_size=64):
    dtype = model.vit_config.torch_dtype
    outputs = [model_forward(model, dataset.images[start:start + batch_size].to(dtype)).probs
               for start in range(0, len(dataset), batch_size)]
    return torch.cat(outputs, dim=0)


def evaluate_f1(model, dataset, threshold=0.5, batch_size=64):
    """
    Evaluate a model on a dataset

    Args:
        model (AUFormerModel): Model
        dataset (AUDataset): Samples with binary labels
        threshold (float): Decision threshold
        batch_size (int): Forward batch size

    Returns:
        Metrics: F1 metrics
    """
    return metrics_from_predictions(predict(model, dataset, batch_size), dataset.labels, threshold)
