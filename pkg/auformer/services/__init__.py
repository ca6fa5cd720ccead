"""
Training, evaluation, accounting and verification services
"""

from auformer.services.accounting import count_params, estimate_flops, flop_breakdown
from auformer.services.checkpoint import load_checkpoint, save_checkpoint
from auformer.services.folds import FoldSpec, subject_folds
from auformer.services.gradcheck import check_loss_gradients, check_model_gradients, relative_error
from auformer.services.metrics import Metrics, evaluate_f1, f1_from_counts
from auformer.services.trainer import TrainConfig, train

__all__ = [
    'count_params', 'estimate_flops', 'flop_breakdown', 'load_checkpoint', 'save_checkpoint',
    'FoldSpec', 'subject_folds', 'check_loss_gradients', 'check_model_gradients', 'relative_error',
    'Metrics', 'evaluate_f1', 'f1_from_counts', 'TrainConfig', 'train',
]
