from .diagnostics import (
    column_agreement,
    cycle_consistency,
    diagnose,
    holdout_accuracy,
    pick_references,
    save_grid_png,
    traverse,
    traverse_table,
    z_stability,
)
from .model import VaeModel, encode, imagine
from .trainer import VaeTrainConfig, labelled_breakdown, heldout_hsic, train_vae, unlabelled_breakdown, validation_loss

__all__ = [
    'column_agreement', 'cycle_consistency', 'diagnose', 'holdout_accuracy', 'pick_references', 'save_grid_png',
    'traverse', 'traverse_table', 'z_stability', 'VaeModel', 'encode', 'imagine',
    'VaeTrainConfig', 'labelled_breakdown', 'heldout_hsic', 'train_vae', 'unlabelled_breakdown', 'validation_loss',
]
