from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
from loguru import logger
from PIL import Image

from core.dataio.datasets import ObservationDataset
from core.envs.base import ObservationKind, seed_rng
from core.envs.reacher import FEATURE_NAMES
from core.errors import TraversalError
from .model import VaeModel
from .trainer import heldout_hsic

GRID_PAD = 2


def holdout_accuracy(model: VaeModel, dataset: ObservationDataset, indices: Sequence[int]) -> float:
    """Share of `indices` where the head's argmax equals the withheld oracle label."""
    indices = np.asarray(indices)
    predicted = np.asarray(model.predict_class(dataset.get(indices))).reshape(-1)
    return float(np.mean(predicted == dataset.oracle_labels[indices]))


def _other_classes(model: VaeModel, predicted: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    offsets = rng.integers(1, model.n_classes, size=len(predicted))
    return (predicted - 1 + offsets) % model.n_classes + 1


def cycle_consistency(model: VaeModel, observations: np.ndarray, seed: int = 0) -> float:
    """Share of x with class(imagine(imagine(x, [b]), [a])) == a for a random b != a."""
    rng = seed_rng(seed)
    predicted = np.asarray(model.predict_class(observations)).reshape(-1)
    swapped = _other_classes(model, predicted, rng)
    back = np.empty_like(observations)
    for i, (a, b) in enumerate(zip(predicted, swapped)):
        back[i] = model.imagine(model.imagine(observations[i], [int(b)]), [int(a)])
    return float(np.mean(np.asarray(model.predict_class(back)).reshape(-1) == predicted))


def z_stability(model: VaeModel, observations: np.ndarray, seed: int = 0) -> float:
    """Median of |z(imagine(x, [b])) - z(x)| over the median between-sample z distance."""
    rng = seed_rng(seed)
    z, _ = model.encode(observations)
    predicted = np.asarray(model.predict_class(observations)).reshape(-1)
    swapped = _other_classes(model, predicted, rng)
    imagined = np.stack([model.imagine(x, [int(b)]) for x, b in zip(observations, swapped)])
    z_imagined, _ = model.encode(imagined)
    shift = (z_imagined - z).norm(dim=-1)
    between = torch.pdist(z)
    scale = float(between.median()) if between.numel() else 1.0
    return float(shift.median()) / max(scale, 1e-12)


def traverse(model: VaeModel, row_observations: np.ndarray, col_observations: np.ndarray) -> np.ndarray:
    """Grid of shape (rows, cols, H, W, 3): z from row i, class of column j."""
    if model.obs_kind != ObservationKind.PIXEL:
        raise TraversalError("traversal grids need a pixel model, use traverse_table for feature models")
    rows, _ = model.encode(np.asarray(row_observations))
    col_classes = np.asarray(model.predict_class(np.asarray(col_observations))).reshape(-1)
    codes = model.one_hot(col_classes.tolist())
    grid = np.empty((len(rows), len(codes), *model.obs_shape), dtype=np.float32)
    for i, z in enumerate(rows):
        grid[i] = model.decode(z.expand(len(codes), -1), codes).numpy()
    return grid


def column_agreement(model: VaeModel, grid: np.ndarray, col_observations: np.ndarray) -> float:
    """Share of grid cells the head assigns to their column's class."""
    col_classes = np.asarray(model.predict_class(np.asarray(col_observations))).reshape(-1)
    cells = grid.reshape(-1, *model.obs_shape)
    predicted = np.asarray(model.predict_class(cells)).reshape(grid.shape[0], grid.shape[1])
    return float(np.mean(predicted == col_classes[None, :]))


def traverse_table(model: VaeModel, row_observations: np.ndarray, col_observations: np.ndarray) -> pd.DataFrame:
    """Numeric counterpart of `traverse` for feature models, one row per grid cell."""
    rows, _ = model.encode(np.asarray(row_observations))
    col_classes = np.asarray(model.predict_class(np.asarray(col_observations))).reshape(-1)
    codes = model.one_hot(col_classes.tolist())
    names = list(FEATURE_NAMES) if model.obs_shape == (len(FEATURE_NAMES),) else [f"f{i}" for i in range(model.obs_shape[0])]
    records = []
    for i, z in enumerate(rows):
        decoded = model.decode(z.expand(len(codes), -1), codes).numpy()
        predicted = np.asarray(model.predict_class(decoded)).reshape(-1)
        for j, values in enumerate(decoded):
            records.append({"row": i, "col": j, "col_class": int(col_classes[j]), "pred_class": int(predicted[j]),
                            **dict(zip(names, values.astype(float)))})
    return pd.DataFrame.from_records(records)


def save_grid_png(grid: np.ndarray, path: Union[str, Path], scale: int = 2) -> Path:
    """Tile a (rows, cols, H, W, 3) grid into one PNG with grey separators."""
    n_rows, n_cols, height, width, _ = grid.shape
    canvas = np.full(
        (n_rows * (height + GRID_PAD) + GRID_PAD, n_cols * (width + GRID_PAD) + GRID_PAD, 3), 96, dtype=np.uint8
    )
    for i in range(n_rows):
        for j in range(n_cols):
            top, left = GRID_PAD + i * (height + GRID_PAD), GRID_PAD + j * (width + GRID_PAD)
            canvas[top:top + height, left:left + width] = np.rint(np.clip(grid[i, j], 0.0, 1.0) * 255).astype(np.uint8)
    image = Image.fromarray(canvas)
    if scale > 1:
        image = image.resize((image.width * scale, image.height * scale), Image.NEAREST)
    path = Path(path)
    image.save(path)
    return path


def pick_references(model: VaeModel, dataset: ObservationDataset, indices: Sequence[int], per_class: int = 1) -> np.ndarray:
    """Indices holding `per_class` examples of each oracle class, in class order."""
    chosen = []
    indices = np.asarray(indices)
    for label in range(1, model.n_classes + 1):
        matches = indices[dataset.oracle_labels[indices] == label][:per_class]
        chosen.extend(matches.tolist())
    return np.asarray(chosen, dtype=np.int64)


def diagnose(
    model: VaeModel, dataset: ObservationDataset, max_samples: int = 256, seed: int = 0, hsic_init: Optional[float] = None
) -> Dict[str, float]:
    """Held-out accuracy, cycle consistency, z stability, HSIC before/after and grid agreement."""
    meta = model.training_meta
    holdout = np.asarray(meta.get("validation_indices") or np.arange(len(dataset)))[:max_samples]
    hsic_idx = np.asarray(meta.get("hsic_indices") or holdout)
    observations = dataset.get(holdout)
    report = {
        "holdout_accuracy": holdout_accuracy(model, dataset, holdout),
        "cycle_consistency": cycle_consistency(model, observations, seed),
        "z_stability": z_stability(model, observations, seed),
        "hsic_init": float(hsic_init if hsic_init is not None else meta.get("hsic_init", float("nan"))),
        "hsic_trained": heldout_hsic(model, dataset, hsic_idx),
    }
    references = pick_references(model, dataset, holdout)
    if model.obs_kind == ObservationKind.PIXEL and len(references) >= 2:
        ref_obs = dataset.get(references)
        report["column_agreement"] = column_agreement(model, traverse(model, ref_obs, ref_obs), ref_obs)
    else:
        report["column_agreement"] = float("nan")
    logger.info("vae diagnostics: " + ", ".join(f"{k} {v:.4f}" for k, v in report.items()))
    return report
