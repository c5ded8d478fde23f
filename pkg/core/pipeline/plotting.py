"""Static figures rendered from the CSV outputs."""

from pathlib import Path
from typing import Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from core.sac.training import EMA_FACTOR, smooth

PathLike = Union[str, Path]


def mean_smoothed(frames: Sequence[pd.DataFrame], x: str, y: str, factor: float = EMA_FACTOR) -> pd.DataFrame:
    """EMA-smooth `y` per frame, then average across frames on the shared `x` grid."""
    smoothed = [pd.Series(smooth(f[y].to_numpy(), factor), index=f[x].to_numpy(), name=i) for i, f in enumerate(frames)]
    table = pd.concat(smoothed, axis=1).sort_index()
    return pd.DataFrame({x: table.index, "mean": table.mean(axis=1).to_numpy(), "std": table.std(axis=1, ddof=0).to_numpy()})


def plot_learning_curves(
    curves: Mapping[str, Mapping[str, Sequence[pd.DataFrame]]],
    path: PathLike,
    x: str = "step",
    y: str = "success_rate",
) -> Path:
    """One panel per group (environment), one line per label (task), mean over seeds with a std band."""
    path = Path(path)
    groups = list(curves)
    fig, axes = plt.subplots(1, max(len(groups), 1), figsize=(5 * max(len(groups), 1), 3.6), squeeze=False)
    for ax, group in zip(axes[0], groups):
        for label, frames in curves[group].items():
            if not frames:
                continue
            summary = mean_smoothed(frames, x, y)
            line, = ax.plot(summary[x], summary["mean"], label=label)
            if len(frames) > 1:
                ax.fill_between(summary[x], summary["mean"] - summary["std"], summary["mean"] + summary["std"],
                                color=line.get_color(), alpha=0.2)
        ax.set_title(group)
        ax.set_xlabel(x.replace("_", " "))
        ax.set_ylabel(y.replace("_", " "))
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_loss_curve(curve: pd.DataFrame, path: PathLike, columns: Sequence[str] = ("total", "val_total"), title: str = "") -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for column in columns:
        if column in curve and len(curve):
            values = curve[column].to_numpy(dtype=np.float64)
            ax.plot(curve["epoch"], values, alpha=0.3)
            ax.plot(curve["epoch"], smooth(values), label=column)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
