import copy
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from core.dataio.datasets import LabeledSample, ObservationDataset
from core.envs.base import seed_rng
from core.envs.tasks import CLASS_NAMES
from core.errors import DivergenceError, NonFiniteError, ShapeMismatchError
from core.losses import (
    ElboBreakdown,
    ElboWeights,
    annealed_temperature,
    categorical_kl,
    elbo_labelled,
    elbo_unlabelled,
    gaussian_kl,
    gumbel_softmax_sample,
    hsic,
    reconstruction_log_likelihood,
    supervision_term,
)
from core.nets import NetSettings, latent_spec_for
from .model import VaeModel

CURVE_COLUMNS = (
    "epoch", "total", "reconstruction", "supervision", "kl_z", "kl_c", "hsic", "val_total", "temperature",
)
HSIC_BATCH_SIZE = 256


class VaeTrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=5e-4, gt=0.0)
    batch_size: int = Field(default=100, ge=4)
    weights: ElboWeights = Field(default_factory=ElboWeights)
    grad_clip: float = Field(default=1.0, gt=0.0)
    epochs: int = Field(default=200, ge=1)
    steps_per_epoch: Optional[int] = Field(default=None, ge=1, description="defaults to one pass over the unlabelled pool")
    temperature_start: float = Field(default=1.0, gt=0.0)
    temperature_end: float = Field(default=0.5, gt=0.0)
    validation_fraction: float = Field(default=0.1, gt=0.0, lt=1.0)
    early_stop_patience: Optional[int] = Field(default=20, ge=1)
    min_delta: float = Field(default=1e-3, ge=0.0)
    label_budget: int = Field(default=600, ge=1)
    log_every: int = Field(default=10, ge=1, description="epochs between progress log lines")


def _reparameterise(mu: torch.Tensor, log_var: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
    return mu + torch.exp(0.5 * log_var) * eps


def labelled_breakdown(model: VaeModel, x: torch.Tensor, labels: torch.Tensor, weights: ElboWeights, generator: torch.Generator):
    """Labelled ELBO; the decoder sees the true one-hot class."""
    mu, log_var = model.encoder_z(x)
    z = _reparameterise(mu, log_var, generator)
    probs = F.softmax(model.encoder_c(x), dim=-1)
    recon = model.decoder(z, F.one_hot(labels - 1, model.n_classes).float())
    breakdown = elbo_labelled(
        reconstruction_log_likelihood(recon, x, model.obs_kind),
        supervision_term(probs, labels),
        gaussian_kl(mu, log_var),
        categorical_kl(probs),
        weights,
    )
    return breakdown, z, probs


def unlabelled_breakdown(model: VaeModel, x: torch.Tensor, weights: ElboWeights, temperature: float, generator: torch.Generator):
    """Unlabelled ELBO; the decoder sees a relaxed categorical sample."""
    mu, log_var = model.encoder_z(x)
    z = _reparameterise(mu, log_var, generator)
    logits = model.encoder_c(x)
    probs = F.softmax(logits, dim=-1)
    c = gumbel_softmax_sample(logits, temperature, generator)
    recon = model.decoder(z, c)
    breakdown = elbo_unlabelled(
        reconstruction_log_likelihood(recon, x, model.obs_kind),
        gaussian_kl(mu, log_var),
        categorical_kl(probs),
        weights,
    )
    return breakdown, z, probs


def validation_loss(model: VaeModel, dataset: ObservationDataset, indices: np.ndarray, weights: ElboWeights, chunk: int = 256) -> float:
    """Unlabelled ELBO with posterior-mean z and soft class code, averaged over `indices`."""
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(indices), chunk):
            part = indices[start:start + chunk]
            x = torch.from_numpy(dataset.get(part))
            mu, log_var = model.encoder_z(x)
            probs = F.softmax(model.encoder_c(x), dim=-1)
            breakdown = elbo_unlabelled(
                reconstruction_log_likelihood(model.decoder(mu, probs), x, model.obs_kind),
                gaussian_kl(mu, log_var), categorical_kl(probs), weights,
            )
            total += float(breakdown.total) * len(part)
            count += len(part)
    return total / max(count, 1)


def heldout_hsic(model: VaeModel, dataset: ObservationDataset, indices: np.ndarray) -> float:
    """HSIC between posterior-mean z and class probabilities on a fixed batch."""
    z, probs = model.encode(dataset.get(indices))
    return float(hsic(z.double(), probs.double()))


def _split(dataset: ObservationDataset, labelled: np.ndarray, fraction: float, rng: np.random.Generator):
    candidates = np.setdiff1d(np.arange(len(dataset)), labelled)
    n_val = max(2, int(round(fraction * len(candidates))))
    if n_val >= len(candidates):
        raise ShapeMismatchError(f"dataset of {len(dataset)} observations is too small for a validation split")
    permuted = rng.permutation(candidates)
    return np.sort(permuted[n_val:]), np.sort(permuted[:n_val])


def _epoch_means(records: List[Dict[str, float]]) -> Dict[str, float]:
    return {key: float(np.mean([r[key] for r in records])) for key in records[0]}


def train_vae(
    dataset: ObservationDataset,
    labeled_samples: Sequence[LabeledSample],
    config: VaeTrainConfig,
    seed: int = 0,
    net_settings: Optional[NetSettings] = None,
    show_progress: bool = False,
) -> VaeModel:
    """Semi-supervised training over batches that are half labelled, half unlabelled.

    Minimises -ELBO_labelled - ELBO_unlabelled + w_hsic * HSIC(z, c). The
    weights with the lowest validation loss are returned.
    """
    if not labeled_samples:
        raise ShapeMismatchError("train_vae needs at least one labelled sample")
    labelled_idx = np.array([s.index for s in labeled_samples], dtype=np.int64)
    labels = np.array([s.label for s in labeled_samples], dtype=np.int64)
    if labelled_idx.min() < 0 or labelled_idx.max() >= len(dataset):
        raise ShapeMismatchError(f"labelled indices must lie in [0, {len(dataset)})")

    net_settings = net_settings or NetSettings()
    rng = seed_rng(seed)
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    env_id = dataset.source_meta.env_id
    n_classes = len(CLASS_NAMES[env_id])
    if labels.min() < 1 or labels.max() > n_classes:
        raise ShapeMismatchError(f"labels must lie in 1..{n_classes}")
    model = VaeModel.build(env_id, dataset.obs_kind, dataset.obs_shape, latent_spec_for(env_id, n_classes, net_settings), net_settings)

    train_idx, val_idx = _split(dataset, labelled_idx, config.validation_fraction, rng)
    hsic_idx = val_idx[:HSIC_BATCH_SIZE]
    hsic_init = heldout_hsic(model, dataset, hsic_idx)

    half = config.batch_size // 2
    steps_per_epoch = config.steps_per_epoch or max(1, math.ceil(len(train_idx) / half))
    total_steps = config.epochs * steps_per_epoch
    weights = config.weights
    optimizer = torch.optim.Adam(list(model.parameters()), lr=config.lr)

    rows: List[Dict[str, float]] = []
    best_val, best_state, best_epoch, stale = math.inf, copy.deepcopy(model.networks()), 0, 0
    step = 0
    for epoch in tqdm(range(1, config.epochs + 1), desc=f"train-vae {env_id}", disable=not show_progress):
        model.train()
        order = rng.permutation(train_idx)
        records = []
        for batch_no in range(steps_per_epoch):
            start = batch_no * half
            unl_idx = np.take(order, np.arange(start, start + half), mode="wrap")
            pick = rng.choice(len(labelled_idx), size=half, replace=len(labelled_idx) < half)
            lab_idx = labelled_idx[pick]
            temperature = annealed_temperature(step, total_steps, config.temperature_start, config.temperature_end)

            x_l = torch.from_numpy(dataset.get(lab_idx))
            x_u = torch.from_numpy(dataset.get(unl_idx))
            try:
                lab, z_l, p_l = labelled_breakdown(model, x_l, torch.from_numpy(labels[pick]), weights, generator)
                unl, z_u, p_u = unlabelled_breakdown(model, x_u, weights, temperature, generator)
            except NonFiniteError as e:
                batch = np.concatenate([lab_idx, unl_idx]).tolist()
                logger.error(f"train-vae: non-finite loss at step {step}, batch indices {batch}")
                raise DivergenceError(f"VAE loss became non-finite: {e.message}", step=step, batch_indices=batch)
            hsic_value = torch.zeros(())
            if weights.hsic > 0:
                hsic_value = hsic(torch.cat([z_l, z_u]), torch.cat([p_l, p_u]))
            unl = unl.with_hsic(hsic_value, weights.hsic)
            loss = lab.total + unl.total
            if not bool(torch.isfinite(loss)):
                batch = np.concatenate([lab_idx, unl_idx]).tolist()
                logger.error(f"train-vae: non-finite loss at step {step}, batch indices {batch}")
                raise DivergenceError("VAE loss became non-finite", step=step, batch_indices=batch)

            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(list(model.parameters()), config.grad_clip)
            optimizer.step()
            step += 1

            records.append({**_combine(lab, unl, float(loss)), "temperature": temperature})

        means = _epoch_means(records)
        val = validation_loss(model, dataset, val_idx, weights)
        rows.append({"epoch": epoch, **means, "val_total": val})
        if epoch % config.log_every == 0 or epoch == 1:
            logger.info(
                f"train-vae {env_id} epoch {epoch}: total {means['total']:.3f} recon {means['reconstruction']:.3f} "
                f"sup {means['supervision']:.3f} kl_z {means['kl_z']:.3f} kl_c {means['kl_c']:.3f} "
                f"hsic {means['hsic']:.4f} val {val:.3f} tau {means['temperature']:.3f}"
            )
        if val < best_val - config.min_delta:
            best_val, best_state, best_epoch, stale = val, copy.deepcopy(model.networks()), epoch, 0
        else:
            stale += 1
            if config.early_stop_patience is not None and stale >= config.early_stop_patience:
                logger.info(f"train-vae {env_id}: validation plateaued, stopping after epoch {epoch}")
                break

    for name, module in model.modules().items():
        module.load_state_dict(best_state[name])
    model.eval()
    model.loss_curve = pd.DataFrame(rows, columns=list(CURVE_COLUMNS))
    model.training_meta = {
        "seed": seed,
        "steps": step,
        "epochs_run": len(rows),
        "best_epoch": best_epoch,
        "temperature_end": annealed_temperature(step, total_steps, config.temperature_start, config.temperature_end),
        "n_labelled": int(len(labelled_idx)),
        "n_observations": len(dataset),
        "validation_indices": val_idx.tolist(),
        "hsic_indices": hsic_idx.tolist(),
        "hsic_init": hsic_init,
    }
    logger.info(f"train-vae {env_id}: best epoch {best_epoch}, validation loss {best_val:.3f}")
    return model


def _combine(lab: ElboBreakdown, unl: ElboBreakdown, total: float) -> Dict[str, float]:
    # labelled and unlabelled halves summed, as in the minimised objective
    lab_d, unl_d = lab.to_dict(), unl.to_dict()
    return {
        "total": total,
        "reconstruction": lab_d["reconstruction"] + unl_d["reconstruction"],
        "supervision": lab_d["supervision"],
        "kl_z": lab_d["kl_z"] + unl_d["kl_z"],
        "kl_c": lab_d["kl_c"] + unl_d["kl_c"],
        "hsic": unl_d["hsic"],
    }
