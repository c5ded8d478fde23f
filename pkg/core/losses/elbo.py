import math
from dataclasses import dataclass
from typing import Dict, Union

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field

from core.envs.base import ObservationKind
from .divergences import TensorLike, as_tensor, check_finite

LOG_FLOOR = 1e-8
LOG_2PI = math.log(2.0 * math.pi)
# keeps log(p) and log(1 - p) finite for saturated decoder outputs
BERNOULLI_CLAMP = 1e-6


class ElboWeights(BaseModel):
    model_config = ConfigDict(extra="forbid")

    recon: float = Field(default=2.0, ge=0.0)
    label: float = Field(default=5.0, ge=0.0)
    kl: float = Field(default=0.01, ge=0.0)
    hsic: float = Field(default=0.10, ge=0.0)


@dataclass
class ElboBreakdown:
    """Loss terms of one batch. `total` is the quantity minimised."""

    reconstruction: torch.Tensor
    supervision: torch.Tensor
    kl_z: torch.Tensor
    kl_c: torch.Tensor
    hsic: torch.Tensor
    total: torch.Tensor

    def with_hsic(self, value: torch.Tensor, weight: float) -> "ElboBreakdown":
        total = self.total + weight * value if weight else self.total
        return ElboBreakdown(self.reconstruction, self.supervision, self.kl_z, self.kl_c, value.detach(), total)

    def to_dict(self) -> Dict[str, float]:
        return {
            "reconstruction": float(self.reconstruction),
            "supervision": float(self.supervision),
            "kl_z": float(self.kl_z),
            "kl_c": float(self.kl_c),
            "hsic": float(self.hsic),
            "total": float(self.total),
        }


def supervision_term(class_probs: TensorLike, label: Union[int, TensorLike]) -> torch.Tensor:
    """log q(c = label | x) with 1-based labels, floored at log(1e-8).

    Batched input is averaged over the batch.
    """
    probs = as_tensor(class_probs)
    labels = torch.as_tensor(label, dtype=torch.long, device=probs.device)
    k = probs.shape[-1]
    if bool((labels < 1).any()) or bool((labels > k).any()):
        raise ValueError(f"labels must lie in 1..{k}")
    if probs.dim() == 1:
        picked = probs[labels - 1]
    else:
        picked = probs.gather(-1, (labels - 1).reshape(-1, 1)).squeeze(-1)
    value = torch.log(picked.clamp_min(LOG_FLOOR))
    return value.mean() if value.dim() > 0 else value


def reconstruction_log_likelihood(recon: torch.Tensor, target: torch.Tensor, obs_kind: ObservationKind) -> torch.Tensor:
    """Per-batch mean of the summed log-likelihood of `target` under the decoder output.

    Pixels: independent Bernoulli per channel with mean `recon`.
    Features: unit-variance Gaussian with mean `recon`.
    """
    batch = recon.shape[0]
    if obs_kind == ObservationKind.PIXEL:
        probs = recon.clamp(BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP)
        ll = -F.binary_cross_entropy(probs, target, reduction="none")
    else:
        ll = -0.5 * ((target - recon).pow(2) + LOG_2PI)
    return ll.reshape(batch, -1).sum(-1).mean()


def _assemble(recon_ll, supervision, kl_z, kl_c, weights: ElboWeights) -> ElboBreakdown:
    recon_ll, supervision, kl_z, kl_c = (as_tensor(t) for t in (recon_ll, supervision, kl_z, kl_c))
    check_finite("elbo", recon_ll, supervision, kl_z, kl_c)
    total = -(weights.recon * recon_ll + weights.label * supervision) + weights.kl * (kl_z + kl_c)
    return ElboBreakdown(recon_ll, supervision, kl_z, kl_c, torch.zeros_like(total), total)


def elbo_labelled(recon_ll: TensorLike, supervision: TensorLike, kl_z: TensorLike, kl_c: TensorLike, weights: ElboWeights) -> ElboBreakdown:
    return _assemble(recon_ll, supervision, kl_z, kl_c, weights)


def elbo_unlabelled(recon_ll: TensorLike, kl_z: TensorLike, kl_c: TensorLike, weights: ElboWeights) -> ElboBreakdown:
    return _assemble(recon_ll, torch.zeros_like(as_tensor(recon_ll)), kl_z, kl_c, weights)
