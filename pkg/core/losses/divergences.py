from typing import Optional, Union

import numpy as np
import torch

from core.errors import NonFiniteError, SimplexError

TensorLike = Union[torch.Tensor, np.ndarray, float]

SIMPLEX_TOLERANCE = 1e-6


def as_tensor(value: TensorLike) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    return torch.as_tensor(np.asarray(value, dtype=np.float64))


def _reduce(per_sample: torch.Tensor) -> torch.Tensor:
    # per-sample sums, averaged over any leading batch dims
    return per_sample.mean() if per_sample.dim() > 0 else per_sample


def check_finite(name: str, *tensors: torch.Tensor) -> None:
    for tensor in tensors:
        if not bool(torch.isfinite(tensor).all()):
            raise NonFiniteError(f"{name}: non-finite input")


def check_simplex(name: str, probs: torch.Tensor, tol: float = SIMPLEX_TOLERANCE) -> None:
    check_finite(name, probs)
    if bool((probs < -tol).any()) or bool(((probs.sum(-1) - 1.0).abs() > tol).any()):
        raise SimplexError(f"{name}: input is not on the probability simplex (tolerance {tol})")


def gaussian_kl(mu: TensorLike, log_var: TensorLike) -> torch.Tensor:
    """KL(N(mu, exp(log_var)) || N(0, I)), summed over the last dim."""
    mu, log_var = as_tensor(mu), as_tensor(log_var)
    check_finite("gaussian_kl", mu, log_var)
    per_sample = 0.5 * (log_var.exp() + mu.pow(2) - 1.0 - log_var).sum(-1)
    return _reduce(per_sample)


def categorical_kl(probs: TensorLike, prior: Optional[TensorLike] = None) -> torch.Tensor:
    """KL(probs || prior) with 0 log 0 = 0. The prior defaults to uniform."""
    probs = as_tensor(probs)
    check_simplex("categorical_kl probs", probs)
    if prior is None:
        prior = torch.full_like(probs, 1.0 / probs.shape[-1])
    else:
        prior = as_tensor(prior).to(probs.dtype)
        check_simplex("categorical_kl prior", prior)
    positive = probs > 0
    tiny = torch.finfo(probs.dtype).tiny
    terms = torch.where(
        positive,
        probs * (torch.log(probs.clamp_min(tiny)) - torch.log(prior.clamp_min(tiny))),
        torch.zeros_like(probs),
    )
    return _reduce(terms.sum(-1))
