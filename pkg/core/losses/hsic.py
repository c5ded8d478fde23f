from typing import Optional, Union

import torch

from core.errors import HsicInputError
from .divergences import TensorLike, as_tensor, check_finite

BANDWIDTH_FLOOR = 1e-6
KERNELS = ("rbf", "linear")


def squared_distances(x: torch.Tensor) -> torch.Tensor:
    diff = x.unsqueeze(1) - x.unsqueeze(0)
    return diff.pow(2).sum(-1)


def median_bandwidth(x: torch.Tensor) -> torch.Tensor:
    """Median pairwise distance over distinct rows, floored.

    Even pair counts take the lower middle value. Gradients flow through
    the selected distance.
    """
    n = x.shape[0]
    rows, cols = torch.triu_indices(n, n, offset=1)
    # clamped so duplicate rows give zero gradient instead of nan
    distances = squared_distances(x)[rows, cols].clamp_min(torch.finfo(x.dtype).tiny).sqrt()
    return distances.median().clamp_min(BANDWIDTH_FLOOR)


def kernel_matrix(x: torch.Tensor, kernel: str = "rbf", bandwidth: Optional[Union[float, torch.Tensor]] = None) -> torch.Tensor:
    if x.dim() == 1:
        x = x.unsqueeze(1)
    if kernel == "linear":
        return x @ x.t()
    if kernel == "rbf":
        sigma = bandwidth if bandwidth is not None else median_bandwidth(x)
        return torch.exp(-squared_distances(x) / (2.0 * sigma ** 2))
    raise HsicInputError(f"Unknown kernel '{kernel}', expected one of {KERNELS}")


def centre(k: torch.Tensor) -> torch.Tensor:
    n = k.shape[0]
    h = torch.eye(n, dtype=k.dtype, device=k.device) - 1.0 / n
    return h @ k @ h


def hsic(z_batch: TensorLike, c_batch: TensorLike, kernel: str = "rbf") -> torch.Tensor:
    """Biased HSIC estimate Tr(HKzH HKcH) / (n-1)^2.

    rbf kernels use the batch median pairwise distance as bandwidth,
    recomputed for each call.
    """
    z, c = as_tensor(z_batch), as_tensor(c_batch)
    if z.shape[0] != c.shape[0]:
        raise HsicInputError(f"HSIC batches differ in size: {z.shape[0]} vs {c.shape[0]}")
    n = z.shape[0]
    if n < 2:
        raise HsicInputError(f"HSIC needs at least 2 samples, got {n}")
    check_finite("hsic", z, c)
    c = c.to(z.dtype)
    kz = centre(kernel_matrix(z, kernel))
    kc = centre(kernel_matrix(c, kernel))
    return torch.trace(kz @ kc) / (n - 1) ** 2
