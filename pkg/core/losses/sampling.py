import math
from typing import Optional

import torch
import torch.nn.functional as F

from core.errors import InvalidTemperatureError
from .divergences import TensorLike, as_tensor


def gumbel_softmax_sample(
    logits: TensorLike,
    temperature: float,
    generator: Optional[torch.Generator] = None,
    hard: bool = False,
) -> torch.Tensor:
    """softmax((logits + g) / temperature), g ~ Gumbel(0, 1) i.i.d.

    With `hard`, the forward value is the one-hot argmax and gradients flow
    through the soft sample.
    """
    if not temperature > 0:
        raise InvalidTemperatureError(f"Gumbel-Softmax temperature must be > 0, got {temperature}")
    logits = as_tensor(logits)
    uniform = torch.rand(logits.shape, generator=generator, dtype=logits.dtype, device=logits.device)
    eps = torch.finfo(logits.dtype).eps
    gumbel = -torch.log(-torch.log(uniform.clamp(eps, 1.0 - eps)))
    soft = F.softmax((logits + gumbel) / temperature, dim=-1)
    if not hard:
        return soft
    index = soft.argmax(dim=-1, keepdim=True)
    one_hot = torch.zeros_like(soft).scatter_(-1, index, 1.0)
    return one_hot - soft.detach() + soft


def annealed_temperature(step: int, total_steps: int, start: float = 1.0, end: float = 0.5) -> float:
    """Exponential anneal from `start` to `end` over `total_steps`, constant afterwards."""
    if start <= 0 or end <= 0:
        raise InvalidTemperatureError("temperatures must be > 0")
    fraction = min(max(step, 0) / max(total_steps, 1), 1.0)
    return start * math.exp(fraction * math.log(end / start))
