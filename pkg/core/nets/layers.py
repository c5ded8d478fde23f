import math
from typing import List, Sequence

import torch
import torch.nn as nn


class FilmLayer(nn.Module):
    """Feature-wise affine modulation: gamma(c) * h + beta(c) over the channel dim.

    Works on (B, C) and (B, C, H, W) activations. gamma starts at 1 through its bias.
    """

    def __init__(self, cond_dim: int, channels: int):
        super().__init__()
        self.channels = channels
        self.gamma = nn.Linear(cond_dim, channels)
        self.beta = nn.Linear(cond_dim, channels)
        self.reset_film()

    def reset_film(self) -> None:
        nn.init.ones_(self.gamma.bias)
        nn.init.zeros_(self.beta.bias)

    def forward(self, h: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        gamma = self.gamma(cond)
        beta = self.beta(cond)
        if h.dim() == 4:
            gamma = gamma[:, :, None, None]
            beta = beta[:, :, None, None]
        return gamma * h + beta


class ConvResBlock(nn.Module):
    """Pre-activation residual block, shape preserving."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv1(torch.relu(x))
        h = self.conv2(torch.relu(h))
        return x + h


class LinearResBlock(nn.Module):

    def __init__(self, width: int):
        super().__init__()
        self.fc1 = nn.Linear(width, width)
        self.fc2 = nn.Linear(width, width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.fc1(torch.relu(x))
        h = self.fc2(torch.relu(h))
        return x + h


def mlp(sizes: Sequence[int], final_activation: bool = False) -> nn.Sequential:
    layers: List[nn.Module] = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2 or final_activation:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


def fan_in_uniform_(module: nn.Module) -> nn.Module:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every linear and conv layer; FiLM layers keep gamma = 1."""
    for sub in module.modules():
        if isinstance(sub, (nn.Linear, nn.Conv2d)):
            fan_in = sub.weight[0].numel()
            bound = 1.0 / math.sqrt(fan_in)
            nn.init.uniform_(sub.weight, -bound, bound)
            if sub.bias is not None:
                nn.init.uniform_(sub.bias, -bound, bound)
    for sub in module.modules():
        if isinstance(sub, FilmLayer):
            sub.reset_film()
    return module
