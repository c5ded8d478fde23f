import math
from typing import Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from core.envs.base import ActionKind, ActionSpec, ObservationKind
from core.errors import UnsupportedActionSpecError
from .layers import fan_in_uniform_, mlp
from .settings import NetSettings
from .vae import CnnTrunk

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0


def _trunk(obs_kind: ObservationKind, obs_shape: Sequence[int], settings: NetSettings) -> Tuple[nn.Module, int]:
    if obs_kind == ObservationKind.PIXEL:
        cnn = CnnTrunk(obs_shape, settings.policy_cnn_channels)
        return nn.Sequential(cnn, mlp([cnn.out_dim, *settings.pixel_head], final_activation=True)), settings.pixel_head[-1]
    return mlp([obs_shape[0], *settings.policy_hidden], final_activation=True), settings.policy_hidden[-1]


class CategoricalPolicy(nn.Module):
    """Discrete policy emitting action logits."""

    def __init__(self, obs_kind: ObservationKind, obs_shape: Sequence[int], n_actions: int, settings: NetSettings):
        super().__init__()
        self.trunk, width = _trunk(obs_kind, obs_shape, settings)
        self.logits = nn.Linear(width, n_actions)
        self.n_actions = n_actions

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.logits(self.trunk(obs))

    def distribution(self, obs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """(probs, log_probs) over all actions."""
        log_probs = F.log_softmax(self(obs), dim=-1)
        return log_probs.exp(), log_probs

    def act(self, obs: torch.Tensor, deterministic: bool, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        probs, _ = self.distribution(obs)
        if deterministic:
            return probs.argmax(dim=-1)
        return torch.multinomial(probs, 1, generator=generator).squeeze(-1)


def categorical_entropy(log_probs: torch.Tensor) -> torch.Tensor:
    return -(log_probs.exp() * log_probs).sum(-1)


class GaussianPolicy(nn.Module):
    """Continuous policy: tanh-squashed Gaussian over [-1, 1]^dim."""

    def __init__(self, obs_kind: ObservationKind, obs_shape: Sequence[int], action_dim: int, settings: NetSettings):
        super().__init__()
        self.trunk, width = _trunk(obs_kind, obs_shape, settings)
        self.mean = nn.Linear(width, action_dim)
        self.log_std = nn.Linear(width, action_dim)
        self.action_dim = action_dim

    def forward(self, obs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        h = self.trunk(obs)
        return self.mean(h), self.log_std(h).clamp(LOG_STD_MIN, LOG_STD_MAX)

    def sample(self, obs: torch.Tensor, generator: Optional[torch.Generator] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        """Reparameterised squashed sample and its log-density."""
        mean, log_std = self(obs)
        std = log_std.exp()
        eps = torch.randn(mean.shape, generator=generator, dtype=mean.dtype, device=mean.device)
        pre = mean + std * eps
        action = torch.tanh(pre)
        log_prob = (-0.5 * eps.pow(2) - log_std - 0.5 * math.log(2 * math.pi)).sum(-1)
        # log |d tanh / d pre| = 2 (log 2 - pre - softplus(-2 pre))
        log_prob = log_prob - (2.0 * (math.log(2.0) - pre - F.softplus(-2.0 * pre))).sum(-1)
        return action, log_prob

    def act(self, obs: torch.Tensor, deterministic: bool, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        if deterministic:
            mean, _ = self(obs)
            return torch.tanh(mean)
        action, _ = self.sample(obs, generator)
        return action


class DiscreteQNetwork(nn.Module):
    """Q(s, .) for every discrete action."""

    def __init__(self, obs_kind: ObservationKind, obs_shape: Sequence[int], n_actions: int, settings: NetSettings):
        super().__init__()
        self.trunk, width = _trunk(obs_kind, obs_shape, settings)
        self.values = nn.Linear(width, n_actions)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.values(self.trunk(obs))


class ContinuousQNetwork(nn.Module):
    """Q(s, a); the action joins at the first layer on features, after the conv trunk on pixels."""

    def __init__(self, obs_kind: ObservationKind, obs_shape: Sequence[int], action_dim: int, settings: NetSettings):
        super().__init__()
        if obs_kind == ObservationKind.PIXEL:
            self.obs_trunk, width = _trunk(obs_kind, obs_shape, settings)
        else:
            self.obs_trunk, width = nn.Identity(), obs_shape[0]
        self.head = mlp([width + action_dim, *settings.policy_hidden, 1])

    def forward(self, obs: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return self.head(torch.cat([self.obs_trunk(obs), action], dim=-1)).squeeze(-1)


def build_sac_nets(
    obs_kind: ObservationKind,
    action_spec: ActionSpec,
    obs_shape: Sequence[int],
    settings: Optional[NetSettings] = None,
) -> Tuple[nn.Module, nn.Module, nn.Module]:
    """(policy, q1, q2) for a discrete or box action space."""
    settings = settings or NetSettings()
    obs_kind = ObservationKind(obs_kind)
    if action_spec.kind == ActionKind.DISCRETE and action_spec.n >= 2:
        nets = (
            CategoricalPolicy(obs_kind, obs_shape, action_spec.n, settings),
            DiscreteQNetwork(obs_kind, obs_shape, action_spec.n, settings),
            DiscreteQNetwork(obs_kind, obs_shape, action_spec.n, settings),
        )
    elif action_spec.kind == ActionKind.BOX and action_spec.dim >= 1 and (action_spec.low, action_spec.high) == (-1.0, 1.0):
        nets = (
            GaussianPolicy(obs_kind, obs_shape, action_spec.dim, settings),
            ContinuousQNetwork(obs_kind, obs_shape, action_spec.dim, settings),
            ContinuousQNetwork(obs_kind, obs_shape, action_spec.dim, settings),
        )
    else:
        raise UnsupportedActionSpecError(f"Unsupported action spec {action_spec.model_dump()}")
    for net in nets:
        fan_in_uniform_(net)
    return nets
