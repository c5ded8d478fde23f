import copy
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
import torch.nn.functional as F
from loguru import logger

from core.dataio.artifacts import parameter_checksum, register_artifact
from core.envs.base import ActionKind, EnvSpec
from core.errors import DivergenceError, SpecMismatchError
from core.nets import NetSettings, build_sac_nets
from .config import SacConfig
from .replay_buffer import Batch

CURVE_COLUMNS = ("step", "return_mean", "return_std", "success_rate")
_CURVE_PREFIX = "__curve__/"


def _obs_tensor(obs: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.asarray(obs, dtype=np.float32)).unsqueeze(0)


def policy_action(policy: nn.Module, spec: EnvSpec, obs: np.ndarray, deterministic: bool, generator: torch.Generator):
    """Env-ready action for a single observation."""
    with torch.no_grad():
        action = policy.act(_obs_tensor(obs), deterministic=deterministic, generator=generator)[0]
    if spec.action.kind == ActionKind.DISCRETE:
        return int(action)
    return action.numpy().astype(np.float32)


class FrozenPolicy:
    """Evaluation-time copy of a policy network with its own sampling stream."""

    def __init__(self, policy: nn.Module, spec: EnvSpec, seed: int = 0):
        self.net = copy.deepcopy(policy).eval()
        for p in self.net.parameters():
            p.requires_grad_(False)
        self.spec = spec
        self.generator = torch.Generator().manual_seed(seed)

    def __deepcopy__(self, memo: Dict[int, Any]) -> "FrozenPolicy":
        # torch.Generator is not copyable on every torch release; carry its state over instead
        clone = FrozenPolicy.__new__(FrozenPolicy)
        memo[id(self)] = clone
        clone.net = copy.deepcopy(self.net, memo)
        clone.spec = self.spec
        clone.generator = torch.Generator()
        clone.generator.set_state(self.generator.get_state())
        return clone

    def reseed(self, seed: int) -> None:
        self.generator.manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)

    def act(self, obs: np.ndarray, deterministic: bool = False):
        return policy_action(self.net, self.spec, obs, deterministic, self.generator)

    def networks(self) -> Dict[str, Dict[str, torch.Tensor]]:
        return {"policy": self.net.state_dict()}

    def checksum(self) -> str:
        return parameter_checksum(self.networks())


@register_artifact("policy")
@dataclass
class PolicyCheckpoint:
    """Trained SAC parameters plus the evaluation curve that produced them."""

    env_spec: EnvSpec
    task_id: str
    net_settings: NetSettings
    networks: Dict[str, Dict[str, torch.Tensor]]
    curve: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=list(CURVE_COLUMNS)))
    meta: Dict[str, Any] = field(default_factory=dict)

    def checksum(self) -> str:
        return parameter_checksum(self.networks)

    def frozen_policy(self, seed: int = 0) -> FrozenPolicy:
        policy, _, _ = build_sac_nets(self.env_spec.obs_kind, self.env_spec.action, self.env_spec.obs_shape, self.net_settings)
        policy.load_state_dict(self.networks["policy"])
        return FrozenPolicy(policy, self.env_spec, seed)

    def check_compatible(self, spec: EnvSpec) -> None:
        if (spec.obs_kind, tuple(spec.obs_shape), spec.action) != (
            self.env_spec.obs_kind, tuple(self.env_spec.obs_shape), self.env_spec.action
        ):
            raise SpecMismatchError(
                f"checkpoint for {self.env_spec.env_id} {tuple(self.env_spec.obs_shape)} does not fit "
                f"{spec.env_id} {tuple(spec.obs_shape)}"
            )

    def to_sections(self) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        sections = {}
        for net_name, state in self.networks.items():
            for param_name, tensor in state.items():
                sections[f"{net_name}/{param_name}"] = tensor.detach().cpu().numpy()
        for column in CURVE_COLUMNS:
            values = self.curve[column].to_numpy() if column in self.curve else np.zeros(0)
            sections[_CURVE_PREFIX + column] = np.asarray(values, dtype=np.float64)
        meta = {
            "env_spec": self.env_spec.model_dump(mode="json"),
            "task_id": self.task_id,
            "net_settings": self.net_settings.model_dump(mode="json"),
            "meta": self.meta,
        }
        return sections, meta

    @classmethod
    def from_sections(cls, sections: Dict[str, np.ndarray], meta: Dict[str, Any]) -> "PolicyCheckpoint":
        networks: Dict[str, Dict[str, torch.Tensor]] = {}
        curve = {}
        for name, array in sections.items():
            if name.startswith(_CURVE_PREFIX):
                curve[name[len(_CURVE_PREFIX):]] = array
                continue
            net_name, param_name = name.split("/", 1)
            networks.setdefault(net_name, {})[param_name] = torch.from_numpy(np.array(array))
        frame = pd.DataFrame({c: curve.get(c, np.zeros(0)) for c in CURVE_COLUMNS})
        frame["step"] = frame["step"].astype(np.int64)
        return cls(
            env_spec=EnvSpec(**meta["env_spec"]),
            task_id=meta["task_id"],
            net_settings=NetSettings(**meta["net_settings"]),
            networks=networks,
            curve=frame,
            meta=meta.get("meta", {}),
        )


class SacAgent:
    """Twin-Q soft actor-critic with a learned temperature.

    The discrete variant takes exact expectations over the action set in the
    critic target, the actor loss and the temperature loss.
    """

    def __init__(self, env_spec: EnvSpec, config: SacConfig, net_settings: Optional[NetSettings] = None, seed: int = 0):
        self.spec = env_spec
        self.config = config
        self.net_settings = net_settings or NetSettings()
        self.discrete = env_spec.action.kind == ActionKind.DISCRETE
        torch.manual_seed(seed)
        self.policy, self.q1, self.q2 = build_sac_nets(env_spec.obs_kind, env_spec.action, env_spec.obs_shape, self.net_settings)
        self.q1_target = copy.deepcopy(self.q1)
        self.q2_target = copy.deepcopy(self.q2)
        for p in list(self.q1_target.parameters()) + list(self.q2_target.parameters()):
            p.requires_grad_(False)
        self.log_alpha = torch.tensor(float(np.log(config.init_alpha)), requires_grad=config.auto_alpha)
        self.target_entropy = config.resolved_target_entropy(env_spec.action)

        self.policy_optimizer = torch.optim.Adam(self.policy.parameters(), lr=config.lr)
        self.q_optimizer = torch.optim.Adam(list(self.q1.parameters()) + list(self.q2.parameters()), lr=config.lr)
        self.alpha_optimizer = torch.optim.Adam([self.log_alpha], lr=config.alpha_lr) if config.auto_alpha else None
        self.generator = torch.Generator().manual_seed(seed)
        self.updates = 0

    @property
    def alpha(self) -> torch.Tensor:
        return self.log_alpha.exp().detach()

    def act(self, obs: np.ndarray, deterministic: bool = False):
        return policy_action(self.policy, self.spec, obs, deterministic, self.generator)

    # ---------------------------------------------------------------- updates

    def _critic_target(self, batch: Batch) -> torch.Tensor:
        cfg = self.config
        with torch.no_grad():
            if self.discrete:
                probs, log_probs = self.policy.distribution(batch.next_obs)
                q_next = torch.min(self.q1_target(batch.next_obs), self.q2_target(batch.next_obs))
                v_next = (probs * (q_next - self.alpha * log_probs)).sum(-1)
            else:
                next_action, next_log_prob = self.policy.sample(batch.next_obs, self.generator)
                q_next = torch.min(self.q1_target(batch.next_obs, next_action), self.q2_target(batch.next_obs, next_action))
                v_next = q_next - self.alpha * next_log_prob
            return batch.rewards + cfg.gamma * (1.0 - batch.terminals) * v_next

    def _q_values(self, batch: Batch) -> Tuple[torch.Tensor, torch.Tensor]:
        if self.discrete:
            index = batch.actions.long().unsqueeze(-1)
            return self.q1(batch.obs).gather(-1, index).squeeze(-1), self.q2(batch.obs).gather(-1, index).squeeze(-1)
        return self.q1(batch.obs, batch.actions), self.q2(batch.obs, batch.actions)

    def _actor_losses(self, batch: Batch) -> Tuple[torch.Tensor, torch.Tensor]:
        """(policy loss, policy entropy estimate)."""
        if self.discrete:
            probs, log_probs = self.policy.distribution(batch.obs)
            with torch.no_grad():
                q = torch.min(self.q1(batch.obs), self.q2(batch.obs))
            loss = (probs * (self.alpha * log_probs - q)).sum(-1).mean()
            entropy = -(probs * log_probs).sum(-1)
        else:
            action, log_prob = self.policy.sample(batch.obs, self.generator)
            q = torch.min(self.q1(batch.obs, action), self.q2(batch.obs, action))
            loss = (self.alpha * log_prob - q).mean()
            entropy = -log_prob
        return loss, entropy.detach()

    def update(self, batch: Batch, step: Optional[int] = None) -> Dict[str, float]:
        target = self._critic_target(batch)
        q1, q2 = self._q_values(batch)
        q_loss = F.mse_loss(q1, target) + F.mse_loss(q2, target)
        self._guard("critic", q_loss, step)
        self.q_optimizer.zero_grad()
        q_loss.backward()
        self.q_optimizer.step()

        policy_loss, entropy = self._actor_losses(batch)
        self._guard("policy", policy_loss, step)
        self.policy_optimizer.zero_grad()
        policy_loss.backward()
        self.policy_optimizer.step()

        alpha_loss = torch.zeros(())
        if self.alpha_optimizer is not None:
            alpha_loss = (self.log_alpha * (entropy - self.target_entropy)).mean()
            self.alpha_optimizer.zero_grad()
            alpha_loss.backward()
            self.alpha_optimizer.step()

        self.soft_update(self.config.tau)
        self.updates += 1
        return {
            "q_loss": float(q_loss),
            "policy_loss": float(policy_loss),
            "alpha_loss": float(alpha_loss),
            "alpha": float(self.alpha),
            "entropy": float(entropy.mean()),
        }

    def soft_update(self, tau: float) -> None:
        with torch.no_grad():
            for online, target in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
                for p, p_target in zip(online.parameters(), target.parameters()):
                    p_target.mul_(1.0 - tau).add_(tau * p)

    @staticmethod
    def _guard(name: str, loss: torch.Tensor, step: Optional[int]) -> None:
        if not bool(torch.isfinite(loss)):
            logger.error(f"{name} loss is non-finite at step {step}")
            raise DivergenceError(f"SAC {name} loss became non-finite", step=step)

    # ------------------------------------------------------------ checkpoints

    def networks(self) -> Dict[str, Dict[str, torch.Tensor]]:
        return {
            "policy": copy.deepcopy(self.policy.state_dict()),
            "q1": copy.deepcopy(self.q1.state_dict()),
            "q2": copy.deepcopy(self.q2.state_dict()),
            "q1_target": copy.deepcopy(self.q1_target.state_dict()),
            "q2_target": copy.deepcopy(self.q2_target.state_dict()),
            "temperature": {"log_alpha": self.log_alpha.detach().clone().reshape(1)},
        }

    def load_networks(self, networks: Dict[str, Dict[str, torch.Tensor]]) -> None:
        self.policy.load_state_dict(networks["policy"])
        self.q1.load_state_dict(networks["q1"])
        self.q2.load_state_dict(networks["q2"])
        self.q1_target.load_state_dict(networks.get("q1_target", networks["q1"]))
        self.q2_target.load_state_dict(networks.get("q2_target", networks["q2"]))
        if "temperature" in networks:
            with torch.no_grad():
                self.log_alpha.copy_(networks["temperature"]["log_alpha"].reshape(()))

    def checkpoint(self, task_id: str, curve: pd.DataFrame, meta: Dict[str, Any]) -> PolicyCheckpoint:
        return PolicyCheckpoint(self.spec, task_id, self.net_settings, self.networks(), curve, meta)

    @classmethod
    def from_checkpoint(cls, checkpoint: PolicyCheckpoint, config: SacConfig, seed: int = 0) -> "SacAgent":
        agent = cls(checkpoint.env_spec, config, checkpoint.net_settings, seed)
        agent.load_networks(checkpoint.networks)
        return agent
