from typing import Any, Dict, NamedTuple, Tuple

import numpy as np
import torch

from core.dataio.artifacts import register_artifact
from core.dataio.datasets import PIXEL_SCALE
from core.envs.base import ActionKind, ActionSpec, ObservationKind
from core.errors import ShapeMismatchError


class Transition(NamedTuple):
    obs: np.ndarray
    action: Any
    reward: float
    next_obs: np.ndarray
    terminal: bool


class Batch(NamedTuple):
    obs: torch.Tensor
    actions: torch.Tensor
    rewards: torch.Tensor
    next_obs: torch.Tensor
    terminals: torch.Tensor


@register_artifact("replay")
class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions. Pixel observations are kept as uint8."""

    def __init__(self, capacity: int, obs_kind: ObservationKind, obs_shape: Tuple[int, ...], action_spec: ActionSpec):
        if capacity < 1:
            raise ValueError("replay capacity must be >= 1")
        self.capacity = capacity
        self.obs_kind = ObservationKind(obs_kind)
        self.obs_shape = tuple(obs_shape)
        self.action_spec = action_spec
        obs_dtype = np.uint8 if self.obs_kind == ObservationKind.PIXEL else np.float32
        self.obs = np.zeros((capacity, *self.obs_shape), dtype=obs_dtype)
        self.next_obs = np.zeros((capacity, *self.obs_shape), dtype=obs_dtype)
        if action_spec.kind == ActionKind.DISCRETE:
            self.actions = np.zeros((capacity,), dtype=np.int64)
        else:
            self.actions = np.zeros((capacity, action_spec.dim), dtype=np.float32)
        self.rewards = np.zeros((capacity,), dtype=np.float32)
        self.terminals = np.zeros((capacity,), dtype=np.uint8)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def _store(self, obs: np.ndarray) -> np.ndarray:
        if obs.shape != self.obs_shape:
            raise ShapeMismatchError("observation shape does not match the buffer", actual=obs.shape, expected=self.obs_shape)
        if self.obs_kind == ObservationKind.PIXEL:
            return np.rint(obs * PIXEL_SCALE).astype(np.uint8)
        return obs.astype(np.float32)

    def push(self, obs: np.ndarray, action, reward: float, next_obs: np.ndarray, terminal: bool) -> None:
        self.obs[self.ptr] = self._store(np.asarray(obs))
        self.next_obs[self.ptr] = self._store(np.asarray(next_obs))
        self.actions[self.ptr] = action
        self.rewards[self.ptr] = reward
        self.terminals[self.ptr] = bool(terminal)
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def clear(self) -> None:
        self.ptr = 0
        self.size = 0

    def _load(self, stored: np.ndarray) -> torch.Tensor:
        if stored.dtype == np.uint8:
            return torch.from_numpy(stored.astype(np.float32) / PIXEL_SCALE)
        return torch.from_numpy(stored.astype(np.float32))

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform batch, no index repeated within it."""
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} transitions from a buffer holding {self.size}")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return Batch(
            obs=self._load(self.obs[idx]),
            actions=torch.from_numpy(self.actions[idx]),
            rewards=torch.from_numpy(self.rewards[idx]),
            next_obs=self._load(self.next_obs[idx]),
            terminals=torch.from_numpy(self.terminals[idx].astype(np.float32)),
        )

    def ordered_indices(self) -> np.ndarray:
        """Live slots from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.ptr) % self.capacity

    def transitions(self):
        for i in self.ordered_indices():
            action = int(self.actions[i]) if self.action_spec.kind == ActionKind.DISCRETE else self.actions[i].copy()
            yield Transition(self.obs[i], action, float(self.rewards[i]), self.next_obs[i], bool(self.terminals[i]))

    def to_sections(self) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        order = self.ordered_indices()
        sections = {
            "obs": self.obs[order],
            "next_obs": self.next_obs[order],
            "actions": self.actions[order],
            "rewards": self.rewards[order],
            "terminals": self.terminals[order],
        }
        meta = {
            "capacity": self.capacity,
            "obs_kind": self.obs_kind.value,
            "obs_shape": list(self.obs_shape),
            "action_spec": self.action_spec.model_dump(mode="json"),
        }
        return sections, meta

    @classmethod
    def from_sections(cls, sections: Dict[str, np.ndarray], meta: Dict[str, Any]) -> "ReplayBuffer":
        buffer = cls(meta["capacity"], meta["obs_kind"], tuple(meta["obs_shape"]), ActionSpec(**meta["action_spec"]))
        n = len(sections["rewards"])
        buffer.obs[:n] = sections["obs"]
        buffer.next_obs[:n] = sections["next_obs"]
        buffer.actions[:n] = sections["actions"]
        buffer.rewards[:n] = sections["rewards"]
        buffer.terminals[:n] = sections["terminals"]
        buffer.size = n
        buffer.ptr = n % buffer.capacity
        return buffer
