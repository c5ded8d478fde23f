from enum import Enum
from typing import FrozenSet, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class ObservationKind(str, Enum):
    PIXEL = "pixel"
    FEATURE = "feature"


class ActionKind(str, Enum):
    DISCRETE = "discrete"
    BOX = "box"


class ActionSpec(BaseModel):
    """Discrete actions are indices in [0, n); box actions are vectors in [low, high]^dim."""

    model_config = ConfigDict(frozen=True)

    kind: ActionKind
    n: int = Field(default=0, ge=0)
    dim: int = Field(default=0, ge=0)
    low: float = -1.0
    high: float = 1.0

    @property
    def size(self) -> int:
        return self.n if self.kind == ActionKind.DISCRETE else self.dim


class EnvSpec(BaseModel):
    """Static shape contract shared by environments, networks and checkpoints."""

    model_config = ConfigDict(frozen=True)

    env_id: str
    obs_kind: ObservationKind
    obs_shape: Tuple[int, ...]
    n_classes: int
    action: ActionSpec
    class_names: Tuple[str, ...]


class TaskSpec(BaseModel):
    """Reward definition of one task variant."""

    model_config = ConfigDict(frozen=True)

    task_id: str
    rewarded_targets: FrozenSet[str]
    reward_per_pick: float = 1.0
    terminal_on_completion: bool = True
    # potential-based distance shaping, Reacher only
    shaping_scale: float = 0.0
    shaping_gamma: float = Field(default=0.99, ge=0.0, le=1.0)

    @field_validator("rewarded_targets")
    @classmethod
    def _nonempty(cls, value: FrozenSet[str]) -> FrozenSet[str]:
        if not value:
            raise ValueError("rewarded_targets must name at least one colour")
        return value


def seed_rng(seed: int) -> np.random.Generator:
    # any 64-bit value, negative ones included
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


class Env:
    """Minimal protocol the trainers and evaluators rely on."""

    spec: EnvSpec
    task: TaskSpec
    steps_elapsed: int
    max_steps: int

    def reset(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def step(self, action) -> Tuple[np.ndarray, float, bool]:
        raise NotImplementedError

    def true_class(self) -> int:
        raise NotImplementedError

    def sample_action(self, rng: np.random.Generator):
        raise NotImplementedError

    @property
    def last_terminal(self) -> bool:
        """True when the last `done` came from task completion rather than the step limit."""
        raise NotImplementedError

    def episode_successes(self) -> dict:
        """Colour -> count of successful pick/reach events in the current episode."""
        raise NotImplementedError

    def observation(self) -> np.ndarray:
        raise NotImplementedError


def counts_by_colour(colours: Tuple[str, ...], events) -> dict:
    out = {c: 0 for c in colours}
    for colour in events:
        out[colour] += 1
    return out
