import math
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from core.envs.base import ActionKind, ActionSpec


class SacConfig(BaseModel):
    """Soft actor-critic hyperparameters and step budgets for one environment."""

    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(default=0.99, ge=0.0, le=1.0)
    tau: float = Field(default=0.005, gt=0.0, le=1.0)
    lr: float = Field(default=3e-4, gt=0.0)
    alpha_lr: float = Field(default=3e-4, gt=0.0)
    init_alpha: float = Field(default=0.2, gt=0.0)
    auto_alpha: bool = True
    target_entropy: Optional[float] = Field(default=None, description="defaults per action kind when unset")
    batch_size: int = Field(default=256, ge=1)
    buffer_capacity: int = Field(default=100_000, ge=1)
    total_steps: int = Field(default=150_000, ge=1)
    random_prefix_steps: int = Field(default=1_000, ge=0)
    learning_starts: int = Field(default=1_000, ge=0)
    update_every: int = Field(default=1, ge=1)
    log_every: int = Field(default=5_000, ge=1)
    eval_every: int = Field(default=10_000, ge=1)
    eval_episodes: int = Field(default=10, ge=1)
    # stop source training once the greedy success rate reaches this
    early_stop_success: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    finetune_steps: int = Field(default=20_000, ge=1)
    success_threshold: float = Field(default=0.8, gt=0.0, le=1.0)

    def resolved_target_entropy(self, action_spec: ActionSpec) -> float:
        if self.target_entropy is not None:
            return self.target_entropy
        if action_spec.kind == ActionKind.DISCRETE:
            return 0.5 * math.log(action_spec.n)
        return -float(action_spec.dim)
