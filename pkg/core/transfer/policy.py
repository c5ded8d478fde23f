import copy
from concurrent.futures import ThreadPoolExecutor
from typing import Any, List, Optional, Sequence

import numpy as np
from loguru import logger

from core.dataio.artifacts import parameter_checksum
from core.envs.base import Env
from core.errors import MagikError, SpecMismatchError
from core.imagination.model import VaeModel
from core.sac.agent import FrozenPolicy
from core.sac.training import EpisodeStats, evaluate_policy
from .reports import TransferReport
from .rules import RuleTable


class TransferPolicy:
    """Zero-shot action selection: classify, imagine the source-aligned view, act with the source policy."""

    def __init__(self, vae: VaeModel, source_policy: FrozenPolicy, rules: RuleTable, confidence_floor: Optional[float] = None):
        spec = source_policy.spec
        if (vae.obs_kind, vae.obs_shape) != (spec.obs_kind, tuple(spec.obs_shape)):
            raise SpecMismatchError(
                f"VAE observations {vae.obs_kind.value}{vae.obs_shape} differ from the policy's "
                f"{spec.obs_kind.value}{tuple(spec.obs_shape)}"
            )
        rules.validate_classes(vae.n_classes)
        self.vae = vae
        self.source_policy = source_policy
        self.rules = rules
        self.confidence_floor = confidence_floor
        self.spec = spec

    def reseed(self, seed: int) -> None:
        self.source_policy.reseed(seed)

    def source_view(self, observation: np.ndarray) -> np.ndarray:
        """The observation the source policy acts on."""
        _, probs = self.vae.encode(observation)
        predicted = int(probs.argmax()) + 1
        if self.confidence_floor is not None and float(probs.max()) < self.confidence_floor:
            return observation
        rule = self.rules.lookup(predicted)
        if rule is None or rule.pass_through:
            return observation
        return self.vae.imagine(observation, rule.imagine_as)

    def act(self, observation: np.ndarray, deterministic: bool = False):
        return self.source_policy.act(self.source_view(observation), deterministic=deterministic)

    def checksum(self) -> str:
        return parameter_checksum({**self.vae.networks(), **self.source_policy.networks()})


def evaluate_agent(
    agent: Any,
    env: Env,
    n_episodes: int,
    seeds: Sequence[int],
    name: str,
    jobs: int = 1,
    deterministic: bool = False,
) -> TransferReport:
    """Evaluate `agent` once per seed, each worker on its own env and agent copy.

    Raises if any parameter changed while evaluating.
    """
    if n_episodes < 1 or not seeds:
        raise ValueError("evaluation needs n_episodes >= 1 and at least one seed")
    before = agent.checksum() if hasattr(agent, "checksum") else None

    def run(seed: int) -> EpisodeStats:
        return evaluate_policy(copy.deepcopy(agent), copy.deepcopy(env), n_episodes, seed, deterministic)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            stats: List[EpisodeStats] = list(pool.map(run, seeds))
    else:
        stats = [run(seed) for seed in seeds]

    if before is not None and agent.checksum() != before:
        raise MagikError(f"{name}: parameters changed during evaluation")
    report = TransferReport.from_stats(name, env.spec.env_id, env.task.task_id, list(seeds), stats)
    logger.info(f"{name} on {env.spec.env_id}/{env.task.task_id}: {report.summary_text()}")
    return report


def evaluate_transfer(
    transfer_policy: TransferPolicy, target_env: Env, n_episodes: int, seeds: Sequence[int], jobs: int = 1, deterministic: bool = False
) -> TransferReport:
    return evaluate_agent(transfer_policy, target_env, n_episodes, seeds, "MAGIK", jobs, deterministic)
