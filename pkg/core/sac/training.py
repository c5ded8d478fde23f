import copy
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from tqdm import tqdm

from core.dataio.datasets import DatasetSink
from core.envs.base import Env, seed_rng
from core.envs.tasks import SOURCE_TASKS
from core.errors import SpecMismatchError
from core.nets import NetSettings
from .agent import CURVE_COLUMNS, PolicyCheckpoint, SacAgent
from .config import SacConfig
from .replay_buffer import ReplayBuffer

EMA_FACTOR = 0.9


@dataclass
class EpisodeStats:
    """Per-episode outcomes of one evaluation run."""

    colours: Tuple[str, ...]
    successes: List[Dict[str, int]] = field(default_factory=list)
    returns: List[float] = field(default_factory=list)
    lengths: List[int] = field(default_factory=list)
    completed: List[bool] = field(default_factory=list)

    @property
    def n_episodes(self) -> int:
        return len(self.returns)

    def count(self, colour: str) -> int:
        """Episodes in which `colour` was picked or reached."""
        return sum(1 for s in self.successes if s.get(colour, 0) > 0)

    def counts(self) -> Dict[str, int]:
        return {c: self.count(c) for c in self.colours}

    @property
    def success_rate(self) -> float:
        return float(np.mean(self.completed)) if self.completed else 0.0

    @property
    def return_mean(self) -> float:
        return float(np.mean(self.returns)) if self.returns else 0.0

    @property
    def return_std(self) -> float:
        return float(np.std(self.returns)) if self.returns else 0.0


def evaluate_policy(policy: Any, env: Env, n_episodes: int, seed: int, deterministic: bool = False) -> EpisodeStats:
    """Roll `policy` for `n_episodes`; episode resets and action sampling derive from `seed`."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    rng = seed_rng(seed)
    if hasattr(policy, "reseed"):
        policy.reseed(int(rng.integers(2 ** 62)))
    stats = EpisodeStats(colours=tuple(env.episode_successes()))
    for _ in range(n_episodes):
        obs = env.reset(int(rng.integers(2 ** 63)))
        total, done = 0.0, False
        while not done:
            obs, reward, done = env.step(policy.act(obs, deterministic=deterministic))
            total += reward
        stats.successes.append(env.episode_successes())
        stats.returns.append(total)
        stats.lengths.append(env.steps_elapsed)
        stats.completed.append(env.last_terminal)
    return stats


def smooth(values, factor: float = EMA_FACTOR) -> np.ndarray:
    """Exponential moving average, first value unchanged."""
    return pd.Series(np.asarray(values, dtype=np.float64)).ewm(alpha=1.0 - factor, adjust=False).mean().to_numpy()


def steps_to_threshold(curve: pd.DataFrame, threshold: float) -> Optional[int]:
    hits = curve.loc[curve["success_rate"] >= threshold, "step"]
    return int(hits.iloc[0]) if len(hits) else None


def _run_sac(
    agent: SacAgent,
    env: Env,
    total_steps: int,
    random_prefix: int,
    learning_starts: int,
    seed: int,
    dataset_sink: Optional[DatasetSink] = None,
    early_stop: Optional[float] = None,
    show_progress: bool = False,
    label: str = "sac",
) -> pd.DataFrame:
    cfg = agent.config
    rng = seed_rng(seed)
    eval_env = copy.deepcopy(env)
    eval_seed = int(rng.integers(2 ** 62))
    buffer = ReplayBuffer(cfg.buffer_capacity, env.spec.obs_kind, env.spec.obs_shape, env.spec.action)
    rows: List[Dict[str, float]] = []

    def evaluate(step: int) -> float:
        stats = evaluate_policy(agent, eval_env, cfg.eval_episodes, eval_seed)
        rows.append({
            "step": step,
            "return_mean": stats.return_mean,
            "return_std": stats.return_std,
            "success_rate": stats.success_rate,
        })
        logger.info(f"{label} step {step}: eval return {stats.return_mean:.3f} +/- {stats.return_std:.3f}, success {stats.success_rate:.2f}")
        return stats.success_rate

    evaluate(0)
    episode, episode_return, smoothed = 0, 0.0, None
    obs = env.reset(int(rng.integers(2 ** 63)))
    for step in tqdm(range(1, total_steps + 1), desc=label, disable=not show_progress):
        if dataset_sink is not None:
            dataset_sink.append(obs, env.true_class(), episode)
        action = env.sample_action(rng) if step <= random_prefix else agent.act(obs)
        next_obs, reward, done = env.step(action)
        buffer.push(obs, action, reward, next_obs, env.last_terminal)
        episode_return += reward
        obs = next_obs
        if done:
            smoothed = episode_return if smoothed is None else EMA_FACTOR * smoothed + (1 - EMA_FACTOR) * episode_return
            episode += 1
            episode_return = 0.0
            obs = env.reset(int(rng.integers(2 ** 63)))

        if step >= learning_starts and len(buffer) >= cfg.batch_size and step % cfg.update_every == 0:
            losses = agent.update(buffer.sample(cfg.batch_size, rng), step=step)
            if step % cfg.log_every == 0:
                logger.info(
                    f"{label} step {step}: smoothed return {smoothed if smoothed is not None else float('nan'):.3f}, "
                    f"q {losses['q_loss']:.4f}, pi {losses['policy_loss']:.4f}, alpha {losses['alpha']:.4f}"
                )
        if step % cfg.eval_every == 0 or step == total_steps:
            success = evaluate(step)
            if early_stop is not None and success >= early_stop:
                logger.info(f"{label}: success {success:.2f} >= {early_stop:.2f}, stopping at step {step}")
                break
    return pd.DataFrame(rows, columns=list(CURVE_COLUMNS))


def train_source(
    env: Env,
    config: SacConfig,
    dataset_sink: Optional[DatasetSink] = None,
    seed: int = 0,
    net_settings: Optional[NetSettings] = None,
    show_progress: bool = False,
) -> PolicyCheckpoint:
    """Train SAC on the source task, streaming every visited observation into `dataset_sink`."""
    expected = SOURCE_TASKS.get(env.spec.env_id)
    if env.task.task_id != expected:
        raise SpecMismatchError(f"train_source expects the '{expected}' task, env runs '{env.task.task_id}'")
    agent = SacAgent(env.spec, config, net_settings, seed)
    curve = _run_sac(
        agent, env, config.total_steps, config.random_prefix_steps, config.learning_starts, seed,
        dataset_sink=dataset_sink, early_stop=config.early_stop_success, show_progress=show_progress,
        label=f"train-sac {env.spec.env_id}",
    )
    meta = {"seed": seed, "steps": int(curve["step"].iloc[-1]), "updates": agent.updates}
    return agent.checkpoint(env.task.task_id, curve, meta)


def fine_tune(
    checkpoint: PolicyCheckpoint,
    env: Env,
    config: SacConfig,
    seed: int = 0,
    show_progress: bool = False,
) -> Tuple[PolicyCheckpoint, pd.DataFrame]:
    """Continue SAC from `checkpoint` under `env`'s task with a fresh replay buffer."""
    checkpoint.check_compatible(env.spec)
    agent = SacAgent.from_checkpoint(checkpoint, config, seed)
    curve = _run_sac(
        agent, env, config.finetune_steps, 0, config.batch_size, seed,
        show_progress=show_progress, label=f"finetune {env.spec.env_id}/{env.task.task_id}",
    )
    reached = steps_to_threshold(curve, config.success_threshold)
    logger.info(f"finetune {env.task.task_id}: steps to success {config.success_threshold:.2f} = {reached}")
    meta = {
        "seed": seed,
        "source_task": checkpoint.task_id,
        "steps": int(curve["step"].iloc[-1]),
        "steps_to_threshold": reached,
        "updates": agent.updates,
    }
    return agent.checkpoint(env.task.task_id, curve, meta), curve
