from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict
from tqdm import tqdm

from core.envs.base import Env, ObservationKind, seed_rng
from core.errors import LabelBudgetError, ShapeMismatchError
from .artifacts import register_artifact

PIXEL_SCALE = 255.0


class DatasetMeta(BaseModel):
    model_config = ConfigDict(extra="forbid")

    env_id: str
    task_id: str
    policy_tag: str
    seed: int
    obs_kind: ObservationKind
    # observations streamed before any record cap was applied
    n_collected: int = 0


def quantize_observation(observation: np.ndarray, kind: ObservationKind) -> np.ndarray:
    # pixel palettes are multiples of 1/255, so uint8 storage round-trips exactly
    if kind == ObservationKind.PIXEL:
        stored = np.rint(observation * PIXEL_SCALE).astype(np.uint8)
        if np.array_equal(stored.astype(np.float32) / PIXEL_SCALE, observation):
            return stored
    return np.asarray(observation, dtype=np.float32)


@register_artifact("dataset")
class ObservationDataset:
    """Offline observations with the oracle class of each, hidden until labeled."""

    def __init__(self, observations: np.ndarray, oracle_labels: np.ndarray, episode_ids: np.ndarray, source_meta: DatasetMeta):
        if not (len(observations) == len(oracle_labels) == len(episode_ids)):
            raise ShapeMismatchError(
                "observations, labels and episode ids must have equal length",
                actual=(len(observations), len(oracle_labels), len(episode_ids)),
            )
        self.observations = observations
        self.oracle_labels = np.asarray(oracle_labels, dtype=np.int8)
        self.episode_ids = np.asarray(episode_ids, dtype=np.int32)
        self.source_meta = source_meta

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def obs_shape(self) -> Tuple[int, ...]:
        return tuple(self.observations.shape[1:])

    @property
    def obs_kind(self) -> ObservationKind:
        return self.source_meta.obs_kind

    def get(self, indices: Union[Sequence[int], np.ndarray]) -> np.ndarray:
        """float32 observations at `indices`."""
        batch = self.observations[np.asarray(indices)]
        if batch.dtype == np.uint8:
            return batch.astype(np.float32) / PIXEL_SCALE
        return batch.astype(np.float32, copy=False)

    def subset(self, indices: Union[Sequence[int], np.ndarray]) -> "ObservationDataset":
        indices = np.asarray(indices)
        return ObservationDataset(
            self.observations[indices], self.oracle_labels[indices], self.episode_ids[indices], self.source_meta
        )

    def class_counts(self) -> Dict[int, int]:
        classes, counts = np.unique(self.oracle_labels, return_counts=True)
        return {int(c): int(n) for c, n in zip(classes, counts)}

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "index": np.arange(len(self)),
            "class": self.oracle_labels.astype(int),
            "episode_id": self.episode_ids.astype(int),
        })

    def write_summary_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.summary_frame().to_csv(path, index=False, encoding="utf-8")
        return path

    def to_sections(self) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        sections = {
            "observations": self.observations,
            "oracle_labels": self.oracle_labels,
            "episode_ids": self.episode_ids,
        }
        return sections, self.source_meta.model_dump(mode="json")

    @classmethod
    def from_sections(cls, sections: Dict[str, np.ndarray], meta: Dict[str, Any]) -> "ObservationDataset":
        return cls(sections["observations"], sections["oracle_labels"], sections["episode_ids"], DatasetMeta(**meta))


class DatasetSink:
    """Streaming builder. With `max_records`, keeps a uniform reservoir of the stream."""

    def __init__(self, obs_kind: ObservationKind, max_records: Optional[int] = None, seed: int = 0):
        self.obs_kind = obs_kind
        self.max_records = max_records
        self._rng = seed_rng(seed)
        self._records: List[Tuple[int, np.ndarray, int, int]] = []
        self.n_seen = 0

    def append(self, observation: np.ndarray, label: int, episode_id: int) -> None:
        record = (self.n_seen, quantize_observation(observation, self.obs_kind), int(label), int(episode_id))
        if self.max_records is None or len(self._records) < self.max_records:
            self._records.append(record)
        else:
            slot = int(self._rng.integers(self.n_seen + 1))
            if slot < self.max_records:
                self._records[slot] = record
        self.n_seen += 1

    def __len__(self) -> int:
        return len(self._records)

    def build(self, env_id: str, task_id: str, policy_tag: str, seed: int) -> ObservationDataset:
        records = sorted(self._records, key=lambda r: r[0])
        meta = DatasetMeta(
            env_id=env_id, task_id=task_id, policy_tag=policy_tag, seed=seed, obs_kind=self.obs_kind, n_collected=self.n_seen
        )
        if not records:
            raise ShapeMismatchError("Cannot build a dataset from an empty sink")
        return ObservationDataset(
            np.stack([r[1] for r in records]),
            np.array([r[2] for r in records], dtype=np.int8),
            np.array([r[3] for r in records], dtype=np.int32),
            meta,
        )


def collect(
    policy: Optional[Any],
    env: Env,
    n_steps: int,
    seed: int,
    random_prefix: int = 0,
    max_records: Optional[int] = None,
    policy_tag: Optional[str] = None,
    show_progress: bool = False,
) -> ObservationDataset:
    """Roll `policy` (uniform random when None) in `env` and record every observation.

    The first `random_prefix` steps always act uniformly at random.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = seed_rng(seed)
    sink = DatasetSink(env.spec.obs_kind, max_records=max_records, seed=seed)
    episode = 0
    obs = env.reset(int(rng.integers(2 ** 63)))
    for step in tqdm(range(n_steps), desc=f"collect {env.spec.env_id}", disable=not show_progress):
        sink.append(obs, env.true_class(), episode)
        if policy is None or step < random_prefix:
            action = env.sample_action(rng)
        else:
            action = policy.act(obs, deterministic=False)
        obs, _, done = env.step(action)
        if done:
            episode += 1
            obs = env.reset(int(rng.integers(2 ** 63)))
    tag = policy_tag or ("random" if policy is None else f"policy+random{random_prefix}")
    dataset = sink.build(env.spec.env_id, env.task.task_id, tag, seed)
    logger.info(f"collected {len(dataset)} observations over {episode} episodes ({tag}), classes {dataset.class_counts()}")
    return dataset


# ----------------------------------------------------------------- labeling


class LabeledSample(NamedTuple):
    index: int
    label: int


@dataclass
class LabelBudget:
    max_labels: int
    revealed: Set[int] = field(default_factory=set)

    @property
    def spent(self) -> int:
        return len(self.revealed)

    @property
    def remaining(self) -> int:
        return self.max_labels - self.spent

    def reveal(self, index: int) -> bool:
        """Charge one label for `index`. Re-revealing an index is free."""
        if index in self.revealed:
            return False
        if self.spent >= self.max_labels:
            raise LabelBudgetError(f"Label budget of {self.max_labels} exhausted")
        self.revealed.add(index)
        return True


@register_artifact("labels")
class LabelSet:
    """Revealed labels. `n_collected` counts the observations streamed before the dataset was capped."""

    def __init__(self, samples: List[LabeledSample], dataset_size: int, max_labels: int, n_collected: Optional[int] = None):
        self.samples = list(samples)
        self.dataset_size = dataset_size
        self.max_labels = max_labels
        self.n_collected = max(n_collected or 0, dataset_size)

    @classmethod
    def for_dataset(cls, samples: List[LabeledSample], dataset: ObservationDataset, max_labels: int) -> "LabelSet":
        return cls(samples, len(dataset), max_labels, dataset.source_meta.n_collected)

    @property
    def label_fraction(self) -> float:
        """Share of the collected observations that carry a label."""
        return len(self.samples) / self.n_collected if self.n_collected else 0.0

    def __len__(self) -> int:
        return len(self.samples)

    def indices(self) -> np.ndarray:
        return np.array([s.index for s in self.samples], dtype=np.int64)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def to_sections(self) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        return (
            {"indices": self.indices(), "labels": self.labels()},
            {"dataset_size": self.dataset_size, "max_labels": self.max_labels, "n_collected": self.n_collected},
        )

    @classmethod
    def from_sections(cls, sections: Dict[str, np.ndarray], meta: Dict[str, Any]) -> "LabelSet":
        samples = [LabeledSample(int(i), int(y)) for i, y in zip(sections["indices"], sections["labels"])]
        return cls(samples, meta["dataset_size"], meta["max_labels"], meta.get("n_collected"))


def reveal_labels(dataset: ObservationDataset, indices: Sequence[int], budget: LabelBudget) -> List[LabeledSample]:
    samples = []
    for index in indices:
        index = int(index)
        if budget.reveal(index):
            samples.append(LabeledSample(index, int(dataset.oracle_labels[index])))
    return samples


def label_random_subset(dataset: ObservationDataset, budget: LabelBudget, seed: int) -> List[LabeledSample]:
    """Reveal labels for `budget.remaining` uniformly drawn distinct indices."""
    if budget.max_labels > len(dataset):
        raise LabelBudgetError(f"Budget of {budget.max_labels} labels exceeds the dataset size {len(dataset)}")
    if budget.remaining <= 0:
        raise LabelBudgetError(f"Label budget of {budget.max_labels} already spent")
    rng = seed_rng(seed)
    candidates = np.setdiff1d(np.arange(len(dataset)), np.fromiter(budget.revealed, dtype=np.int64, count=budget.spent))
    chosen = rng.choice(candidates, size=budget.remaining, replace=False)
    samples = reveal_labels(dataset, np.sort(chosen), budget)
    logger.info(f"revealed {len(samples)} labels ({budget.spent}/{budget.max_labels} of budget)")
    return samples
