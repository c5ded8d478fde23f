import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import pandas as pd
from loguru import logger

from core.dataio import ArtifactStore
from core.envs import Env, make_env
from .manifest import RunManifest


def derive_seed(seed: int, *parts: Any) -> int:
    """Stable per-purpose seed, so stages never share a random stream."""
    digest = hashlib.sha256(":".join([str(seed), *map(str, parts)]).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def artifact_key(env_id: str, name: str) -> str:
    return f"{env_id}_{name}"


@dataclass
class RunContext:
    """What every stage sees: validated config, artifact store and the run manifest."""

    config: Any
    store: ArtifactStore
    manifest: RunManifest
    seed: int
    jobs: int = 1
    show_progress: bool = True

    @property
    def out_dir(self) -> Path:
        return self.store.root

    def seed_for(self, *parts: Any) -> int:
        return derive_seed(self.seed, *parts)

    def make_env(self, env_id: str, task_id: Optional[str] = None) -> Env:
        return make_env(env_id, task_id, self.config.env)

    def load(self, env_id: str, name: str) -> Any:
        key = artifact_key(env_id, name)
        value = self.store.get(key)
        self.manifest.record_artifact(key, self.store.checksum(key))
        return value

    def exists(self, env_id: str, name: str) -> bool:
        return self.store.exists(artifact_key(env_id, name))

    def save(self, env_id: str, name: str, value: Any) -> str:
        key = artifact_key(env_id, name)
        checksum = self.store.put(key, value)
        self.manifest.record_artifact(key, checksum)
        return checksum

    def output_path(self, name: str) -> Path:
        return self.out_dir / name

    def write_csv(self, frame: pd.DataFrame, name: str) -> Path:
        path = self.output_path(name)
        frame.to_csv(path, index=False, encoding="utf-8", float_format="%.6g")
        self.manifest.record_output(path)
        logger.info(f"wrote {path} ({len(frame)} rows)")
        return path

    def upsert_csv(self, frame: pd.DataFrame, name: str, keys: Sequence[str]) -> pd.DataFrame:
        """Merge `frame` into an existing CSV, replacing rows with the same key columns."""
        path = self.output_path(name)
        if path.exists():
            previous = pd.read_csv(path, encoding="utf-8")
            if set(previous.columns) == set(frame.columns):
                merged = frame.set_index(list(keys))
                kept = previous.set_index(list(keys))
                kept = kept.loc[~kept.index.isin(merged.index)]
                frame = pd.concat([kept, merged]).reset_index()[list(frame.columns)]
        frame = frame.sort_values(list(keys), kind="stable").reset_index(drop=True)
        self.write_csv(frame, name)
        return frame

    def write_text(self, text: str, name: str) -> Path:
        path = self.output_path(name)
        path.write_text(text + "\n", encoding="utf-8")
        self.manifest.record_output(path)
        return path

    def write_figure(self, render: Callable[[Path], Path], name: str) -> Path:
        path = render(self.output_path(name))
        self.manifest.record_output(path)
        return path

    def list_outputs(self, pattern: str) -> List[Path]:
        return sorted(self.out_dir.glob(pattern))
