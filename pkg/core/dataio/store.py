from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from loguru import logger

from core.errors import MissingArtifactError
from .artifacts import file_checksum, load_artifact, save_artifact
from .cache_strategy import LRUCacheStrategy
from .interfaces import StorageInterface

ARTIFACT_SUFFIX = ".mgik"

# artifact name suffix -> command that produces it
PRODUCERS: Dict[str, str] = {
    "source_policy": "train-sac",
    "training_observations": "train-sac",
    "dataset": "collect",
    "labels": "label",
    "vae": "train-vae",
    "finetune": "finetune",
}


def producer_of(key: str) -> Optional[str]:
    """Command that writes artifact `key`, e.g. 'gridpick_dataset' -> 'collect'."""
    for suffix, command in PRODUCERS.items():
        if key.endswith(f"_{suffix}") or f"_{suffix}_" in key:
            return command
    return None


class FileStorage(StorageInterface):
    """One MGIK container per artifact in a flat directory."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}{ARTIFACT_SUFFIX}"

    def load(self, key: str) -> Optional[Any]:
        path = self.path_for(key)
        if not path.exists():
            return None
        return load_artifact(path)

    def save(self, key: str, value: Any) -> str:
        path = save_artifact(value, self.path_for(key))
        return file_checksum(path)

    def delete(self, key: str) -> bool:
        path = self.path_for(key)
        if path.exists():
            path.unlink()
            return True
        return False

    def exists(self, key: str) -> bool:
        return self.path_for(key).exists()

    def keys(self) -> List[str]:
        return sorted(p.stem for p in self.root.glob(f"*{ARTIFACT_SUFFIX}"))


class ArtifactStoreConfig:
    def __init__(self, root: Union[str, Path], cache_size: int = 8, cache_strategy: str = "lru"):
        self.root = Path(root)
        self.cache_size = cache_size
        self.cache_strategy = cache_strategy


class ArtifactStore:
    """Named artifacts of one experiment, read through an LRU cache."""

    def __init__(self, config: ArtifactStoreConfig):
        self.config = config
        self.storage = FileStorage(config.root)
        if config.cache_strategy != "lru":
            raise ValueError(f"Unsupported cache strategy: {config.cache_strategy}")
        self.cache = LRUCacheStrategy(config.cache_size)
        self.checksums: Dict[str, str] = {}

    @property
    def root(self) -> Path:
        return self.storage.root

    def get(self, key: str) -> Any:
        """Load `key`, raising MissingArtifactError naming the producing command."""
        value = self.cache.get(key)
        if value is not None:
            return value
        value = self.storage.load(key)
        if value is None:
            raise MissingArtifactError(key, producer_of(key))
        self.cache.set(key, value)
        return value

    def put(self, key: str, value: Any) -> str:
        checksum = self.storage.save(key, value)
        self.cache.set(key, value)
        self.checksums[key] = checksum
        logger.info(f"saved artifact {key} ({checksum[:12]})")
        return checksum

    def exists(self, key: str) -> bool:
        return key in self.cache.cache or self.storage.exists(key)

    def delete(self, key: str) -> bool:
        self.cache.delete(key)
        self.checksums.pop(key, None)
        return self.storage.delete(key)

    def checksum(self, key: str) -> str:
        if key not in self.checksums:
            if not self.storage.exists(key):
                raise MissingArtifactError(key, producer_of(key))
            self.checksums[key] = file_checksum(self.storage.path_for(key))
        return self.checksums[key]

    def keys(self) -> List[str]:
        return self.storage.keys()

    def get_cache_stats(self) -> Dict[str, int]:
        return self.cache.get_stats()
