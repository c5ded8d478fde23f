import copy
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import dotenv
import yaml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.envs import ENV_IDS, SOURCE_TASKS, TARGET_TASKS, EnvSettings
from core.errors import ConfigError
from core.imagination import VaeTrainConfig
from core.nets import NetSettings
from core.sac import SacConfig
from core.transfer import RULE_PRESETS, RuleTable

CONFIG_VERSION = "1"
ENV_ARTIFACT_DIR = "MAGIK_ARTIFACT_DIR"
ENV_LOG_LEVEL = "MAGIK_LOG_LEVEL"

PathLike = Union[str, Path]
EnvId = Literal["gridpick", "reacher"]


class ConfigModel(BaseModel):
    """Base for every config block: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


class SacBlock(ConfigModel):
    gridpick: SacConfig = Field(default_factory=lambda: SacConfig(total_steps=150_000, early_stop_success=0.95))
    reacher: SacConfig = Field(
        default_factory=lambda: SacConfig(total_steps=200_000, random_prefix_steps=20_000, eval_episodes=20)
    )

    def for_env(self, env_id: str) -> SacConfig:
        return getattr(self, env_id)


class VaeBlock(ConfigModel):
    gridpick: VaeTrainConfig = Field(default_factory=lambda: VaeTrainConfig(epochs=200, label_budget=600))
    reacher: VaeTrainConfig = Field(default_factory=lambda: VaeTrainConfig(epochs=300, label_budget=250))

    def for_env(self, env_id: str) -> VaeTrainConfig:
        return getattr(self, env_id)


class CollectSettings(ConfigModel):
    """How the VAE dataset is gathered.

    ``training`` keeps the observations visited while training the source
    policy, ``random`` rolls a uniform policy, ``policy`` rolls the trained
    source policy after ``random_prefix`` uniform steps.
    """

    mode: Literal["training", "random", "policy"] = "training"
    n_steps: int = Field(default=50_000, ge=1, description="steps rolled in random/policy mode")
    random_prefix: int = Field(default=0, ge=0)
    max_records: Optional[int] = Field(default=60_000, ge=1, description="reservoir cap on stored observations")


class CollectBlock(ConfigModel):
    gridpick: CollectSettings = Field(default_factory=CollectSettings)
    reacher: CollectSettings = Field(default_factory=CollectSettings)

    def for_env(self, env_id: str) -> CollectSettings:
        return getattr(self, env_id)


class TransferBlock(ConfigModel):
    # env -> target task -> rule table; a plain {class: [classes]} mapping is accepted too
    rules: Dict[EnvId, Dict[str, RuleTable]] = Field(
        default_factory=lambda: {
            env_id: {task: RuleTable.from_mapping(mapping) for task, mapping in tasks.items()}
            for env_id, tasks in RULE_PRESETS.items()
        }
    )
    confidence_floor: Optional[float] = Field(default=None, gt=0.0, le=1.0)

    @field_validator("rules", mode="before")
    @classmethod
    def _expand_mappings(cls, value: Any) -> Any:
        if not isinstance(value, dict):
            return value
        expanded = {}
        for env_id, tasks in value.items():
            if not isinstance(tasks, dict):
                expanded[env_id] = tasks
                continue
            expanded[env_id] = {
                task: RuleTable.from_mapping(table) if isinstance(table, dict) and "rules" not in table else table
                for task, table in tasks.items()
            }
        return expanded

    @model_validator(mode="after")
    def _known_tasks(self) -> "TransferBlock":
        for env_id, tasks in self.rules.items():
            known = [SOURCE_TASKS[env_id], *TARGET_TASKS[env_id]]
            unknown = sorted(set(tasks) - set(known))
            if unknown:
                raise ValueError(f"unknown {env_id} tasks {unknown}, expected from {known}")
        return self

    def rules_for(self, env_id: str, task_id: str) -> RuleTable:
        return self.rules.get(env_id, {}).get(task_id, RuleTable())


class EvalBlock(ConfigModel):
    gridpick_episodes: int = Field(default=10, ge=1)
    reacher_episodes: int = Field(default=20, ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    jobs: int = Field(default=1, ge=1)
    deterministic: bool = False

    def episodes_for(self, env_id: str) -> int:
        return getattr(self, f"{env_id}_episodes")


class SweepBlock(ConfigModel):
    diversity_env: EnvId = "reacher"
    diversity_prefixes: List[int] = Field(default_factory=lambda: [5_000, 10_000, 30_000, 50_000], min_length=1)
    diversity_steps: int = Field(default=60_000, ge=1)
    low_label_env: EnvId = "gridpick"
    low_label_budget: int = Field(default=120, ge=1)


class PathsBlock(ConfigModel):
    artifact_dir: str = "./artifacts"
    cache_size: int = Field(default=8, ge=0)


class ExperimentConfig(ConfigModel):
    """Everything one experiment needs. Validated before any stage runs."""

    config_version: Literal["1"] = CONFIG_VERSION
    experiment_id: str = "magik"
    seed: int = 1
    environments: List[EnvId] = Field(default_factory=lambda: list(ENV_IDS), min_length=1)
    env: EnvSettings = Field(default_factory=EnvSettings)
    nets: NetSettings = Field(default_factory=NetSettings)
    sac: SacBlock = Field(default_factory=SacBlock)
    vae: VaeBlock = Field(default_factory=VaeBlock)
    collect: CollectBlock = Field(default_factory=CollectBlock)
    transfer: TransferBlock = Field(default_factory=TransferBlock)
    eval: EvalBlock = Field(default_factory=EvalBlock)
    sweep: SweepBlock = Field(default_factory=SweepBlock)
    paths: PathsBlock = Field(default_factory=PathsBlock)


def format_validation_error(error: ValidationError) -> List[str]:
    """One ``dotted.path: message`` line per failing field."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return lines


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _read_file(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        if path.suffix == ".json":
            data = json.load(f)
        elif path.suffix in (".yaml", ".yml"):
            data = yaml.safe_load(f)
        else:
            raise ConfigError(f"Unsupported config format '{path.suffix}', use .yaml, .yml or .json")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _merge_config(target: Dict[str, Any], source: Dict[str, Any]) -> None:
    for key, value in source.items():
        if key in target and isinstance(target[key], dict) and isinstance(value, dict):
            _merge_config(target[key], value)
        else:
            target[key] = value


class ConfigManager:
    """Loads, overrides and validates an ExperimentConfig.

    Precedence, lowest first: schema defaults, config file, explicit
    overrides, ``MAGIK_ARTIFACT_DIR``.
    """

    def __init__(self, env_file: PathLike = ".env"):
        self.env_file = Path(env_file)
        if self.env_file.exists():
            dotenv.load_dotenv(self.env_file)
            logger.debug(f"loaded environment from {self.env_file}")
        self.config: Dict[str, Any] = {}
        self.config_path: Optional[Path] = None
        self.model: ExperimentConfig = self._validate({})

    def load(self, path: Optional[PathLike] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
        raw: Dict[str, Any] = {}
        if path is not None:
            self.config_path = Path(path)
            raw = _read_file(self.config_path)
        if overrides:
            _merge_config(raw, copy.deepcopy(overrides))
        artifact_dir = os.environ.get(ENV_ARTIFACT_DIR)
        if artifact_dir:
            raw.setdefault("paths", {})["artifact_dir"] = artifact_dir
        self.model = self._validate(raw)
        self.config = raw
        logger.info(f"config {self.config_path or '<defaults>'} loaded, hash {config_hash(self.model)[:12]}")
        return self.model

    def _validate(self, raw: Dict[str, Any]) -> ExperimentConfig:
        version = raw.get("config_version", CONFIG_VERSION)
        if str(version) != CONFIG_VERSION:
            raise ConfigError(
                f"Unsupported config_version {version!r}, this build reads version {CONFIG_VERSION}",
                field_errors=[f"config_version: expected {CONFIG_VERSION!r}"],
            )
        raw = {**raw, "config_version": CONFIG_VERSION}
        try:
            return ExperimentConfig(**raw)
        except ValidationError as e:
            fields = format_validation_error(e)
            source = self.config_path or "config"
            raise ConfigError(f"{source} is invalid: " + "; ".join(fields), field_errors=fields)

    def get(self, key: str, default: Any = None) -> Any:
        """Dotted lookup on the validated config, e.g. ``vae.gridpick.label_budget``."""
        value: Any = self.model.model_dump()
        try:
            for part in key.split("."):
                value = value[part]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key: str, value: Any) -> ExperimentConfig:
        """Set a dotted key and re-validate. The old config stays on failure."""
        raw = self.model.model_dump(mode="json")
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
        self.model = self._validate(raw)
        logger.debug(f"config {key} = {value!r}")
        return self.model

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        data = self.model.model_dump(mode="json")
        with open(path, "w", encoding="utf-8") as f:
            if path.suffix == ".json":
                json.dump(data, f, indent=2, ensure_ascii=False)
            else:
                yaml.safe_dump(data, f, default_flow_style=False, allow_unicode=True, sort_keys=False)
        logger.info(f"saved config to {path}")
        return path

    def to_dict(self) -> Dict[str, Any]:
        return self.model.model_dump(mode="json")


def load_config(path: Optional[PathLike] = None, overrides: Optional[Dict[str, Any]] = None, env_file: PathLike = ".env") -> ExperimentConfig:
    return ConfigManager(env_file).load(path, overrides)


def log_level_from_env(default: str = "INFO") -> str:
    return os.environ.get(ENV_LOG_LEVEL, default).upper()
