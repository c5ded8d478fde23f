from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .base import Env, TaskSpec
from .grid_pick import GRID_CLASS_NAMES, GridPickEnv, GridPickParams
from .reacher import TARGET_COLOURS, ReacherEnv, ReacherParams

ENV_IDS = ("gridpick", "reacher")

# task id -> (ball colours placed at reset, rewarded colours)
GRIDPICK_TASKS: Dict[str, Tuple[Tuple[str, ...], Tuple[str, ...]]] = {
    "source": (("green", "red"), ("green",)),
    "target1": (("red",), ("red",)),
    "target2": (("green", "red"), ("green", "red")),
    "target3": (("green", "red"), ("red",)),
}

REACHER_TASKS: Tuple[str, ...] = tuple(f"reach_{colour}" for colour in TARGET_COLOURS)

CLASS_NAMES = {"gridpick": GRID_CLASS_NAMES, "reacher": TARGET_COLOURS}

SOURCE_TASKS = {"gridpick": "source", "reacher": "reach_blue"}
TARGET_TASKS = {
    "gridpick": ("target1", "target2", "target3"),
    "reacher": ("reach_red", "reach_green", "reach_blue", "reach_yellow"),
}


class EnvSettings(BaseModel):
    """Environment block of the experiment config."""

    model_config = ConfigDict(extra="forbid")

    gridpick: GridPickParams = Field(default_factory=GridPickParams)
    reacher: ReacherParams = Field(default_factory=ReacherParams)
    reacher_shaping: float = Field(default=1.0, ge=0.0, description="scale of the potential-based distance shaping")


def task_spec(env_id: str, task_id: str, settings: Optional[EnvSettings] = None) -> TaskSpec:
    settings = settings or EnvSettings()
    if env_id == "gridpick":
        if task_id not in GRIDPICK_TASKS:
            raise ValueError(f"Unknown GridPick task '{task_id}', expected one of {sorted(GRIDPICK_TASKS)}")
        _, rewarded = GRIDPICK_TASKS[task_id]
        return TaskSpec(task_id=task_id, rewarded_targets=frozenset(rewarded))
    if env_id == "reacher":
        if task_id not in REACHER_TASKS:
            raise ValueError(f"Unknown Reacher task '{task_id}', expected one of {list(REACHER_TASKS)}")
        return TaskSpec(
            task_id=task_id,
            rewarded_targets=frozenset({task_id.split("_", 1)[1]}),
            shaping_scale=settings.reacher_shaping,
        )
    raise ValueError(f"Unknown environment '{env_id}', expected one of {ENV_IDS}")


def make_env(env_id: str, task_id: Optional[str] = None, settings: Optional[EnvSettings] = None) -> Env:
    settings = settings or EnvSettings()
    task_id = task_id or SOURCE_TASKS.get(env_id, "")
    task = task_spec(env_id, task_id, settings)
    if env_id == "gridpick":
        objects, _ = GRIDPICK_TASKS[task_id]
        return GridPickEnv(task, objects=objects, params=settings.gridpick)
    return ReacherEnv(task, params=settings.reacher)


def success_colours(env_id: str, task_id: str) -> Tuple[str, ...]:
    """Colours whose pick/reach counts are reported for a task, in table order."""
    if env_id == "gridpick":
        objects, _ = GRIDPICK_TASKS[task_id]
        return tuple(c for c in ("green", "red") if c in objects)
    return (task_id.split("_", 1)[1],)
