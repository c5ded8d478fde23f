from .base import ActionKind, ActionSpec, Env, EnvSpec, ObservationKind, TaskSpec, seed_rng
from .grid_pick import ACTION_NAMES, BALL_COLOURS, GRID_CLASS_NAMES, PALETTE, GridPickEnv, GridPickParams, class_from_colours
from .reacher import FEATURE_DIM, FEATURE_NAMES, TARGET_COLOURS, ReacherEnv, ReacherParams, forward_kinematics, quadrant
from .tasks import (
    CLASS_NAMES,
    ENV_IDS,
    GRIDPICK_TASKS,
    REACHER_TASKS,
    SOURCE_TASKS,
    TARGET_TASKS,
    EnvSettings,
    make_env,
    success_colours,
    task_spec,
)

__all__ = [
    'ActionKind', 'ActionSpec', 'Env', 'EnvSpec', 'ObservationKind', 'TaskSpec', 'seed_rng',
    'ACTION_NAMES', 'BALL_COLOURS', 'GRID_CLASS_NAMES', 'PALETTE', 'GridPickEnv', 'GridPickParams', 'class_from_colours',
    'FEATURE_DIM', 'FEATURE_NAMES', 'TARGET_COLOURS', 'ReacherEnv', 'ReacherParams', 'forward_kinematics', 'quadrant',
    'CLASS_NAMES', 'ENV_IDS', 'GRIDPICK_TASKS', 'REACHER_TASKS', 'SOURCE_TASKS', 'TARGET_TASKS',
    'EnvSettings', 'make_env', 'success_colours', 'task_spec',
]
