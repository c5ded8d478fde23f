from .agent import CURVE_COLUMNS, FrozenPolicy, PolicyCheckpoint, SacAgent, policy_action
from .config import SacConfig
from .replay_buffer import Batch, ReplayBuffer, Transition
from .training import EpisodeStats, evaluate_policy, fine_tune, smooth, steps_to_threshold, train_source

__all__ = [
    'CURVE_COLUMNS', 'FrozenPolicy', 'PolicyCheckpoint', 'SacAgent', 'policy_action', 'SacConfig',
    'Batch', 'ReplayBuffer', 'Transition',
    'EpisodeStats', 'evaluate_policy', 'fine_tune', 'smooth', 'steps_to_threshold', 'train_source',
]
