from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.errors import InvalidActionError
from .base import ActionKind, ActionSpec, Env, EnvSpec, ObservationKind, TaskSpec, counts_by_colour, seed_rng

BALL_COLOURS: Tuple[str, ...] = ("red", "green")
GRID_CLASS_NAMES: Tuple[str, ...] = ("red_only", "green_only", "both", "neither")

TURN_LEFT, TURN_RIGHT, FORWARD, PICKUP = 0, 1, 2, 3
ACTION_NAMES = ("turn_left", "turn_right", "forward", "pickup")

# N, E, S, W as (d_row, d_col)
HEADINGS = ((-1, 0), (0, 1), (1, 0), (0, -1))

# palette entries are multiples of 1/255 so uint8 storage is lossless
PALETTE: Dict[str, np.ndarray] = {
    "floor": np.array([0, 0, 0], dtype=np.float32),
    "wall": np.array([128, 128, 128], dtype=np.float32) / 255.0,
    "agent": np.array([255, 255, 255], dtype=np.float32) / 255.0,
    "red": np.array([255, 0, 0], dtype=np.float32) / 255.0,
    "green": np.array([0, 255, 0], dtype=np.float32) / 255.0,
}


class GridPickParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid_size: int = Field(default=8, ge=4, description="cells per side, border walls included")
    view_cells: int = Field(default=5, ge=3, description="egocentric window side, odd")
    cell_px: int = Field(default=8, ge=2)
    max_steps: int = Field(default=20, ge=1)

    @field_validator("view_cells")
    @classmethod
    def _odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("view_cells must be odd so the agent sits on the centre column")
        return value


def _disk_mask(px: int) -> np.ndarray:
    centre = (px - 1) / 2.0
    yy, xx = np.mgrid[0:px, 0:px]
    return (yy - centre) ** 2 + (xx - centre) ** 2 <= (px * 0.4) ** 2


def _triangle_mask(px: int) -> np.ndarray:
    # apex up: the egocentric view always faces up
    mask = np.zeros((px, px), dtype=bool)
    centre = (px - 1) / 2.0
    for row in range(1, px - 1):
        half = (row - 1) * 0.5 + 0.5
        mask[row, int(np.ceil(centre - half)):int(np.floor(centre + half)) + 1] = True
    return mask


class GridPickEnv(Env):
    """Single-room gridworld with two balls, rendered egocentrically.

    The agent sees `view_cells x view_cells` cells: it stands on the bottom row,
    centre column, facing up. Balls block movement; `pickup` takes the ball in
    the cell directly ahead.
    """

    def __init__(self, task: TaskSpec, objects: Sequence[str] = BALL_COLOURS, params: Optional[GridPickParams] = None):
        self.params = params or GridPickParams()
        for colour in objects:
            if colour not in BALL_COLOURS:
                raise ValueError(f"Unknown ball colour '{colour}'")
        self.object_colours = tuple(objects)
        self.task = task
        self.grid_size = self.params.grid_size
        self.max_steps = self.params.max_steps
        side = self.params.view_cells * self.params.cell_px
        self.spec = EnvSpec(
            env_id="gridpick",
            obs_kind=ObservationKind.PIXEL,
            obs_shape=(side, side, 3),
            n_classes=len(GRID_CLASS_NAMES),
            action=ActionSpec(kind=ActionKind.DISCRETE, n=len(ACTION_NAMES)),
            class_names=GRID_CLASS_NAMES,
        )
        self._ball_mask = _disk_mask(self.params.cell_px)
        self._agent_mask = _triangle_mask(self.params.cell_px)

        self.agent_pose: Tuple[int, int, int] = (1, 1, 0)
        self.objects: List[Tuple[Tuple[int, int], str]] = []
        self.steps_elapsed = 0
        self._done = True
        self._terminal = False
        self._picked: List[str] = []
        self._rewarded_at_reset = 0

    # ------------------------------------------------------------------ episode

    def reset(self, seed: int) -> np.ndarray:
        rng = seed_rng(seed)
        interior = [(r, c) for r in range(1, self.grid_size - 1) for c in range(1, self.grid_size - 1)]
        picks = rng.choice(len(interior), size=1 + len(self.object_colours), replace=False)
        agent_cell = interior[picks[0]]
        heading = int(rng.integers(4))
        self.agent_pose = (agent_cell[0], agent_cell[1], heading)
        self.objects = [(interior[i], colour) for i, colour in zip(picks[1:], self.object_colours)]
        self.steps_elapsed = 0
        self._done = False
        self._terminal = False
        self._picked = []
        self._rewarded_at_reset = sum(1 for c in self.object_colours if c in self.task.rewarded_targets)
        return self.observation()

    def step(self, action) -> Tuple[np.ndarray, float, bool]:
        action = self._validate_action(action)
        if self._done:
            raise InvalidActionError("step() called on a finished episode, call reset() first")

        row, col, heading = self.agent_pose
        ahead = (row + HEADINGS[heading][0], col + HEADINGS[heading][1])
        reward = 0.0

        if action == TURN_LEFT:
            self.agent_pose = (row, col, (heading - 1) % 4)
        elif action == TURN_RIGHT:
            self.agent_pose = (row, col, (heading + 1) % 4)
        elif action == FORWARD:
            if self._is_interior(ahead) and self._object_at(ahead) is None:
                self.agent_pose = (ahead[0], ahead[1], heading)
        elif action == PICKUP:
            index = self._object_at(ahead)
            if index is not None:
                _, colour = self.objects.pop(index)
                self._picked.append(colour)
                if colour in self.task.rewarded_targets:
                    reward = self.task.reward_per_pick
                logger.debug(f"gridpick: picked {colour} at step {self.steps_elapsed}")

        self.steps_elapsed += 1
        remaining = [c for _, c in self.objects if c in self.task.rewarded_targets]
        # tasks whose rewarded colours are absent from the room only end on the step limit
        self._terminal = self.task.terminal_on_completion and self._rewarded_at_reset > 0 and not remaining
        self._done = self._terminal or self.steps_elapsed >= self.max_steps
        return self.observation(), reward, self._done

    @property
    def last_terminal(self) -> bool:
        return self._terminal

    def episode_successes(self) -> dict:
        return counts_by_colour(BALL_COLOURS, self._picked)

    def sample_action(self, rng: np.random.Generator) -> int:
        return int(rng.integers(len(ACTION_NAMES)))

    # -------------------------------------------------------------- perception

    def view_cells(self) -> List[List[str]]:
        """Content of every view cell: 'wall', 'floor', 'agent' or a ball colour."""
        size = self.params.view_cells
        row, col, heading = self.agent_pose
        fwd = HEADINGS[heading]
        right = HEADINGS[(heading + 1) % 4]
        balls = {pos: colour for pos, colour in self.objects}
        cells = []
        for vr in range(size):
            line = []
            for vc in range(size):
                f = (size - 1) - vr
                lateral = vc - size // 2
                pos = (row + f * fwd[0] + lateral * right[0], col + f * fwd[1] + lateral * right[1])
                if f == 0 and lateral == 0:
                    line.append("agent")
                elif not self._is_interior(pos):
                    line.append("wall")
                else:
                    line.append(balls.get(pos, "floor"))
            cells.append(line)
        return cells

    def observation(self) -> np.ndarray:
        px = self.params.cell_px
        size = self.params.view_cells
        image = np.zeros((size * px, size * px, 3), dtype=np.float32)
        for vr, line in enumerate(self.view_cells()):
            for vc, content in enumerate(line):
                tile = image[vr * px:(vr + 1) * px, vc * px:(vc + 1) * px]
                if content == "wall":
                    tile[:] = PALETTE["wall"]
                elif content == "agent":
                    tile[self._agent_mask] = PALETTE["agent"]
                elif content in BALL_COLOURS:
                    tile[self._ball_mask] = PALETTE[content]
        return np.clip(image, 0.0, 1.0)

    def visible_colours(self) -> set:
        return {content for line in self.view_cells() for content in line if content in BALL_COLOURS}

    def true_class(self) -> int:
        return class_from_colours(self.visible_colours())

    # ------------------------------------------------------------------ helpers

    def _is_interior(self, pos: Tuple[int, int]) -> bool:
        return 0 < pos[0] < self.grid_size - 1 and 0 < pos[1] < self.grid_size - 1

    def _object_at(self, pos: Tuple[int, int]) -> Optional[int]:
        for index, (obj_pos, _) in enumerate(self.objects):
            if obj_pos == pos:
                return index
        return None

    @staticmethod
    def _validate_action(action) -> int:
        if isinstance(action, np.ndarray):
            if action.size != 1:
                raise InvalidActionError(f"GridPick expects a scalar action, got shape {action.shape}")
            action = action.item()
        if isinstance(action, (bool, float)) or not isinstance(action, (int, np.integer)):
            raise InvalidActionError(f"GridPick action must be an integer, got {action!r}")
        if not 0 <= int(action) < len(ACTION_NAMES):
            raise InvalidActionError(f"GridPick action {action} outside {{0..{len(ACTION_NAMES) - 1}}}")
        return int(action)


def class_from_colours(colours) -> int:
    red, green = "red" in colours, "green" in colours
    if red and not green:
        return 1
    if green and not red:
        return 2
    if red and green:
        return 3
    return 4
