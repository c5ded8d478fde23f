import math
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, Field

from core.errors import InvalidActionError, MagikError
from .base import ActionKind, ActionSpec, Env, EnvSpec, ObservationKind, TaskSpec, counts_by_colour, seed_rng

TARGET_COLOURS: Tuple[str, ...] = ("red", "green", "blue", "yellow")
FEATURE_NAMES: Tuple[str, ...] = (
    "cos_q1", "sin_q1", "cos_q2", "sin_q2", "omega1", "omega2", "tip_x", "tip_y", "target_x", "target_y",
    "is_red", "is_green", "is_blue", "is_yellow", "delta_x", "delta_y", "distance",
)
FEATURE_DIM = len(FEATURE_NAMES)

RGB = {
    "red": (230, 40, 40),
    "green": (40, 200, 60),
    "blue": (40, 90, 230),
    "yellow": (235, 210, 30),
}


class ReacherParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    link_lengths: Tuple[float, float] = (0.1, 0.1)
    dt: float = Field(default=0.05, gt=0)
    damping: float = Field(default=0.1, ge=0)
    reach_threshold: float = Field(default=0.05, gt=0)
    max_steps: int = Field(default=150, ge=1)
    target_radius: Tuple[float, float] = (0.06, 0.18)
    # keeps targets away from the quadrant borders, radians
    quadrant_margin: float = Field(default=0.15, ge=0)


def forward_kinematics(joint_angles, link_lengths=(0.1, 0.1)) -> np.ndarray:
    t1, t2 = float(joint_angles[0]), float(joint_angles[1])
    l1, l2 = link_lengths
    return np.array([
        l1 * math.cos(t1) + l2 * math.cos(t1 + t2),
        l1 * math.sin(t1) + l2 * math.sin(t1 + t2),
    ])


def quadrant(x: float, y: float) -> int:
    if x >= 0 and y >= 0:
        return 0
    if x < 0 and y >= 0:
        return 1
    if x < 0:
        return 2
    return 3


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2 * math.pi) - math.pi


class ReacherEnv(Env):
    """Two-link planar arm with one coloured target per workspace quadrant.

    Each joint is a damped double integrator driven by a torque in [-1, 1].
    Only the target sharing the fingertip's quadrant is observable.
    """

    def __init__(self, task: TaskSpec, params: Optional[ReacherParams] = None):
        self.params = params or ReacherParams()
        if len(task.rewarded_targets) != 1:
            raise ValueError("Reacher tasks reward exactly one target colour")
        self.task = task
        self.task_colour = next(iter(task.rewarded_targets))
        if self.task_colour not in TARGET_COLOURS:
            raise ValueError(f"Unknown target colour '{self.task_colour}'")
        self.link_lengths = tuple(self.params.link_lengths)
        self.reach_threshold = self.params.reach_threshold
        self.max_steps = self.params.max_steps
        self.spec = EnvSpec(
            env_id="reacher",
            obs_kind=ObservationKind.FEATURE,
            obs_shape=(FEATURE_DIM,),
            n_classes=len(TARGET_COLOURS),
            action=ActionSpec(kind=ActionKind.BOX, dim=2, low=-1.0, high=1.0),
            class_names=TARGET_COLOURS,
        )
        self.joint_angles = np.zeros(2)
        self.joint_velocities = np.zeros(2)
        self.targets: List[Tuple[np.ndarray, str]] = []
        self.steps_elapsed = 0
        self._done = True
        self._terminal = False
        self._reached: set = set()

    @property
    def workspace_diameter(self) -> float:
        return 2.0 * sum(self.link_lengths)

    def reset(self, seed: int) -> np.ndarray:
        rng = seed_rng(seed)
        self.joint_angles = rng.uniform(-math.pi, math.pi, size=2)
        self.joint_velocities = np.zeros(2)
        colours = [TARGET_COLOURS[i] for i in rng.permutation(len(TARGET_COLOURS))]
        lo, hi = self.params.target_radius
        margin = self.params.quadrant_margin
        self.targets = []
        for q, colour in enumerate(colours):
            angle = rng.uniform(q * math.pi / 2 + margin, (q + 1) * math.pi / 2 - margin)
            radius = rng.uniform(lo, hi)
            self.targets.append((np.array([radius * math.cos(angle), radius * math.sin(angle)]), colour))
        self.steps_elapsed = 0
        self._done = False
        self._terminal = False
        self._reached = set()
        return self.observation()

    def step(self, action) -> Tuple[np.ndarray, float, bool]:
        torque = self._validate_action(action)
        if self._done:
            raise InvalidActionError("step() called on a finished episode, call reset() first")

        potential = self._potential()
        dt, damping = self.params.dt, self.params.damping
        new_angles = self.joint_angles + self.joint_velocities * dt
        self.joint_velocities = self.joint_velocities + (torque - damping * self.joint_velocities) * dt
        self.joint_angles = np.array([_wrap(a) for a in new_angles])
        self.steps_elapsed += 1

        tip = self.fingertip()
        newly_reached = []
        for position, colour in self.targets:
            if colour not in self._reached and np.linalg.norm(tip - position) <= self.reach_threshold:
                self._reached.add(colour)
                newly_reached.append(colour)

        reward = self.task.reward_per_pick if self.task_colour in newly_reached else 0.0
        self._terminal = self.task.terminal_on_completion and self.task_colour in self._reached
        if self.task.shaping_scale:
            next_potential = 0.0 if self._terminal else self._potential()
            reward += self.task.shaping_scale * (self.task.shaping_gamma * next_potential - potential)

        self._done = self._terminal or self.steps_elapsed >= self.max_steps
        return self.observation(), float(reward), self._done

    @property
    def last_terminal(self) -> bool:
        return self._terminal

    def episode_successes(self) -> dict:
        return counts_by_colour(TARGET_COLOURS, self._reached)

    def sample_action(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=2).astype(np.float32)

    # -------------------------------------------------------------- perception

    def fingertip(self) -> np.ndarray:
        return forward_kinematics(self.joint_angles, self.link_lengths)

    def visible_target(self) -> Optional[Tuple[np.ndarray, str]]:
        tip = self.fingertip()
        q = quadrant(tip[0], tip[1])
        for position, colour in self.targets:
            if quadrant(position[0], position[1]) == q:
                return position, colour
        return None

    def observation(self) -> np.ndarray:
        t1, t2 = self.joint_angles
        tip = self.fingertip()
        obs = np.zeros(FEATURE_DIM, dtype=np.float32)
        obs[0:4] = [math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2)]
        obs[4:6] = self.joint_velocities
        obs[6:8] = tip
        visible = self.visible_target()
        if visible is not None:
            position, colour = visible
            obs[8:10] = position
            obs[10 + TARGET_COLOURS.index(colour)] = 1.0
            obs[14:16] = tip - position
            obs[16] = np.linalg.norm(tip - position)
        return obs

    def true_class(self) -> int:
        visible = self.visible_target()
        if visible is None:
            raise MagikError("No target visible, call reset() first")
        return TARGET_COLOURS.index(visible[1]) + 1

    def render_frame(self, size: int = 200) -> np.ndarray:
        """Top-down RGB view of arm and targets, uint8 (size, size, 3)."""
        image = Image.new("RGB", (size, size), (20, 20, 20))
        draw = ImageDraw.Draw(image)
        scale = size / (self.workspace_diameter * 1.1)

        def to_px(point) -> Tuple[float, float]:
            return size / 2 + point[0] * scale, size / 2 - point[1] * scale

        draw.line([(0, size / 2), (size, size / 2)], fill=(60, 60, 60))
        draw.line([(size / 2, 0), (size / 2, size)], fill=(60, 60, 60))
        radius = self.reach_threshold * scale
        for position, colour in self.targets:
            cx, cy = to_px(position)
            draw.ellipse([cx - radius, cy - radius, cx + radius, cy + radius], fill=RGB[colour])
        t1, t2 = self.joint_angles
        elbow = np.array([self.link_lengths[0] * math.cos(t1), self.link_lengths[0] * math.sin(t1)])
        tip = self.fingertip()
        draw.line([to_px((0.0, 0.0)), to_px(elbow), to_px(tip)], fill=(220, 220, 220), width=max(1, size // 60))
        tx, ty = to_px(tip)
        draw.ellipse([tx - 3, ty - 3, tx + 3, ty + 3], fill=(255, 255, 255))
        return np.asarray(image, dtype=np.uint8)

    # ------------------------------------------------------------------ helpers

    def _potential(self) -> float:
        visible = self.visible_target()
        if visible is not None and visible[1] == self.task_colour:
            return -float(np.linalg.norm(self.fingertip() - visible[0]))
        return -self.workspace_diameter

    @staticmethod
    def _validate_action(action) -> np.ndarray:
        torque = np.asarray(action, dtype=np.float64)
        if torque.shape != (2,):
            raise InvalidActionError(f"Reacher expects a 2-dim torque, got shape {torque.shape}")
        if not np.all(np.isfinite(torque)):
            raise InvalidActionError("Reacher torque must be finite")
        if np.any(np.abs(torque) > 1.0 + 1e-6):
            raise InvalidActionError(f"Reacher torque {torque.tolist()} outside [-1, 1]")
        return np.clip(torque, -1.0, 1.0)
