import math

import numpy as np
import pytest

from core.envs import (
    FEATURE_DIM,
    PALETTE,
    EnvSettings,
    GridPickEnv,
    ReacherEnv,
    class_from_colours,
    forward_kinematics,
    make_env,
    quadrant,
    success_colours,
    task_spec,
)
from core.errors import InvalidActionError, MagikError

PICKUP = 3


def _facing_north(env: GridPickEnv, objects):
    env.reset(0)
    env.agent_pose = (4, 4, 0)
    env.objects = list(objects)
    return env


class TestGridPick:
    def test_observation_shape_and_range(self):
        env = make_env("gridpick")
        obs = env.reset(7)
        assert obs.shape == (40, 40, 3)
        assert obs.dtype == np.float32
        assert obs.min() >= 0.0 and obs.max() <= 1.0

    def test_palette_survives_uint8(self):
        obs = make_env("gridpick").reset(11)
        assert np.array_equal(np.rint(obs * 255).astype(np.float32) / 255.0, obs)
        for colour in PALETTE.values():
            assert np.allclose(np.rint(colour * 255) / 255, colour)

    def test_reset_is_deterministic(self):
        a, b = make_env("gridpick"), make_env("gridpick")
        assert np.array_equal(a.reset(3), b.reset(3))
        for action in (2, 1, 2, 0, 3):
            obs_a, r_a, d_a = a.step(action)
            obs_b, r_b, d_b = b.step(action)
            assert np.array_equal(obs_a, obs_b) and r_a == r_b and d_a == d_b

    @pytest.mark.parametrize("action", [4, -1, 1.5, True, "left", np.array([1, 2])])
    def test_invalid_actions(self, action):
        env = make_env("gridpick")
        env.reset(0)
        with pytest.raises(InvalidActionError):
            env.step(action)

    def test_numpy_integer_action_accepted(self):
        env = make_env("gridpick")
        env.reset(0)
        env.step(np.int64(1))
        assert env.steps_elapsed == 1

    def test_step_after_done_raises(self):
        env = make_env("gridpick", "target1")
        env.reset(0)
        done = False
        while not done:
            _, _, done = env.step(0)
        assert env.steps_elapsed == env.max_steps
        with pytest.raises(InvalidActionError):
            env.step(0)

    def test_picking_the_rewarded_ball_ends_the_episode(self):
        env = _facing_north(make_env("gridpick", "source"), [((3, 4), "green"), ((5, 5), "red")])
        _, reward, done = env.step(PICKUP)
        assert reward == 1.0
        assert done and env.last_terminal
        assert env.episode_successes() == {"red": 0, "green": 1}

    def test_picking_an_unrewarded_ball_gives_nothing(self):
        env = _facing_north(make_env("gridpick", "target3"), [((3, 4), "green"), ((5, 5), "red")])
        _, reward, done = env.step(PICKUP)
        assert reward == 0.0
        assert not done
        assert env.episode_successes()["green"] == 1

    def test_balls_block_forward_moves(self):
        env = _facing_north(make_env("gridpick"), [((3, 4), "green"), ((6, 6), "red")])
        env.step(2)
        assert env.agent_pose == (4, 4, 0)

    def test_walls_block_forward_moves(self):
        env = make_env("gridpick")
        env.reset(0)
        env.agent_pose = (1, 3, 0)
        env.objects = []
        env.step(2)
        assert env.agent_pose == (1, 3, 0)

    def test_view_and_true_class(self):
        env = _facing_north(make_env("gridpick"), [((3, 4), "green"), ((5, 5), "red")])
        cells = env.view_cells()
        assert cells[4][2] == "agent"
        assert cells[3][2] == "green"
        assert env.visible_colours() == {"green"}
        assert env.true_class() == 2

        env.objects = [((3, 4), "green"), ((2, 3), "red")]
        assert env.true_class() == 3
        env.objects = []
        assert env.true_class() == 4

    def test_class_from_colours(self):
        assert class_from_colours({"red"}) == 1
        assert class_from_colours({"green"}) == 2
        assert class_from_colours({"red", "green"}) == 3
        assert class_from_colours(set()) == 4

    def test_target1_places_only_red(self):
        env = make_env("gridpick", "target1")
        env.reset(4)
        assert [colour for _, colour in env.objects] == ["red"]


class TestReacher:
    def test_observation_layout(self):
        env = make_env("reacher")
        obs = env.reset(1)
        assert obs.shape == (FEATURE_DIM,) == (17,)
        assert obs[10:14].sum() == 1.0
        assert int(np.argmax(obs[10:14])) + 1 == env.true_class()
        assert obs[16] == pytest.approx(float(np.linalg.norm(obs[14:16])), abs=1e-6)

    def test_every_quadrant_holds_one_target(self):
        env = make_env("reacher")
        env.reset(2)
        assert sorted(quadrant(*position) for position, _ in env.targets) == [0, 1, 2, 3]
        assert len({colour for _, colour in env.targets}) == 4

    def test_reset_is_deterministic(self):
        a, b = make_env("reacher"), make_env("reacher")
        assert np.array_equal(a.reset(9), b.reset(9))
        torque = np.array([0.3, -0.7])
        assert np.array_equal(a.step(torque)[0], b.step(torque)[0])

    @pytest.mark.parametrize("action", [
        np.array([0.1, 0.2, 0.3]),
        np.array([2.0, 0.0]),
        np.array([np.nan, 0.0]),
        [0.5],
    ])
    def test_invalid_actions(self, action):
        env = make_env("reacher")
        env.reset(0)
        with pytest.raises(InvalidActionError):
            env.step(action)

    def test_episode_runs_to_step_limit(self):
        env = make_env("reacher", settings=EnvSettings(reacher={"max_steps": 5}))
        env.reset(0)
        done, steps = False, 0
        while not done:
            _, _, done = env.step(np.zeros(2))
            steps += 1
        assert steps <= 5

    def test_unshaped_reward_is_zero_away_from_targets(self):
        env = make_env("reacher", "reach_red", EnvSettings(reacher_shaping=0.0))
        env.reset(0)
        env.targets = [(np.array(p), c) for p, c in
                       [((0.05, 0.17), "red"), ((-0.15, 0.15), "green"), ((-0.15, -0.15), "blue"), ((0.15, -0.15), "yellow")]]
        env.joint_angles = np.array([math.pi / 4, 0.0])
        env.joint_velocities = np.zeros(2)
        _, reward, done = env.step(np.zeros(2))
        assert reward == 0.0 and not done

    def test_reaching_the_target_rewards_and_terminates(self):
        env = make_env("reacher", "reach_red", EnvSettings(reacher_shaping=0.0))
        env.reset(0)
        tip = forward_kinematics((math.pi / 4, 0.0))
        env.targets = [(tip.copy(), "red"), (np.array([-0.1, 0.1]), "green"),
                       (np.array([-0.1, -0.1]), "blue"), (np.array([0.1, -0.1]), "yellow")]
        env.joint_angles = np.array([math.pi / 4, 0.0])
        env.joint_velocities = np.zeros(2)
        _, reward, done = env.step(np.zeros(2))
        assert reward == 1.0
        assert done and env.last_terminal
        assert env.episode_successes()["red"] == 1

    def test_forward_kinematics(self):
        assert np.allclose(forward_kinematics((0.0, 0.0)), [0.2, 0.0])
        assert np.allclose(forward_kinematics((math.pi / 2, 0.0)), [0.0, 0.2], atol=1e-12)
        assert np.allclose(forward_kinematics((0.0, math.pi / 2)), [0.1, 0.1], atol=1e-12)

    def test_quadrants(self):
        assert quadrant(1, 1) == 0
        assert quadrant(-1, 1) == 1
        assert quadrant(-1, -1) == 2
        assert quadrant(1, -1) == 3

    def test_render_frame(self):
        env = make_env("reacher")
        env.reset(0)
        frame = env.render_frame(64)
        assert frame.shape == (64, 64, 3)
        assert frame.dtype == np.uint8

    def test_true_class_needs_a_visible_target(self):
        env = make_env("reacher")
        env.targets = []
        with pytest.raises(MagikError):
            env.true_class()


def test_make_env_defaults_to_source_task():
    assert make_env("gridpick").task.task_id == "source"
    assert make_env("reacher").task.task_id == "reach_blue"
    assert isinstance(make_env("reacher", "reach_red"), ReacherEnv)


def test_unknown_env_and_task():
    with pytest.raises(ValueError):
        make_env("cartpole")
    with pytest.raises(ValueError):
        task_spec("gridpick", "target9")


def test_success_colours():
    assert success_colours("gridpick", "target2") == ("green", "red")
    assert success_colours("gridpick", "target1") == ("red",)
    assert success_colours("reacher", "reach_yellow") == ("yellow",)
