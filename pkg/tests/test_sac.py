import math

import numpy as np
import pandas as pd
import pytest
import torch

from core.dataio import DatasetSink
from core.envs import ActionKind, ActionSpec, EnvSettings, ObservationKind, make_env
from core.errors import DivergenceError, SpecMismatchError
from core.sac import (
    Batch,
    PolicyCheckpoint,
    ReplayBuffer,
    SacAgent,
    SacConfig,
    evaluate_policy,
    fine_tune,
    smooth,
    steps_to_threshold,
    train_source,
)

SHORT_REACHER = EnvSettings(reacher={"max_steps": 15})


@pytest.fixture
def quick_config() -> SacConfig:
    return SacConfig(
        total_steps=60,
        random_prefix_steps=20,
        learning_starts=20,
        batch_size=8,
        buffer_capacity=200,
        log_every=20,
        eval_every=30,
        eval_episodes=1,
        finetune_steps=30,
    )


def _batch(spec, n=8, reward=0.0):
    obs = torch.rand(n, *spec.obs_shape)
    if spec.action.kind == ActionKind.DISCRETE:
        actions = torch.randint(0, spec.action.n, (n,))
    else:
        actions = torch.rand(n, spec.action.dim) * 2 - 1
    return Batch(obs, actions, torch.full((n,), reward), torch.rand(n, *spec.obs_shape), torch.zeros(n))


class TestReplayBuffer:
    def _buffer(self, capacity=3):
        return ReplayBuffer(capacity, ObservationKind.FEATURE, (2,), ActionSpec(kind=ActionKind.BOX, dim=2))

    def test_fifo_eviction(self):
        buffer = self._buffer()
        for i in range(5):
            buffer.push(np.full(2, i, dtype=np.float32), np.zeros(2), float(i), np.zeros(2), False)
        assert len(buffer) == 3
        assert [t.reward for t in buffer.transitions()] == [2.0, 3.0, 4.0]

    def test_sample_without_repeats(self):
        buffer = self._buffer(capacity=10)
        for i in range(10):
            buffer.push(np.full(2, i, dtype=np.float32), np.zeros(2), float(i), np.zeros(2), i == 9)
        batch = buffer.sample(10, np.random.default_rng(0))
        assert sorted(batch.rewards.tolist()) == [float(i) for i in range(10)]
        with pytest.raises(ValueError):
            buffer.sample(11, np.random.default_rng(0))

    def test_pixel_observations_round_trip(self):
        env = make_env("gridpick")
        buffer = ReplayBuffer(4, env.spec.obs_kind, env.spec.obs_shape, env.spec.action)
        obs = env.reset(0)
        next_obs, reward, _ = env.step(1)
        buffer.push(obs, 1, reward, next_obs, False)
        assert buffer.obs.dtype == np.uint8
        batch = buffer.sample(1, np.random.default_rng(0))
        assert torch.equal(batch.obs[0], torch.from_numpy(obs))
        assert int(batch.actions[0]) == 1

    def test_serialised_in_age_order(self):
        buffer = self._buffer()
        for i in range(4):
            buffer.push(np.zeros(2), np.zeros(2), float(i), np.zeros(2), False)
        sections, meta = buffer.to_sections()
        restored = ReplayBuffer.from_sections(sections, meta)
        assert [t.reward for t in restored.transitions()] == [1.0, 2.0, 3.0]

    def test_observation_shape_is_checked(self):
        with pytest.raises(Exception):
            self._buffer().push(np.zeros(3), np.zeros(2), 0.0, np.zeros(3), False)


class TestAgent:
    def test_target_entropy_defaults(self):
        config = SacConfig()
        assert config.resolved_target_entropy(ActionSpec(kind=ActionKind.DISCRETE, n=4)) == pytest.approx(0.5 * math.log(4))
        assert config.resolved_target_entropy(ActionSpec(kind=ActionKind.BOX, dim=2)) == -2.0
        assert SacConfig(target_entropy=0.3).resolved_target_entropy(ActionSpec(kind=ActionKind.BOX, dim=2)) == 0.3

    def test_full_soft_update_copies_the_critics(self, tiny_nets):
        agent = SacAgent(make_env("reacher").spec, SacConfig(), tiny_nets, seed=0)
        with torch.no_grad():
            for p in agent.q1.parameters():
                p.add_(1.0)
        agent.soft_update(1.0)
        for online, target in zip(agent.q1.parameters(), agent.q1_target.parameters()):
            assert torch.allclose(online, target)

    @pytest.mark.parametrize("env_id", ["gridpick", "reacher"])
    def test_update_reports_finite_losses(self, tiny_nets, env_id):
        spec = make_env(env_id).spec
        agent = SacAgent(spec, SacConfig(), tiny_nets, seed=1)
        before = agent.log_alpha.item()
        losses = agent.update(_batch(spec), step=1)
        assert all(np.isfinite(v) for v in losses.values())
        assert agent.updates == 1
        assert agent.log_alpha.item() != before

    def test_critic_fits_a_single_terminal_transition(self, tiny_nets):
        spec = make_env("reacher").spec
        agent = SacAgent(spec, SacConfig(lr=1e-3), tiny_nets, seed=0)
        torch.manual_seed(0)
        batch = Batch(
            torch.rand(1, *spec.obs_shape),
            torch.rand(1, spec.action.dim) * 2 - 1,
            torch.ones(1),
            torch.rand(1, *spec.obs_shape),
            torch.ones(1),
        )
        q_losses = [agent.update(batch, step=i)["q_loss"] for i in range(2000)]
        assert min(q_losses) < 1e-4
        assert q_losses[-1] < q_losses[0]

    def test_non_finite_loss_raises_divergence(self, tiny_nets):
        spec = make_env("reacher").spec
        agent = SacAgent(spec, SacConfig(), tiny_nets, seed=1)
        with pytest.raises(DivergenceError) as info:
            agent.update(_batch(spec, reward=float("nan")), step=7)
        assert info.value.step == 7
        assert info.value.exit_code == 4

    def test_checkpoint_round_trip(self, tiny_nets, store):
        env = make_env("gridpick")
        agent = SacAgent(env.spec, SacConfig(), tiny_nets, seed=2)
        curve = pd.DataFrame({"step": [0, 10], "return_mean": [0.0, 1.0], "return_std": [0.0, 0.1], "success_rate": [0.0, 0.5]})
        checkpoint = agent.checkpoint("source", curve, {"seed": 2})
        store.put("gridpick_source_policy", checkpoint)
        store.cache.clear()
        loaded = store.get("gridpick_source_policy")
        assert isinstance(loaded, PolicyCheckpoint)
        assert loaded.checksum() == checkpoint.checksum()
        assert loaded.curve["step"].tolist() == [0, 10]
        assert loaded.meta == {"seed": 2}
        obs = env.reset(0)
        assert loaded.frozen_policy().act(obs, deterministic=True) == agent.act(obs, deterministic=True)

    def test_checkpoint_rejects_other_environments(self, tiny_nets):
        agent = SacAgent(make_env("gridpick").spec, SacConfig(), tiny_nets)
        checkpoint = agent.checkpoint("source", pd.DataFrame(), {})
        with pytest.raises(SpecMismatchError):
            checkpoint.check_compatible(make_env("reacher").spec)


class TestTraining:
    def test_source_training_is_deterministic(self, tiny_nets, quick_config):
        runs = []
        for _ in range(2):
            sink = DatasetSink(ObservationKind.FEATURE)
            checkpoint = train_source(make_env("reacher", settings=SHORT_REACHER), quick_config, sink, seed=3, net_settings=tiny_nets)
            runs.append((checkpoint, sink))
        (a, sink_a), (b, sink_b) = runs
        assert a.checksum() == b.checksum()
        assert a.curve.equals(b.curve)
        assert a.curve["step"].tolist() == [0, 30, 60]
        assert len(sink_a) == len(sink_b) == quick_config.total_steps

    def test_source_training_needs_the_source_task(self, tiny_nets, quick_config):
        with pytest.raises(SpecMismatchError):
            train_source(make_env("reacher", "reach_red"), quick_config, seed=0, net_settings=tiny_nets)

    def test_fine_tune(self, tiny_nets, quick_config):
        source = train_source(make_env("reacher", settings=SHORT_REACHER), quick_config, seed=0, net_settings=tiny_nets)
        tuned, curve = fine_tune(source, make_env("reacher", "reach_red", SHORT_REACHER), quick_config, seed=1)
        assert tuned.task_id == "reach_red"
        assert tuned.meta["source_task"] == "reach_blue"
        assert curve["step"].iloc[-1] == quick_config.finetune_steps
        assert tuned.checksum() != source.checksum()

    def test_evaluate_scripted_policy(self):
        class Spin:
            def act(self, obs, deterministic=False):
                return 0

        env = make_env("gridpick", "source")
        stats = evaluate_policy(Spin(), env, n_episodes=3, seed=0)
        assert stats.n_episodes == 3
        assert stats.success_rate == 0.0
        assert stats.counts() == {"red": 0, "green": 0}
        assert stats.lengths == [20, 20, 20]

    def test_evaluate_needs_episodes(self):
        with pytest.raises(ValueError):
            evaluate_policy(None, make_env("gridpick"), n_episodes=0, seed=0)


def test_smooth_and_threshold():
    assert smooth([1.0, 1.0, 1.0]).tolist() == [1.0, 1.0, 1.0]
    assert smooth([0.0, 10.0])[1] == pytest.approx(1.0)
    curve = pd.DataFrame({"step": [0, 5, 10], "success_rate": [0.0, 0.85, 0.9]})
    assert steps_to_threshold(curve, 0.8) == 5
    assert steps_to_threshold(curve, 0.95) is None
