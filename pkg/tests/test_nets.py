import math

import pytest
import torch

from core.envs import ActionKind, ActionSpec, ObservationKind, make_env
from core.errors import ShapeMismatchError, SpecMismatchError, UnsupportedActionSpecError
from core.nets import (
    CategoricalPolicy,
    FilmLayer,
    GaussianPolicy,
    LatentSpec,
    build_sac_nets,
    build_vae,
    categorical_entropy,
    latent_spec_for,
)

PIXEL_SHAPE = (40, 40, 3)


def test_film_is_identity_for_a_zero_condition():
    film = FilmLayer(cond_dim=4, channels=6)
    h = torch.randn(3, 6, 5, 5)
    assert torch.allclose(film(h, torch.zeros(3, 4)), h)
    flat = torch.randn(3, 6)
    assert torch.allclose(film(flat, torch.zeros(3, 4)), flat)


def test_film_modulates_per_channel():
    film = FilmLayer(cond_dim=2, channels=3)
    with torch.no_grad():
        film.gamma.weight.zero_()
        film.beta.weight.zero_()
        film.gamma.weight[:, 0] = 1.0
    out = film(torch.ones(1, 3), torch.tensor([[1.0, 0.0]]))
    assert torch.allclose(out, torch.full((1, 3), 2.0))


class TestVaeNets:
    def test_pixel_shapes(self, tiny_nets):
        latent = latent_spec_for("gridpick", 4, tiny_nets)
        encoder_z, encoder_c, decoder = build_vae(ObservationKind.PIXEL, latent, PIXEL_SHAPE, tiny_nets, n_classes=4)
        x = torch.rand(2, *PIXEL_SHAPE)
        mu, log_var = encoder_z(x)
        assert mu.shape == log_var.shape == (2, tiny_nets.gridpick_z_dim)
        assert encoder_c(x).shape == (2, 4)
        recon = decoder(mu, torch.eye(4)[:2])
        assert recon.shape == (2, *PIXEL_SHAPE)
        assert bool(((recon > 0) & (recon < 1)).all())

    def test_feature_shapes(self, tiny_nets):
        latent = latent_spec_for("reacher", 4, tiny_nets)
        encoder_z, encoder_c, decoder = build_vae("feature", latent, (17,), tiny_nets)
        x = torch.randn(5, 17)
        mu, _ = encoder_z(x)
        assert mu.shape == (5, tiny_nets.reacher_z_dim)
        assert encoder_c(x).shape == (5, 4)
        assert decoder(mu, torch.eye(4)[[0, 1, 2, 3, 0]]).shape == (5, 17)

    def test_encoders_do_not_share_parameters(self, tiny_nets):
        encoder_z, encoder_c, _ = build_vae("feature", LatentSpec(z_dim=3, c_dim=4), (17,), tiny_nets)
        shared = {id(p) for p in encoder_z.parameters()} & {id(p) for p in encoder_c.parameters()}
        assert not shared

    def test_decoder_depends_on_the_class(self, tiny_nets):
        _, _, decoder = build_vae("feature", LatentSpec(z_dim=3, c_dim=4), (17,), tiny_nets)
        z = torch.randn(1, 3)
        assert not torch.allclose(decoder(z, torch.eye(4)[[0]]), decoder(z, torch.eye(4)[[1]]))

    def test_mismatched_class_count(self, tiny_nets):
        with pytest.raises(SpecMismatchError):
            build_vae("feature", LatentSpec(z_dim=3, c_dim=3), (17,), tiny_nets, n_classes=4)

    def test_bad_pixel_shape(self, tiny_nets):
        with pytest.raises(ShapeMismatchError):
            build_vae("pixel", LatentSpec(z_dim=3, c_dim=4), (42, 42, 3), tiny_nets)
        with pytest.raises(ShapeMismatchError):
            build_vae("feature", LatentSpec(z_dim=3, c_dim=4), (4, 4), tiny_nets)

    def test_latent_spec_requires_two_classes(self):
        with pytest.raises(ValueError):
            LatentSpec(z_dim=2, c_dim=1)


class TestSacNets:
    def test_discrete_nets(self, tiny_nets):
        env = make_env("gridpick")
        policy, q1, q2 = build_sac_nets(env.spec.obs_kind, env.spec.action, env.spec.obs_shape, tiny_nets)
        assert isinstance(policy, CategoricalPolicy)
        obs = torch.rand(3, *PIXEL_SHAPE)
        probs, log_probs = policy.distribution(obs)
        assert probs.shape == (3, 4)
        assert torch.allclose(probs.sum(-1), torch.ones(3))
        assert q1(obs).shape == q2(obs).shape == (3, 4)
        actions = policy.act(obs, deterministic=False, generator=torch.Generator().manual_seed(0))
        assert actions.shape == (3,) and bool(((actions >= 0) & (actions < 4)).all())

    def test_uniform_policy_entropy(self, tiny_nets):
        policy = CategoricalPolicy(ObservationKind.FEATURE, (17,), 4, tiny_nets)
        with torch.no_grad():
            policy.logits.weight.zero_()
            policy.logits.bias.zero_()
        _, log_probs = policy.distribution(torch.randn(2, 17))
        assert torch.allclose(categorical_entropy(log_probs), torch.full((2,), math.log(4)))

    def test_continuous_nets(self, tiny_nets):
        env = make_env("reacher")
        policy, q1, _ = build_sac_nets(env.spec.obs_kind, env.spec.action, env.spec.obs_shape, tiny_nets)
        assert isinstance(policy, GaussianPolicy)
        obs = torch.randn(64, 17)
        action, log_prob = policy.sample(obs, generator=torch.Generator().manual_seed(0))
        assert action.shape == (64, 2) and log_prob.shape == (64,)
        assert bool((action.abs() <= 1.0).all())
        assert bool(torch.isfinite(log_prob).all())
        assert q1(obs, action).shape == (64,)
        deterministic = policy.act(obs[:1], deterministic=True)
        assert torch.equal(deterministic, policy.act(obs[:1], deterministic=True))

    @pytest.mark.parametrize("spec", [
        ActionSpec(kind=ActionKind.DISCRETE, n=1),
        ActionSpec(kind=ActionKind.BOX, dim=2, low=0.0, high=2.0),
        ActionSpec(kind=ActionKind.BOX, dim=0),
    ])
    def test_unsupported_action_specs(self, tiny_nets, spec):
        with pytest.raises(UnsupportedActionSpecError):
            build_sac_nets("feature", spec, (17,), tiny_nets)
