from typing import Optional, Sequence, Tuple

import torch
import torch.nn as nn

from core.envs.base import ObservationKind
from core.errors import ShapeMismatchError, SpecMismatchError
from .layers import ConvResBlock, FilmLayer, LinearResBlock, fan_in_uniform_, mlp
from .settings import LatentSpec, NetSettings


class CnnTrunk(nn.Module):
    """Conv stack (k7 s1 p3, k4 s2 p1, k4 s2 p1) and two residual blocks on (B, H, W, 3) input."""

    def __init__(self, obs_shape: Sequence[int], channels: Sequence[int]):
        super().__init__()
        height, width, in_channels = obs_shape
        if height % 4 or width % 4:
            raise ShapeMismatchError("pixel observations need sides divisible by 4", actual=tuple(obs_shape))
        c1, c2, c3 = channels
        self.convs = nn.Sequential(
            nn.Conv2d(in_channels, c1, kernel_size=7, stride=1, padding=3),
            nn.ReLU(),
            nn.Conv2d(c1, c2, kernel_size=4, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(c2, c3, kernel_size=4, stride=2, padding=1),
            ConvResBlock(c3),
            ConvResBlock(c3),
        )
        self.map_shape = (c3, height // 4, width // 4)
        self.out_dim = c3 * (height // 4) * (width // 4)

    def feature_map(self, obs: torch.Tensor) -> torch.Tensor:
        return self.convs(obs.permute(0, 3, 1, 2))

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.feature_map(obs)).flatten(1)


class MlpTrunk(nn.Module):
    """Linear, batch norm, linear, ReLU, one residual block, linear to `out_dim`."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden),
            nn.BatchNorm1d(hidden),
            nn.Linear(hidden, hidden),
            nn.ReLU(),
            LinearResBlock(hidden),
            nn.Linear(hidden, out_dim),
        )
        self.out_dim = out_dim

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.net(obs)


def _encoder_trunk(obs_kind: ObservationKind, obs_shape: Sequence[int], settings: NetSettings) -> Tuple[nn.Module, int]:
    if obs_kind == ObservationKind.PIXEL:
        cnn = CnnTrunk(obs_shape, settings.cnn_channels)
        head = mlp([cnn.out_dim, *settings.cnn_hidden], final_activation=True)
        return nn.Sequential(cnn, head), settings.cnn_hidden[-1]
    trunk = MlpTrunk(obs_shape[0], settings.mlp_hidden, settings.mlp_out)
    return trunk, settings.mlp_out


class GaussianEncoder(nn.Module):
    """q(z|x): observation -> (mu, log_var)."""

    def __init__(self, obs_kind: ObservationKind, obs_shape: Sequence[int], z_dim: int, settings: NetSettings):
        super().__init__()
        self.trunk, width = _encoder_trunk(obs_kind, obs_shape, settings)
        self.bottleneck = nn.Linear(width, 2 * z_dim)
        self.z_dim = z_dim

    def forward(self, obs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        mu, log_var = self.bottleneck(self.trunk(obs)).chunk(2, dim=-1)
        return mu, log_var


class ClassEncoder(nn.Module):
    """q(c|x) classification head: observation -> K logits."""

    def __init__(self, obs_kind: ObservationKind, obs_shape: Sequence[int], c_dim: int, settings: NetSettings):
        super().__init__()
        self.trunk, width = _encoder_trunk(obs_kind, obs_shape, settings)
        self.head = nn.Linear(width, c_dim)
        self.c_dim = c_dim

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.head(self.trunk(obs))


class PixelDecoder(nn.Module):
    """(z, c) -> (B, H, W, 3) in (0, 1).

    z is projected to a (C, H/4, W/4) map, modulated by c, then upsampled twice.
    """

    def __init__(self, obs_shape: Sequence[int], latent: LatentSpec, channels: int):
        super().__init__()
        height, width, out_channels = obs_shape
        self.base = (channels, height // 4, width // 4)
        self.project = nn.Linear(latent.z_dim, channels * (height // 4) * (width // 4))
        self.res = ConvResBlock(channels)
        self.film_in = FilmLayer(latent.c_dim, channels)
        self.up1 = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(channels, channels // 2, 3, padding=1))
        self.up2 = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(channels // 2, out_channels, 3, padding=1))
        self.film_out = FilmLayer(latent.c_dim, out_channels)

    def forward(self, z: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        h = self.project(z).view(z.shape[0], *self.base)
        h = self.film_in(self.res(h), c)
        h = torch.relu(self.up1(h))
        h = self.film_out(self.up2(h), c)
        return torch.sigmoid(h).permute(0, 2, 3, 1)


class FeatureDecoder(nn.Module):
    """(z, c) -> feature vector, FiLM(c) after every hidden layer."""

    def __init__(self, out_dim: int, latent: LatentSpec, hidden: Sequence[int]):
        super().__init__()
        sizes = [latent.z_dim, *hidden]
        self.layers = nn.ModuleList(nn.Linear(sizes[i], sizes[i + 1]) for i in range(len(hidden)))
        self.films = nn.ModuleList(FilmLayer(latent.c_dim, width) for width in hidden)
        self.out = nn.Linear(hidden[-1], out_dim)

    def forward(self, z: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        h = z
        for layer, film in zip(self.layers, self.films):
            h = film(torch.relu(layer(h)), c)
        return self.out(h)


def latent_spec_for(env_id: str, n_classes: int, settings: Optional[NetSettings] = None) -> LatentSpec:
    settings = settings or NetSettings()
    z_dim = settings.reacher_z_dim if env_id == "reacher" else settings.gridpick_z_dim
    return LatentSpec(z_dim=z_dim, c_dim=n_classes)


def build_vae(
    obs_kind: ObservationKind,
    latent_spec: LatentSpec,
    obs_shape: Sequence[int],
    settings: Optional[NetSettings] = None,
    n_classes: Optional[int] = None,
) -> Tuple[GaussianEncoder, ClassEncoder, nn.Module]:
    """Two parallel encoders of identical structure plus the FiLM-conditioned decoder."""
    settings = settings or NetSettings()
    obs_kind = ObservationKind(obs_kind)
    if n_classes is not None and n_classes != latent_spec.c_dim:
        raise SpecMismatchError(f"c_dim {latent_spec.c_dim} does not match the environment's {n_classes} classes")
    if obs_kind == ObservationKind.PIXEL:
        if len(obs_shape) != 3:
            raise ShapeMismatchError("pixel observations are (H, W, 3)", actual=tuple(obs_shape))
        decoder: nn.Module = PixelDecoder(obs_shape, latent_spec, settings.cnn_channels[-1])
    else:
        if len(obs_shape) != 1:
            raise ShapeMismatchError("feature observations are 1-d", actual=tuple(obs_shape))
        decoder = FeatureDecoder(obs_shape[0], latent_spec, settings.feature_decoder_hidden)
    encoder_z = GaussianEncoder(obs_kind, obs_shape, latent_spec.z_dim, settings)
    encoder_c = ClassEncoder(obs_kind, obs_shape, latent_spec.c_dim, settings)
    for net in (encoder_z, encoder_c, decoder):
        fan_in_uniform_(net)
    return encoder_z, encoder_c, decoder
