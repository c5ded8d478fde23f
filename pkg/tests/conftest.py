import sys
from pathlib import Path

import pytest
import torch
from loguru import logger

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from core.dataio import ArtifactStore, ArtifactStoreConfig, collect  # noqa: E402
from core.envs import make_env  # noqa: E402
from core.nets import NetSettings  # noqa: E402


@pytest.fixture(autouse=True)
def _quiet_and_single_threaded():
    torch.set_num_threads(1)
    logger.remove()
    yield


@pytest.fixture
def tiny_nets() -> NetSettings:
    return NetSettings(
        cnn_channels=[8, 8, 8],
        cnn_hidden=[64],
        mlp_hidden=32,
        mlp_out=16,
        feature_decoder_hidden=[32],
        policy_hidden=[32, 32],
        policy_cnn_channels=[8, 8, 8],
        pixel_head=[32],
        gridpick_z_dim=8,
        reacher_z_dim=4,
    )


@pytest.fixture
def store(tmp_path) -> ArtifactStore:
    return ArtifactStore(ArtifactStoreConfig(tmp_path / "artifacts", cache_size=2))


@pytest.fixture
def gridpick_dataset():
    return collect(None, make_env("gridpick"), n_steps=160, seed=3, show_progress=False)


@pytest.fixture
def reacher_dataset():
    return collect(None, make_env("reacher"), n_steps=300, seed=5, show_progress=False)
