from typing import List

from pydantic import BaseModel, ConfigDict, Field


class LatentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    z_dim: int = Field(ge=1)
    c_dim: int = Field(ge=2)


class NetSettings(BaseModel):
    """Layer sizes. Defaults reproduce the reference architecture; smaller values suit quick runs."""

    model_config = ConfigDict(extra="forbid")

    cnn_channels: List[int] = Field(default_factory=lambda: [64, 128, 256], min_length=3, max_length=3)
    cnn_hidden: List[int] = Field(default_factory=lambda: [2048, 512], min_length=1)
    mlp_hidden: int = Field(default=128, ge=1)
    mlp_out: int = Field(default=32, ge=1)
    feature_decoder_hidden: List[int] = Field(default_factory=lambda: [256, 128], min_length=1)
    policy_hidden: List[int] = Field(default_factory=lambda: [256, 256], min_length=1)
    policy_cnn_channels: List[int] = Field(default_factory=lambda: [64, 128, 256], min_length=3, max_length=3)
    pixel_head: List[int] = Field(default_factory=lambda: [512], min_length=1)
    gridpick_z_dim: int = Field(default=32, ge=1)
    reacher_z_dim: int = Field(default=11, ge=1)
