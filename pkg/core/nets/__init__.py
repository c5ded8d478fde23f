from .layers import ConvResBlock, FilmLayer, LinearResBlock, fan_in_uniform_, mlp
from .sac_nets import (
    CategoricalPolicy,
    ContinuousQNetwork,
    DiscreteQNetwork,
    GaussianPolicy,
    build_sac_nets,
    categorical_entropy,
)
from .settings import LatentSpec, NetSettings
from .vae import (
    ClassEncoder,
    CnnTrunk,
    FeatureDecoder,
    GaussianEncoder,
    MlpTrunk,
    PixelDecoder,
    build_vae,
    latent_spec_for,
)

__all__ = [
    'ConvResBlock', 'FilmLayer', 'LinearResBlock', 'fan_in_uniform_', 'mlp',
    'CategoricalPolicy', 'ContinuousQNetwork', 'DiscreteQNetwork', 'GaussianPolicy', 'build_sac_nets',
    'categorical_entropy', 'LatentSpec', 'NetSettings',
    'ClassEncoder', 'CnnTrunk', 'FeatureDecoder', 'GaussianEncoder', 'MlpTrunk', 'PixelDecoder',
    'build_vae', 'latent_spec_for',
]
