from .divergences import categorical_kl, check_simplex, gaussian_kl
from .elbo import (
    ElboBreakdown,
    ElboWeights,
    elbo_labelled,
    elbo_unlabelled,
    reconstruction_log_likelihood,
    supervision_term,
)
from .hsic import hsic, kernel_matrix, median_bandwidth
from .sampling import annealed_temperature, gumbel_softmax_sample

__all__ = [
    'categorical_kl', 'check_simplex', 'gaussian_kl',
    'ElboBreakdown', 'ElboWeights', 'elbo_labelled', 'elbo_unlabelled', 'reconstruction_log_likelihood',
    'supervision_term', 'hsic', 'kernel_matrix', 'median_bandwidth', 'annealed_temperature', 'gumbel_softmax_sample',
]
