"""Bayesian shrinkage estimation of covariance matrices under hierarchical inverse-Wishart priors."""

__version__ = "0.1.0"

from .estimators import (  # noqa: E402
    EstimatorKind,
    LossKind,
    bayes_estimate_L1,
    bayes_estimate_L2,
    loss_frobenius,
    loss_stein,
    mle_estimate,
)
from .gibbs import ChainTrace, SamplerConfig, run_chain  # noqa: E402
from .models import ModelSpec, Variant  # noqa: E402
from .rand_dist import RngStream, scatter_matrix  # noqa: E402

__all__ = [
    "ChainTrace",
    "EstimatorKind",
    "LossKind",
    "ModelSpec",
    "RngStream",
    "SamplerConfig",
    "Variant",
    "bayes_estimate_L1",
    "bayes_estimate_L2",
    "loss_frobenius",
    "loss_stein",
    "mle_estimate",
    "run_chain",
    "scatter_matrix",
]
