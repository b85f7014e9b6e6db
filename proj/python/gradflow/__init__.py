"""Gradient similarity analysis for deep graph convolutional networks."""

from ._core import (
    Graph,
    b_power_norm,
    fit_decay,
    frobenius_normalize,
    linear_instance,
    node_similarity,
    plain_chain_gradient,
    residual_chain_gradient,
    run_experiment,
    smoothing_bound,
    spectral_norm,
    train,
)

__all__ = [
    "Graph",
    "b_power_norm",
    "fit_decay",
    "frobenius_normalize",
    "linear_instance",
    "node_similarity",
    "plain_chain_gradient",
    "residual_chain_gradient",
    "run_experiment",
    "smoothing_bound",
    "spectral_norm",
    "train",
]
