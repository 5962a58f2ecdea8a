"""Attribute-aware pooling: co-occurrence priors, the pooling layer with its
manual backward pass, a small multi-branch model, synthetic data and metrics."""

from ._core import (
    AapForwardCache,
    CoOccurrencePriors,
    Error,
    SyntheticSpec,
    TrainedModel,
    aap_backward,
    aap_forward,
    aap_loss,
    auxiliary_hard,
    auxiliary_soft,
    binarize,
    build_priors,
    calibrate_thresholds,
    check_layer_gradients,
    check_model_gradients,
    default_synthetic_spec,
    evaluate,
    example_based,
    finite_difference_grad,
    generate_synthetic,
    hard_indicator,
    load_model,
    load_priors,
    local_max_pool,
    mean_accuracy,
    train_model,
)

__all__ = [
    "AapForwardCache",
    "CoOccurrencePriors",
    "Error",
    "SyntheticSpec",
    "TrainedModel",
    "aap_backward",
    "aap_forward",
    "aap_loss",
    "auxiliary_hard",
    "auxiliary_soft",
    "binarize",
    "build_priors",
    "calibrate_thresholds",
    "check_layer_gradients",
    "check_model_gradients",
    "default_synthetic_spec",
    "evaluate",
    "example_based",
    "finite_difference_grad",
    "generate_synthetic",
    "hard_indicator",
    "load_model",
    "load_priors",
    "local_max_pool",
    "mean_accuracy",
    "train_model",
]

__version__ = "0.1.0"
