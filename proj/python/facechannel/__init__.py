"""FaceChannel facial-expression network: python surface over the C++ core."""

from ._core import (
    Head,
    Model,
    ModelConfig,
    accuracy,
    ccc,
    ccc_loss,
    confusion,
    load_model,
    mse_loss,
    pearson,
    resize_bilinear,
    run_gradient_suite,
    soft_cross_entropy,
    tpe_minimize,
)

__all__ = [
    "Head",
    "Model",
    "ModelConfig",
    "accuracy",
    "ccc",
    "ccc_loss",
    "confusion",
    "load_model",
    "mse_loss",
    "pearson",
    "resize_bilinear",
    "run_gradient_suite",
    "soft_cross_entropy",
    "tpe_minimize",
]
