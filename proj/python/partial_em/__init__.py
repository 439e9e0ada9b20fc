"""Gaussian mixture EM with partial E-steps."""

from ._core import (
    DimensionMismatch,
    Error,
    InitFailure,
    InvalidArgument,
    ShapeMismatch,
    SingularCovariance,
    classification_error,
    example1,
    fit,
    kmeans,
    load_csv,
    log_sum_exp,
    membership_error,
    observed_loglik,
)

__version__ = "0.1.0"
