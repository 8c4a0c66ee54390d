"""Herding detection from cross-sectional return dispersion."""

from ._core import (
    EstimationError,
    InputError,
    auto_bandwidth,
    brute_force_loglik,
    dispersion,
    fit_ms,
    hamilton_filter,
    newey_west_cov,
    ols_fit,
    run_cli,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "EstimationError",
    "InputError",
    "auto_bandwidth",
    "brute_force_loglik",
    "dispersion",
    "fit_ms",
    "hamilton_filter",
    "newey_west_cov",
    "ols_fit",
    "run_cli",
    "simulate",
]
