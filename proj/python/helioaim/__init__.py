"""Heliostat aiming optimisation with a neural surrogate embedded in a MILP."""

from ._core import (
    HelioError,
    Plant,
    RunConfig,
    Surrogate,
    percent_delta,
    quality_score,
    run_cli,
    solve_surrogate,
    train,
)

__all__ = [
    "HelioError",
    "Plant",
    "RunConfig",
    "Surrogate",
    "percent_delta",
    "quality_score",
    "run_cli",
    "solve_surrogate",
    "train",
]
