"""Calibration and skill evaluation for continuously updated probability forecasts."""

__version__ = "0.1.0"

from fcast_eval.core import (
    ForecastCurve,
    GameRecord,
    ScoreCurve,
    TimeGrid,
    interpolate_to_grid,
    moving_average,
)

__all__ = [
    "ForecastCurve",
    "GameRecord",
    "ScoreCurve",
    "TimeGrid",
    "interpolate_to_grid",
    "moving_average",
    "__version__",
]
