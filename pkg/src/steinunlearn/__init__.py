"""Quantify how hard individual training samples are to unlearn.

A trained classifier induces a Stein kernel over its training data; row
aggregates of that kernel (plus gradient-norm and confidence baselines)
rank samples from easiest to hardest to unlearn. The package also ships
the unlearning methods themselves (gradient ascent, fine-tuning, Fisher
noise, retraining), an evaluation harness with a membership-inference
attack, and a CLI that runs the whole protocol end to end.
"""

from . import config, data, diffnet, evaluation, scoring, stein, unlearn
from .errors import (
    ArgumentError,
    ComparisonError,
    ConfigurationError,
    DataError,
    LabelError,
    NumericalError,
    ShapeError,
    SteinUnlearnError,
)

__version__ = "0.1.0"

__all__ = [
    "config",
    "data",
    "diffnet",
    "evaluation",
    "scoring",
    "stein",
    "unlearn",
    "ArgumentError",
    "ComparisonError",
    "ConfigurationError",
    "DataError",
    "LabelError",
    "NumericalError",
    "ShapeError",
    "SteinUnlearnError",
]
