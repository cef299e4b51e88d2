"""Blockwise autoregressive image generator with parameterized-circuit features."""
from ._validation import (ConfigError, DatasetFormatError, DimensionError, InsufficientDataError,
                          InvariantViolation, QFANError, StateError)
from .estimator import PrefixSketcher, QFANGenerator
from .generation import ModelBundle, generate_batch, generate_one
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DatasetFormatError", "DimensionError", "InsufficientDataError", "InvariantViolation",
    "ModelBundle", "PrefixSketcher", "QFANError", "QFANGenerator", "StateError", "TrainConfig",
    "generate_batch", "generate_one", "train",
]
