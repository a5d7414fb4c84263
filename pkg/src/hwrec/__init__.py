"""Online handwritten character recognition: preprocessing, features and classifiers."""

from .core import Character, DataError, Dataset, HwrecError, ModelBundle, NumericError

__version__ = "0.1.0"

__all__ = ["Character", "DataError", "Dataset", "HwrecError", "ModelBundle", "NumericError"]
