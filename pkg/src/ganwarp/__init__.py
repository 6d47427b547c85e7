"""Control-point warping and weight rewriting for a small image generator."""

from .backend import BACKEND
from .tensor import Tape, Tensor

__version__ = "0.1.0"
__all__ = ["BACKEND", "Tape", "Tensor", "__version__"]
