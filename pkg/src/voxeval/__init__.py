"""Voice-representation evaluation and toy-scale training harness."""

from .errors import VoxEvalError

__version__ = "0.1.0"

__all__ = ["VoxEvalError", "__version__"]
