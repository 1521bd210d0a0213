class VoxEvalError(Exception):
    """Base class for errors raised by voxeval; the CLI maps these to exit 1."""
