"""Small input-checking helpers shared by the modules."""

import numpy as np


class PreconditionError(ValueError):
    """An operation was called outside its documented domain."""


class InvariantViolation(RuntimeError):
    """A property that must always hold was observed to fail."""


def as_points(points, dim=None, name="points"):
    """Return a float array of shape (n, d); a single vector becomes one row."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a vector or a 2-d array of vectors")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return float(value)


def check_random_state(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
