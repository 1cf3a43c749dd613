"""Small input-checking helpers shared by the functional API and the estimators."""

import numbers

import numpy as np

from .exceptions import ConfigError, ShapeError


def check_int(value, name, minimum=None, maximum=None):
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(f"{name} must be <= {maximum}, got {value}")
    return value


def check_float(value, name, low=None, high=None, low_open=False, high_open=False):
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value}")
    if low is not None and (value < low or (low_open and value == low)):
        raise ConfigError(f"{name} out of range: {value}")
    if high is not None and (value > high or (high_open and value == high)):
        raise ConfigError(f"{name} out of range: {value}")
    return value


def check_matrix(x, name="X", ndim=2, dim=None, axis=0):
    """Return ``x`` as a finite float64 array with ``ndim`` dimensions.

    If ``dim`` is given, ``x.shape[axis]`` must equal it.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    if dim is not None and arr.shape[axis] != dim:
        raise ShapeError(f"{name} has size {arr.shape[axis]} along axis {axis}, expected {dim}")
    return arr


def check_same_shape(a, b, names=("a", "b")):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"{names[0]} shape {np.shape(a)} != {names[1]} shape {np.shape(b)}")


def as_generator(seed):
    """Accept ``None``, an int, a SeedSequence or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
