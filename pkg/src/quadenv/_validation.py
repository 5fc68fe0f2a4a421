"""Small input validation helpers shared across modules."""
import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvalidArgumentError


def as_matrix(A):
    """Return ``A`` as a finite 2-D float array (a SensingMatrix is unwrapped)."""
    entries = getattr(A, "entries", A)
    try:
        return check_array(entries, dtype=np.float64, ensure_2d=True,
                           ensure_all_finite=True, copy=False)
    except ValueError as exc:
        raise InvalidArgumentError(str(exc)) from exc


def as_vector(x, length=None, name="x"):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    if length is not None and arr.shape[0] != length:
        raise InvalidArgumentError(
            f"{name} has length {arr.shape[0]}, expected {length}")
    return arr


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise InvalidArgumentError(f"{name} must be a positive finite number, got {value}")
    return float(value)


def check_sparsity_level(K, n):
    if int(K) != K or K < 0:
        raise InvalidArgumentError(f"K must be a non-negative integer, got {K}")
    if K > n:
        raise InvalidArgumentError(f"K={K} exceeds the dimension n={n}")
    return int(K)
