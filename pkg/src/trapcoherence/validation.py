"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np

from .errors import ValidationError


def check_times(times, name="times", strictly_increasing=True, allow_empty=False):
    """Return ``times`` as a 1-D float array of finite, nonnegative values.

    Raises
    ------
    ValidationError
        Wrong shape, non-finite or negative entries, or (by default) a
        non-increasing sequence; the message names the first offending index.
    """
    arr = np.asarray(times, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0 and not allow_empty:
        raise ValidationError(f"{name} is empty")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise ValidationError(f"{name}[{bad[0]}] is not finite")
    bad = np.flatnonzero(arr < 0)
    if bad.size:
        raise ValidationError(f"{name}[{bad[0]}] = {arr[bad[0]]!r} is negative")
    if strictly_increasing and arr.size > 1:
        bad = np.flatnonzero(np.diff(arr) <= 0)
        if bad.size:
            raise ValidationError(f"{name} not strictly increasing at index {bad[0] + 1}")
    return arr


def check_unit_interval(value, name="value"):
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_positive(value, name="value", strict=True):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        rel = ">" if strict else ">="
        raise ValidationError(f"{name} must be finite and {rel} 0, got {value!r}")
    return value


def check_temperature(T):
    T = float(T)
    if not np.isfinite(T) or T < 0:
        raise ValidationError(f"temperature must be >= 0 K, got {T!r}")
    return T


def check_density_matrix(rho, atol=1e-10, name="rho"):
    """Check Hermiticity, unit trace and positivity to ``atol``.

    Works on a single matrix or a stack ``(..., d, d)``.
    """
    rho = np.asarray(rho)
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise ValidationError(f"{name} must be square, got shape {rho.shape}")
    herm = np.max(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2))))
    if herm > atol:
        raise ValidationError(f"{name} not Hermitian (deviation {herm:.3e})")
    tr = np.trace(rho, axis1=-2, axis2=-1)
    if np.max(np.abs(tr - 1)) > atol:
        raise ValidationError(f"{name} trace deviates from 1 by {np.max(np.abs(tr - 1)):.3e}")
    evals = np.linalg.eigvalsh(0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2))))
    if np.min(evals) < -atol:
        raise ValidationError(f"{name} has negative eigenvalue {np.min(evals):.3e}")
    return rho


def check_probabilities(weights, name="weights", atol=1e-12):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-D array")
    if np.any(w < -atol) or np.any(w > 1 + atol):
        raise ValidationError(f"{name} outside [0, 1]")
    if abs(w.sum() - 1) > 1e-9:
        raise ValidationError(f"{name} sum to {w.sum()!r}, not 1")
    return w
