"""Input validation helpers shared by the estimators."""
import numbers

import numpy as np

from .exceptions import NonFiniteError, ShapeError


def check_spectrogram(X, n_freq=None):
    """Return ``X`` as a finite complex128 (F, T, M) array."""
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim != 3:
        raise ShapeError(f"spectrogram must be (F, T, M), got shape {X.shape}")
    if min(X.shape) == 0:
        raise ShapeError(f"spectrogram has an empty axis: {X.shape}")
    X = X.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(X)):
        raise NonFiniteError("input spectrogram")
    if n_freq is not None and X.shape[0] != n_freq:
        raise ShapeError(f"expected {n_freq} frequency bins, got {X.shape[0]}")
    return X


def check_spectrograms(Xs, n_freq=None):
    """Validate a spectrogram or a sequence of them; returns a list."""
    if isinstance(Xs, np.ndarray) and Xs.ndim == 3:
        Xs = [Xs]
    out = [check_spectrogram(X, n_freq) for X in Xs]
    if not out:
        raise ShapeError("no spectrograms given")
    chans = {X.shape[2] for X in out}
    if len(chans) != 1:
        raise ShapeError(f"spectrograms disagree on channel count: {sorted(chans)}")
    return out


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if seed is None or isinstance(seed, (numbers.Integral, np.integer)):
        return np.random.default_rng(seed)
    if isinstance(seed, np.random.Generator):
        return seed
    raise ValueError(f"{seed!r} cannot be used to seed a numpy.random.Generator")


def check_positive(name, value, integer=False):
    if integer and not isinstance(value, (numbers.Integral, np.integer)):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value
