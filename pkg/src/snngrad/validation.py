"""Input checks for spike-train arrays shaped ``(n_samples, channels, T)``."""

from __future__ import annotations

from typing import Optional

import numpy as np

__all__ = ["check_spike_trains", "check_target_trains", "check_labels"]


def check_spike_trains(X, n_channels: Optional[int] = None, binary: bool = True) -> np.ndarray:
    """Return ``X`` as a float64 array of shape ``(n_samples, channels, T)``.

    A single ``(channels, T)`` train is rejected rather than silently
    promoted; wrap it as ``X[None]``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(
            f"expected spike trains shaped (n_samples, channels, T), got {X.ndim}-D array"
        )
    if X.shape[0] < 1 or X.shape[1] < 1 or X.shape[2] < 1:
        raise ValueError(f"empty spike-train array of shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("spike trains contain NaN or infinity")
    if binary and not np.all((X == 0.0) | (X == 1.0)):
        raise ValueError("spike trains must contain only 0 and 1")
    if n_channels is not None and X.shape[1] != n_channels:
        raise ValueError(f"X has {X.shape[1]} channels, but the estimator was fitted with {n_channels}")
    return X


def check_target_trains(y, X: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        y = y[:, None, :]
    if y.ndim != 3:
        raise ValueError(f"expected targets shaped (n_samples, outputs, T), got {y.ndim}-D array")
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"X has {X.shape[0]} samples but y has {y.shape[0]}")
    if y.shape[2] != X.shape[2]:
        raise ValueError(f"X has {X.shape[2]} time steps but y has {y.shape[2]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain NaN or infinity")
    return y


def check_labels(y, X: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"X has {X.shape[0]} samples but y has {y.shape[0]}")
    return y
