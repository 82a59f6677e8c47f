"""Causal discrete-time convolution and correlation over the last (time) axis.

Arrays are ``(channels, T)``; signals before ``n = 0`` are taken to be zero.
All routines also accept 1-D arrays, treated as a single channel.
"""

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "causal_conv",
    "delayed_conv",
    "correlate_time",
    "exp_filter",
    "exp_correlate",
    "reverse_affine_scan",
    "as_kernel",
]


def as_kernel(taps) -> np.ndarray:
    """Validate kernel taps and return them as a 1-D float64 array."""
    taps = np.atleast_1d(np.asarray(taps, dtype=np.float64))
    if taps.ndim != 1:
        raise ValueError(f"kernel must be 1-D, got shape {taps.shape}")
    if taps.size == 0:
        raise ValueError("kernel must have at least one tap")
    if not np.all(np.isfinite(taps)):
        raise ValueError("kernel taps must be finite")
    return taps


def causal_conv(kernel, x: np.ndarray) -> np.ndarray:
    """``y[n] = sum_{k=0}^{min(n, K-1)} kernel[k] * x[n - k]``."""
    taps = as_kernel(kernel)
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    y = np.zeros_like(x)
    for k in range(min(taps.size, T)):
        if taps[k] != 0.0:
            y[..., k:] += taps[k] * x[..., : T - k]
    return y


def delayed_conv(kernel, x: np.ndarray) -> np.ndarray:
    """Causal convolution delayed by one step, with ``y[0] = 0``."""
    full = causal_conv(kernel, x)
    y = np.zeros_like(full)
    y[..., 1:] = full[..., :-1]
    return y


def correlate_time(kernel, e: np.ndarray) -> np.ndarray:
    """Anti-causal correlation ``y[m] = sum_{k >= m} kernel[k - m] * e[k]``.

    This is the transpose of :func:`causal_conv`: it carries a gradient with
    respect to a filtered signal back onto the unfiltered one.
    """
    taps = as_kernel(kernel)
    e = np.asarray(e, dtype=np.float64)
    T = e.shape[-1]
    y = np.zeros_like(e)
    for k in range(min(taps.size, T)):
        if taps[k] != 0.0:
            y[..., : T - k] += taps[k] * e[..., k:]
    return y


def exp_filter(alpha: float, x: np.ndarray) -> np.ndarray:
    """Causal convolution with ``alpha**n`` in O(T) via a first-order recursion."""
    return lfilter([1.0], [1.0, -alpha], np.asarray(x, dtype=np.float64), axis=-1)


def exp_correlate(alpha: float, e: np.ndarray) -> np.ndarray:
    """Correlation with ``alpha**n``; the O(T) counterpart of :func:`correlate_time`."""
    e = np.asarray(e, dtype=np.float64)
    return lfilter([1.0], [1.0, -alpha], e[..., ::-1], axis=-1)[..., ::-1]


def reverse_affine_scan(b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve ``q[n] = b[n] + c[n] * q[n+1]`` backwards in time, ``q[T] = 0``.

    Two-level chunked scan: time is cut into ~sqrt(T) chunks that are solved
    side by side, then chunk carries are chained and folded back in. Work is
    O(T) per channel with O(sqrt(T)) sequential steps.
    """
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    lead = b.shape[:-1]
    T = b.shape[-1]
    C = max(1, int(np.ceil(np.sqrt(T))))
    n_chunks = -(-T // C)
    pad = n_chunks * C - T
    # reversed time turns this into x[t] = B[t] + A[t] x[t-1]
    B = np.concatenate([b[..., ::-1], np.zeros(lead + (pad,))], axis=-1).reshape(lead + (n_chunks, C))
    A = np.concatenate([c[..., ::-1], np.zeros(lead + (pad,))], axis=-1).reshape(lead + (n_chunks, C))
    x = np.empty_like(B)
    P = np.empty_like(A)
    x[..., 0] = B[..., 0]
    P[..., 0] = A[..., 0]
    for i in range(1, C):
        x[..., i] = B[..., i] + A[..., i] * x[..., i - 1]
        P[..., i] = A[..., i] * P[..., i - 1]
    carry = np.zeros(lead + (n_chunks,))
    for j in range(1, n_chunks):
        carry[..., j] = x[..., j - 1, C - 1] + P[..., j - 1, C - 1] * carry[..., j - 1]
    x += P * carry[..., None]
    return x.reshape(lead + (n_chunks * C,))[..., :T][..., ::-1]
