"""Independent checks: finite differences, dense implicit-function solve, and
closed-form reset-propagation products for LIF/IF neurons."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .forward import DenseLayer, LayerTrace, NetworkTrace, forward_network
from .neuron import SrmKernels, SurrogateFamily, SurrogateSpec, surrogate_value
from .report import GradientReport

__all__ = [
    "DenseJacobians",
    "DecayBoundReport",
    "MAX_DENSE_SIZE",
    "MAX_FD_WEIGHTS",
    "finite_diff_grad",
    "build_ift_jacobians",
    "solve_ift_dense",
    "chi_closed_form",
    "chi_iterative",
    "gamma_closed_form",
    "gamma_recursive",
    "chi_matrix",
    "check_decay_bound",
    "check_chi_interval",
]

logger = logging.getLogger(__name__)

MAX_DENSE_SIZE = 512
MAX_FD_WEIGHTS = 200


def finite_diff_grad(
    net: Sequence[DenseLayer],
    s_in: np.ndarray,
    loss: Callable[[NetworkTrace], float],
    h: float = 1e-5,
) -> GradientReport:
    """Central differences of ``loss`` over every weight, on the soft forward.

    Only the sigmoid family with unit scale is accepted: its surrogate is the
    exact derivative of the soft spike, so the engines and this oracle then
    differentiate the same function.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-7, 1e-3]")
    n_weights = sum(layer.weights.size for layer in net)
    if n_weights > MAX_FD_WEIGHTS:
        raise ValueError(f"{n_weights} weights exceeds the finite-difference cap {MAX_FD_WEIGHTS}")
    for layer in net:
        spec = layer.surrogate
        if spec.family is not SurrogateFamily.SIGMOID or spec.scale != 1.0 or spec.clip is not None:
            raise ValueError("finite differences need unscaled, unclipped sigmoid surrogates")

    work = [layer.copy() for layer in net]
    grads = []
    for layer in work:
        W = layer.weights
        g = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            w0 = W[idx]
            W[idx] = w0 + h
            plus = loss(forward_network(work, s_in, mode="soft"))
            W[idx] = w0 - h
            minus = loss(forward_network(work, s_in, mode="soft"))
            W[idx] = w0
            g[idx] = (plus - minus) / (2.0 * h)
        grads.append(g)
    return GradientReport(grads)


@dataclass
class DenseJacobians:
    """Jacobians of the layer constraints ``phi_s = s - f(u)`` and
    ``phi_u = u - z - (nu * s)[n-1]``.

    Rows are ordered ``(phi_s, phi_u)`` and the dependent columns ``(s, u)``;
    within a block the index is time-major, ``n*N + i``. ``fprime`` holds the
    block-diagonal surrogate matrix and ``reset`` the strictly lower
    block-Toeplitz ``d phi_u / d s``.
    """

    J_D: np.ndarray
    J_I: np.ndarray
    fprime: np.ndarray
    reset: np.ndarray
    n_neurons: int
    T: int

    def det(self) -> float:
        """Determinant via LU factorisation."""
        sign, logdet = np.linalg.slogdet(self.J_D)
        return float(sign * np.exp(logdet))


def build_ift_jacobians(
    trace: LayerTrace, kernels: SrmKernels, spec: SurrogateSpec
) -> DenseJacobians:
    N, T = trace.u.shape
    size = N * T
    if size > MAX_DENSE_SIZE:
        raise ValueError(f"N*T = {size} exceeds the dense cap {MAX_DENSE_SIZE}")
    fp = surrogate_value(spec, trace.u)
    nu = kernels.nu(T)
    F = np.diag(fp.T.ravel())
    R = np.zeros((size, size))
    eye_n = np.eye(N)
    for n in range(1, T):
        for k in range(max(0, n - nu.size), n):
            R[n * N : (n + 1) * N, k * N : (k + 1) * N] = -nu[n - 1 - k] * eye_n
    I = np.eye(size)
    J_D = np.block([[I, -F], [R, I]])
    J_I = np.vstack([np.zeros((size, size)), -I])
    return DenseJacobians(J_D=J_D, J_I=J_I, fprime=F, reset=R, n_neurons=N, T=T)


def solve_ift_dense(jac: DenseJacobians) -> np.ndarray:
    """Solve ``J_D G = -J_I`` for the ``ds/dz`` block.

    Eliminating ``du/dz`` leaves ``(I + F R) ds/dz = F`` whose matrix is unit
    lower triangular, solved by forward substitution.
    """
    size = jac.n_neurons * jac.T
    A = np.eye(size) + jac.fprime @ jac.reset
    if not np.allclose(np.triu(A, 1), 0.0) or not np.allclose(np.diag(A), 1.0):
        raise AssertionError("reduced constraint matrix is not unit lower triangular")
    return scipy.linalg.solve_triangular(A, jac.fprime, lower=True, unit_diagonal=True)


def _fp_array(fprimes) -> np.ndarray:
    fp = np.asarray(fprimes, dtype=np.float64)
    if fp.ndim == 0:
        raise ValueError("fprimes must be a sequence over time")
    return fp


def chi_closed_form(fprimes, alpha: float, theta: float, m: int, n: int):
    """``prod_{k=m+1}^{n-1} (alpha - theta f'[k])``; identity for ``n = m+1``."""
    if n <= m:
        raise ValueError(f"need n > m, got m={m}, n={n}")
    fp = _fp_array(fprimes)
    return np.prod(alpha - theta * fp[..., m + 1 : n], axis=-1)


def gamma_closed_form(fprimes, alpha: float, theta: float, m: int, n: int):
    """Reset influence ``-theta f'[m] chi_m[n]`` of a change at ``m`` seen at ``n``."""
    fp = _fp_array(fprimes)
    return -theta * fp[..., m] * chi_closed_form(fp, alpha, theta, m, n)


def chi_iterative(fprimes, alpha: float, theta: float, m: int) -> np.ndarray:
    """``chi_m[n]`` for ``n = m+1 .. T-1`` from ``chi[n+1] = chi[n] (alpha - theta f'[n])``.

    Entry ``j`` along the last axis is ``chi_m[m + 1 + j]``.
    """
    fp = _fp_array(fprimes)
    T = fp.shape[-1]
    out = np.empty(fp.shape[:-1] + (max(T - m - 1, 0),))
    chi = np.ones(fp.shape[:-1])
    for j, n in enumerate(range(m + 1, T)):
        out[..., j] = chi
        chi = chi * (alpha - theta * fp[..., n])
    return out


def gamma_recursive(fprimes, alpha: float, theta: float, m: int) -> np.ndarray:
    """``gamma_m[n]`` for ``n = m+1 .. T-1`` from the reset-kernel sum.

    ``gamma_m[n] = -theta sum_{k=m}^{n-1} alpha^{n-1-k} sigma_m[k]`` with
    ``sigma_m[k] = f'[k] gamma_m[k]`` and ``gamma_m[m] = 1``; no products of
    ``(alpha - theta f')`` are formed.
    """
    fp = _fp_array(fprimes)
    T = fp.shape[-1]
    batch = fp.shape[:-1]
    sigma = np.zeros(batch + (T,))
    sigma[..., m] = fp[..., m]
    out = np.empty(batch + (max(T - m - 1, 0),))
    for j, n in enumerate(range(m + 1, T)):
        ks = np.arange(m, n)
        g = -theta * np.sum(alpha ** (n - 1 - ks) * sigma[..., m:n], axis=-1)
        out[..., j] = g
        sigma[..., n] = fp[..., n] * g
    return out


def chi_matrix(fprimes, alpha: float, theta: float) -> np.ndarray:
    """All ``chi_m[n]`` as ``(..., T, T)`` with ``[m, n]`` filled for ``n > m`` (NaN elsewhere)."""
    fp = _fp_array(fprimes)
    T = fp.shape[-1]
    out = np.full(fp.shape[:-1] + (T, T), np.nan)
    for m in range(T - 1):
        out[..., m, m + 1 :] = chi_iterative(fp, alpha, theta, m)
    return out


@dataclass
class DecayBoundReport:
    #: max over (neuron, m, n > m) of violations of lower**k <= chi <= upper**k, k = n-m-1
    max_violation: float
    min_chi: float
    max_abs_chi: float
    #: max |chi| per lag k = n - m - 1
    max_abs_by_lag: np.ndarray

    @property
    def holds(self) -> bool:
        return self.max_violation <= 0.0


def check_chi_interval(fprimes, alpha: float, theta: float, lower: float, upper: float) -> DecayBoundReport:
    """Check ``lower**k <= chi_m[n] <= upper**k`` for every neuron and ``n > m``.

    If every ``f'`` lies in ``[f_lo, f_hi]`` with ``alpha - theta*f_hi >= 0``
    then each factor of ``chi`` lies in ``[alpha - theta*f_hi, alpha - theta*f_lo]``
    and so does the k-th root of ``chi``.
    """
    fp = np.atleast_2d(_fp_array(fprimes))
    T = fp.shape[-1]
    if T < 2:
        return DecayBoundReport(-np.inf, np.inf, 0.0, np.zeros(0))
    chi = chi_matrix(fp, alpha, theta)
    lag = np.arange(T)[None, :] - np.arange(T)[:, None] - 1
    valid = lag >= 0
    k = lag[valid]
    vals = chi[..., valid]
    over = vals - float(upper) ** k
    under = float(lower) ** k - vals
    by_lag = np.array([np.max(np.abs(chi[..., lag == j])) for j in range(T - 1)])
    return DecayBoundReport(
        max_violation=float(max(over.max(), under.max())),
        min_chi=float(vals.min()),
        max_abs_chi=float(np.abs(vals).max()),
        max_abs_by_lag=by_lag,
    )


def check_decay_bound(fprimes, alpha: float, theta: float, mu: float) -> DecayBoundReport:
    """Measure violations of ``0 <= chi_m[n] <= mu**(n-m-1)``.

    ``fprimes`` is ``(neurons, T)`` or ``(T,)``. Note the upper bound needs
    every factor ``alpha - theta*f'`` to be at most ``mu``, i.e.
    ``f' >= (alpha - mu)/theta``; surrogates confined *below* that value give
    ``chi >= mu**(n-m-1)`` instead.
    """
    if not 0.0 < mu <= alpha:
        raise ValueError(f"mu must lie in (0, alpha], got {mu}")
    return check_chi_interval(fprimes, alpha, theta, 0.0, mu)


def trace_fprimes(trace: LayerTrace, spec: SurrogateSpec) -> np.ndarray:
    return surrogate_value(spec, trace.u)
