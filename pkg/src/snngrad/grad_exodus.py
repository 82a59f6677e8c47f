"""Exact vectorized backward pass through the reset loop of each layer.

Inside a layer the potential ``u`` and the spikes ``s`` depend on each other
through the reset kernel, so ``ds/dz`` is obtained by solving the layer's
constraint system rather than by a naive chain rule. The solution is lower
triangular in time: with ``f'[m]`` the surrogate derivative,

    sigma_n[n] = f'[n]
    sigma_n[m] = f'[m] * sum_{k=n}^{m-1} nu[m-1-k] * sigma_n[k]     (m > n)

and ``d[n] = dL/dz[n] = sum_{m >= n} p[m] * sigma_n[m]`` where ``p = dL/ds``.
Production code never stores ``sigma``: ``d`` follows from one backward
sweep, O(T*K) for generic kernels and O(T) for LIF/IF.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from .forward import DenseLayer, LayerTrace, NetworkTrace
from .neuron import LifParams, SrmKernels, SurrogateSpec, surrogate_value
from .report import GradientReport, LossGrad, LossKind
from .signal import correlate_time, exp_correlate, reverse_affine_scan

__all__ = [
    "SigmaBlock",
    "sigma_srm",
    "sigma_lif_closed_form",
    "exodus_d",
    "backward_layer_exodus",
    "backward_network_exodus",
    "spike_grad_from_filtered",
]

Method = Literal["auto", "scan", "recursion", "sigma"]


@dataclass
class SigmaBlock:
    """``entries[i, n, m] = d s_i[m] / d z_i[n]``; zero for ``m < n``.

    Only neuron-diagonal blocks exist because the reset acts per neuron.
    """

    entries: np.ndarray

    @property
    def n_neurons(self) -> int:
        return self.entries.shape[0]

    @property
    def T(self) -> int:
        return self.entries.shape[1]

    def to_dense(self) -> np.ndarray:
        """Dense ``ds/dz`` of size ``(N*T, N*T)``, time-major (index ``n*N + i``)."""
        N, T = self.n_neurons, self.T
        dense = np.zeros((N * T, N * T))
        idx = np.arange(N)
        for n in range(T):
            for m in range(n, T):
                dense[m * N + idx, n * N + idx] = self.entries[:, n, m]
        return dense


def sigma_srm(trace: LayerTrace, kernels: SrmKernels, spec: SurrogateSpec) -> SigmaBlock:
    """Full O(T^2) derivative block by forward substitution (reference path)."""
    T = trace.T
    fp = surrogate_value(spec, trace.u)
    nu = kernels.nu(T)
    N = fp.shape[0]
    sig = np.zeros((N, T, T))
    for n in range(T):
        sig[:, n, n] = fp[:, n]
        for m in range(n + 1, T):
            lo = max(n, m - nu.size)
            ks = np.arange(lo, m)
            acc = sig[:, n, ks] @ nu[m - 1 - ks]
            sig[:, n, m] = fp[:, m] * acc
    return SigmaBlock(sig)


def sigma_lif_closed_form(
    trace: LayerTrace, params: LifParams, spec: SurrogateSpec
) -> SigmaBlock:
    """Derivative block for LIF/IF kernels from the product form.

    ``sigma_n[m] = -theta f'[n] f'[m] chi_n[m]`` with
    ``chi_n[m] = prod_{k=n+1}^{m-1} (alpha - theta f'[k])``.
    """
    alpha, theta = params.alpha, params.theta
    fp = surrogate_value(spec, trace.u)
    N, T = fp.shape
    sig = np.zeros((N, T, T))
    factors = alpha - theta * fp
    for n in range(T):
        sig[:, n, n] = fp[:, n]
        chi = np.ones(N)
        for m in range(n + 1, T):
            sig[:, n, m] = -theta * fp[:, n] * fp[:, m] * chi
            chi = chi * factors[:, m]
    return SigmaBlock(sig)


def _d_lif_sequential(fp: np.ndarray, p: np.ndarray, alpha: float, theta: float) -> np.ndarray:
    # q[n] = sum_{m>n} f'[m] chi_n[m] p[m], accumulated backwards in time
    N, T = fp.shape
    d = np.empty((N, T))
    q = np.zeros(N)
    d[:, T - 1] = fp[:, T - 1] * p[:, T - 1]
    for n in range(T - 2, -1, -1):
        q = fp[:, n + 1] * p[:, n + 1] + (alpha - theta * fp[:, n + 1]) * q
        d[:, n] = fp[:, n] * (p[:, n] - theta * q)
    return d


def _d_lif_scan(fp: np.ndarray, p: np.ndarray, alpha: float, theta: float) -> np.ndarray:
    # same recursion as above, solved as a parallel scan over time
    b = np.zeros_like(fp)
    c = np.zeros_like(fp)
    b[:, :-1] = fp[:, 1:] * p[:, 1:]
    c[:, :-1] = alpha - theta * fp[:, 1:]
    q = reverse_affine_scan(b, c)
    return fp * (p - theta * q)


def _d_generic(fp: np.ndarray, p: np.ndarray, nu: np.ndarray) -> np.ndarray:
    # transposed forward substitution: y[n] = p[n] + sum_j nu[j] f'[n+1+j] y[n+1+j]
    N, T = fp.shape
    d = np.zeros((N, T))
    K = nu.size
    for n in range(T - 1, -1, -1):
        hi = min(T, n + 1 + K)
        y = p[:, n]
        if hi > n + 1:
            y = y + d[:, n + 1 : hi] @ nu[: hi - n - 1]
        d[:, n] = fp[:, n] * y
    return d


def exodus_d(
    trace: LayerTrace, layer: DenseLayer, p: np.ndarray, method: Method = "auto"
) -> np.ndarray:
    """Gradient w.r.t. ``z`` given ``p = dL/ds`` for one layer.

    For LIF/IF kernels ``"auto"`` and ``"scan"`` use the parallel scan and
    ``"recursion"`` the step-by-step loop; generic kernels always use the
    O(T*K) backward substitution. ``"sigma"`` materializes the full block.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != trace.u.shape:
        raise ValueError(f"spike gradient shape {p.shape} != trace shape {trace.u.shape}")
    kernels = layer.kernels
    if method == "sigma":
        if kernels.is_lif:
            sig = sigma_lif_closed_form(trace, kernels.lif, layer.surrogate)
        else:
            sig = sigma_srm(trace, kernels, layer.surrogate)
        return np.einsum("inm,im->in", sig.entries, p)
    fp = surrogate_value(layer.surrogate, trace.u)
    if kernels.is_lif:
        if method == "recursion":
            return _d_lif_sequential(fp, p, kernels.lif.alpha, kernels.lif.theta)
        return _d_lif_scan(fp, p, kernels.lif.alpha, kernels.lif.theta)
    return _d_generic(fp, p, kernels.nu(trace.T))


def spike_grad_from_filtered(kernels: SrmKernels, e: np.ndarray) -> np.ndarray:
    """Carry ``dL/da`` back through ``a = epsilon * s``."""
    if kernels.is_lif:
        return exp_correlate(kernels.lif.alpha, e)
    return correlate_time(kernels.epsilon(e.shape[-1]), e)


def backward_layer_exodus(
    trace: LayerTrace,
    layer: DenseLayer,
    e_out: np.ndarray,
    output_kernels: Optional[SrmKernels] = None,
    method: Method = "auto",
) -> tuple[np.ndarray, np.ndarray]:
    """Back-propagate ``e_out = dL/da`` of this layer's filtered output.

    ``output_kernels`` supplies the response kernel that filters this layer's
    spikes (the consuming layer's kernels); defaults to the layer's own.
    Returns ``(d, e_prev)`` with ``e_prev = dL/da_in``.
    """
    e_out = np.asarray(e_out, dtype=np.float64)
    if e_out.shape != trace.s.shape:
        raise ValueError(f"error shape {e_out.shape} != output shape {trace.s.shape}")
    p = spike_grad_from_filtered(output_kernels or layer.kernels, e_out)
    d = exodus_d(trace, layer, p, method)
    return d, layer.weights.T @ d


DRule = Callable[[LayerTrace, DenseLayer, np.ndarray], np.ndarray]


def backward_network(
    net: Sequence[DenseLayer],
    trace: NetworkTrace,
    loss_grad: LossGrad,
    d_rule: DRule,
    keep_signals: bool = False,
) -> GradientReport:
    """Layer-by-layer backward sweep shared by the vectorized engines."""
    if len(net) != len(trace.layers):
        raise ValueError("trace does not belong to this network")
    out_shape = trace.layers[-1].s.shape
    if loss_grad.values.shape != out_shape:
        raise ValueError(f"loss gradient shape {loss_grad.values.shape} != output {out_shape}")
    L = len(net)
    grads: list[np.ndarray] = [None] * L
    ds: list[np.ndarray] = [None] * L
    es: list[np.ndarray] = [None] * L
    e = None
    for l in range(L - 1, -1, -1):
        layer, tr = net[l], trace.layers[l]
        if l == L - 1:
            if loss_grad.kind is LossKind.FILTERED_OUTPUT:
                e = loss_grad.values
                p = spike_grad_from_filtered(layer.kernels, e)
            else:
                e = None
                p = loss_grad.values
        else:
            p = spike_grad_from_filtered(net[l + 1].kernels, e)
        es[l] = e
        d = d_rule(tr, layer, p)
        ds[l] = d
        grads[l] = d @ tr.a_in.T
        e = layer.weights.T @ d
    if keep_signals:
        return GradientReport(grads, d_signals=ds, e_signals=es)
    return GradientReport(grads)


def backward_network_exodus(
    net: Sequence[DenseLayer],
    trace: NetworkTrace,
    loss_grad: LossGrad,
    keep_signals: bool = False,
    method: Method = "auto",
) -> GradientReport:
    """Exact weight gradients, equal to full BPTT over the same forward run."""
    return backward_network(
        net, trace, loss_grad, lambda tr, layer, p: exodus_d(tr, layer, p, method), keep_signals
    )
