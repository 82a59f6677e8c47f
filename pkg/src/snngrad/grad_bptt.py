"""Reference gradients by reverse traversal of the unrolled time/layer graph.

Adjoints are pushed node by node, latest time step first, with no shared
code from the vectorized engines. Two graphs are available:

* ``"srm"``: nodes ``a_in, z, u, s`` per step, with response-kernel edges
  ``a[m] <- s[k <= m]`` and reset edges ``u[n] <- s[k < n]``;
* ``"state"`` (LIF/IF only): the state recurrence
  ``u[n] = alpha u[n-1] + (W s_in)[n] - theta s[n-1]``.

``drop_reset=True`` deletes the reset edges, which turns this engine into an
independent implementation of the reset-free gradient.
"""

from __future__ import annotations

from typing import Literal, Sequence

import numpy as np

from .forward import DenseLayer, LayerTrace, NetworkTrace
from .neuron import SrmKernels, surrogate_value
from .report import GradientReport, LossGrad, LossKind

__all__ = ["backward_network_bptt", "backward_layer_bptt"]

Graph = Literal["auto", "srm", "state"]


def _filter_adjoint(kernels: SrmKernels, a_bar: np.ndarray, graph: str) -> np.ndarray:
    """Adjoint of spikes from the adjoint of their filtered version."""
    N, T = a_bar.shape
    s_bar = np.zeros((N, T))
    if graph == "state":
        # a[n] = alpha a[n-1] + s[n]
        alpha = kernels.lif.alpha
        carry = np.zeros(N)
        for n in range(T - 1, -1, -1):
            carry = a_bar[:, n] + alpha * carry
            s_bar[:, n] = carry
        return s_bar
    eps = kernels.epsilon(T)
    K = min(eps.size, T)
    for m in range(T - 1, -1, -1):
        # node a[m] feeds back into s[m-K+1 .. m]
        lo = max(0, m - K + 1)
        s_bar[:, lo : m + 1] += np.outer(a_bar[:, m], eps[m - lo :: -1][: m + 1 - lo])
    return s_bar


def _resolve_graph(layer: DenseLayer, graph: Graph) -> str:
    if graph == "auto":
        return "state" if layer.kernels.is_lif else "srm"
    if graph == "state" and not layer.kernels.is_lif:
        raise ValueError("state graph requires LIF kernels")
    return graph


def backward_layer_bptt(
    trace: LayerTrace,
    layer: DenseLayer,
    s_in: np.ndarray,
    s_bar_ext: np.ndarray,
    graph: Graph = "auto",
    drop_reset: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dL/dW, dL/ds_in)`` given the downstream adjoint of ``s``."""
    graph = _resolve_graph(layer, graph)
    W = layer.weights
    fp = surrogate_value(layer.surrogate, trace.u)
    N, T = fp.shape

    if graph == "state":
        alpha, theta = layer.kernels.lif.alpha, layer.kernels.lif.theta
        u_bar = np.zeros((N, T))
        u_next = np.zeros(N)
        for n in range(T - 1, -1, -1):
            s_bar = s_bar_ext[:, n]
            if not drop_reset:
                # s[n] -> u[n+1] with weight -theta
                s_bar = s_bar - theta * u_next
            u_next = fp[:, n] * s_bar + alpha * u_next
            u_bar[:, n] = u_next
        # the recurrence is driven by (W s_in)[n]
        return u_bar @ s_in.T, W.T @ u_bar

    _, nu = layer.kernels.materialize(T)
    eps = layer.kernels.epsilon(T)
    Kn, Ke = min(nu.size, T), min(eps.size, T)
    s_bar_acc = np.array(s_bar_ext, dtype=np.float64, copy=True)
    w_bar = np.zeros_like(W)
    s_in_bar = np.zeros((W.shape[1], T))
    for n in range(T - 1, -1, -1):
        # every consumer of s[n] (u[j > n] and downstream) has been visited
        u_n = fp[:, n] * s_bar_acc[:, n]
        if not drop_reset and n > 0:
            lo = max(0, n - Kn)
            # u[n] <- s[k] with weight nu[n-1-k]
            s_bar_acc[:, lo:n] += np.outer(u_n, nu[n - 1 - lo :: -1][: n - lo])
        z_n = u_n
        w_bar += np.outer(z_n, trace.a_in[:, n])
        a_n = W.T @ z_n
        lo = max(0, n - Ke + 1)
        # a_in[n] <- s_in[k] with weight eps[n-k]
        s_in_bar[:, lo : n + 1] += np.outer(a_n, eps[n - lo :: -1][: n + 1 - lo])
    return w_bar, s_in_bar


def backward_network_bptt(
    net: Sequence[DenseLayer],
    trace: NetworkTrace,
    loss_grad: LossGrad,
    graph: Graph = "auto",
    drop_reset: bool = False,
) -> GradientReport:
    if len(net) != len(trace.layers):
        raise ValueError("trace does not belong to this network")
    out_shape = trace.layers[-1].s.shape
    if loss_grad.values.shape != out_shape:
        raise ValueError(f"loss gradient shape {loss_grad.values.shape} != output {out_shape}")
    L = len(net)
    last = net[-1]
    if loss_grad.kind is LossKind.FILTERED_OUTPUT:
        s_bar = _filter_adjoint(last.kernels, loss_grad.values, _resolve_graph(last, graph))
    else:
        s_bar = loss_grad.values
    grads: list[np.ndarray] = [None] * L
    for l in range(L - 1, -1, -1):
        s_in = trace.input if l == 0 else trace.layers[l - 1].s
        grads[l], s_bar = backward_layer_bptt(
            trace.layers[l], net[l], s_in, s_bar, graph, drop_reset
        )
    return GradientReport(grads)
