"""Forward simulation of feed-forward spiking networks built from dense layers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .neuron import SrmKernels, SurrogateSpec, soft_spike_fn, spike_fn
from .signal import causal_conv, delayed_conv, exp_filter

__all__ = [
    "DenseLayer",
    "LayerTrace",
    "NetworkTrace",
    "forward_layer",
    "forward_network",
    "init_weights",
    "make_network",
    "layer_residuals",
]

Mode = Literal["hard", "soft"]


@dataclass(eq=False)
class DenseLayer:
    """All-to-all projection followed by a population of SRM neurons.

    ``weights`` has shape ``(n_out, n_in)``. The firing threshold is
    ``surrogate.theta``; for LIF kernels it must match the kernel threshold.
    """

    weights: np.ndarray
    kernels: SrmKernels
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, copy=True)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if self.kernels.is_lif and self.kernels.lif.theta != self.surrogate.theta:
            raise ValueError(
                f"LIF threshold {self.kernels.lif.theta} differs from surrogate threshold "
                f"{self.surrogate.theta}"
            )

    @property
    def theta(self) -> float:
        return self.surrogate.theta

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.kernels, self.surrogate)


@dataclass
class LayerTrace:
    """Signals recorded by one layer over a run, each ``(neurons, T)``."""

    a_in: np.ndarray
    z: np.ndarray
    u: np.ndarray
    s: np.ndarray

    @property
    def T(self) -> int:
        return self.u.shape[-1]


@dataclass
class NetworkTrace:
    layers: list[LayerTrace]
    input: np.ndarray
    # last layer's spikes filtered by its own response kernel
    output: np.ndarray

    @property
    def output_spikes(self) -> np.ndarray:
        return self.layers[-1].s


def init_weights(n_out: int, n_in: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform in ``[-b, b]`` with ``b = sqrt(1 / n_in)``."""
    bound = np.sqrt(1.0 / n_in)
    return rng.uniform(-bound, bound, size=(n_out, n_in))


def make_network(
    sizes: Sequence[int],
    kernels: SrmKernels,
    surrogate: SurrogateSpec,
    rng: np.random.Generator | int | None = None,
) -> list[DenseLayer]:
    """Layers ``sizes[0] -> sizes[1] -> ... -> sizes[-1]`` with shared neuron model."""
    if len(sizes) < 2:
        raise ValueError("a network needs an input size and at least one layer")
    rng = np.random.default_rng(rng)
    return [
        DenseLayer(init_weights(n_out, n_in, rng), kernels, surrogate)
        for n_in, n_out in zip(sizes[:-1], sizes[1:])
    ]


def _spike(layer: DenseLayer, u: np.ndarray, mode: Mode) -> np.ndarray:
    if mode == "hard":
        return spike_fn(u, layer.theta)
    if mode == "soft":
        return soft_spike_fn(layer.surrogate, u)
    raise ValueError(f"mode must be 'hard' or 'soft', got {mode!r}")


def _check_input(layer: DenseLayer, s_in: np.ndarray) -> np.ndarray:
    s_in = np.asarray(s_in, dtype=np.float64)
    if s_in.ndim != 2:
        raise ValueError(f"input spikes must be (channels, T), got shape {s_in.shape}")
    if s_in.shape[0] != layer.n_in:
        raise ValueError(f"layer expects {layer.n_in} input channels, got {s_in.shape[0]}")
    if s_in.shape[1] < 1:
        raise ValueError("need at least one time step")
    return s_in


def forward_layer(
    layer: DenseLayer,
    s_in: np.ndarray,
    mode: Mode = "hard",
    method: Literal["auto", "conv", "recurrence"] = "auto",
) -> LayerTrace:
    """Simulate one layer.

    ``method="conv"`` evaluates the kernel form directly; ``"recurrence"``
    (LIF kernels only) uses ``u[n] = alpha*u[n-1] + (W s_in)[n] - theta*s[n-1]``.
    ``"auto"`` picks the recurrence whenever it applies.
    """
    s_in = _check_input(layer, s_in)
    T = s_in.shape[1]
    kernels = layer.kernels
    if method == "auto":
        method = "recurrence" if kernels.is_lif else "conv"
    if method == "recurrence" and not kernels.is_lif:
        raise ValueError("the recurrence is only available for LIF kernels")

    N = layer.n_out
    u = np.empty((N, T))
    s = np.empty((N, T))

    if method == "recurrence":
        alpha, theta = kernels.lif.alpha, kernels.lif.theta
        a_in = exp_filter(alpha, s_in)
        z = layer.weights @ a_in
        drive = layer.weights @ s_in
        u_prev = np.zeros(N)
        s_prev = np.zeros(N)
        for n in range(T):
            u_prev = alpha * u_prev + drive[:, n] - theta * s_prev
            s_prev = _spike(layer, u_prev, mode)
            u[:, n] = u_prev
            s[:, n] = s_prev
        return LayerTrace(a_in=a_in, z=z, u=u, s=s)

    eps, nu = kernels.materialize(T)
    a_in = causal_conv(eps, s_in)
    z = layer.weights @ a_in
    # reset[:, n] collects (nu * s)[n - 1] as spikes are produced
    reset = np.zeros((N, T))
    K = min(nu.size, T)
    for n in range(T):
        u[:, n] = z[:, n] + reset[:, n]
        s[:, n] = _spike(layer, u[:, n], mode)
        hi = min(n + 1 + K, T)
        if hi > n + 1:
            reset[:, n + 1 : hi] += np.outer(s[:, n], nu[: hi - n - 1])
    return LayerTrace(a_in=a_in, z=z, u=u, s=s)


def forward_network(
    net: Sequence[DenseLayer],
    s_in: np.ndarray,
    mode: Mode = "hard",
    method: Literal["auto", "conv", "recurrence"] = "auto",
) -> NetworkTrace:
    if len(net) == 0:
        raise ValueError("network has no layers")
    for prev, nxt in zip(net[:-1], net[1:]):
        if prev.n_out != nxt.n_in:
            raise ValueError(f"layer sizes do not chain: {prev.n_out} -> {nxt.n_in}")
    s_in = np.asarray(s_in, dtype=np.float64)
    traces = []
    x = s_in
    for layer in net:
        tr = forward_layer(layer, x, mode, method)
        traces.append(tr)
        x = tr.s
    last = net[-1]
    T = s_in.shape[1]
    if last.kernels.is_lif:
        out = exp_filter(last.kernels.lif.alpha, x)
    else:
        out = causal_conv(last.kernels.epsilon(T), x)
    return NetworkTrace(layers=traces, input=s_in, output=out)


def layer_residuals(layer: DenseLayer, trace: LayerTrace, mode: Mode = "hard"):
    """Return ``(phi_u, phi_s)``, the constraint residuals of a recorded trace."""
    _, nu = layer.kernels.materialize(trace.T)
    phi_u = trace.u - trace.z - delayed_conv(nu, trace.s)
    phi_s = trace.s - _spike(layer, trace.u, mode)
    return phi_u, phi_s
