"""Random network factories shared by the test modules."""

from __future__ import annotations

import numpy as np

from snngrad.forward import DenseLayer
from snngrad.neuron import LifParams, SrmKernels, SurrogateFamily, SurrogateSpec
from snngrad.report import LossGrad, LossKind

FAMILIES = list(SurrogateFamily)
SCALES = (0.1, 1.0, 10.0)


def random_kernels(rng: np.random.Generator, kind: str, theta: float) -> SrmKernels:
    if kind == "lif":
        return SrmKernels.from_lif(LifParams.from_alpha(float(rng.uniform(0.3, 0.95)), theta))
    if kind == "if":
        return SrmKernels.from_lif(LifParams.from_alpha(1.0, theta))
    K = int(rng.integers(1, 6))
    return SrmKernels.from_taps(rng.uniform(0.2, 1.0, K), -rng.uniform(0.2, 1.5, K))


def random_case(rng: np.random.Generator, i: int, max_width=8, max_T=64, max_layers=3):
    """One random configuration; kernel kind, family and scale cycle with ``i``."""
    kind = ("lif", "if", "fir")[i % 3]
    family = FAMILIES[(i // 3) % len(FAMILIES)]
    scale = SCALES[(i // 12) % len(SCALES)]
    theta = float(rng.uniform(0.5, 1.5))
    spec = SurrogateSpec(family=family, width=float(rng.uniform(0.3, 1.5)), theta=theta, scale=scale)
    kernels = random_kernels(rng, kind, theta)
    L = int(rng.integers(1, max_layers + 1))
    widths = [int(rng.integers(1, max_width + 1)) for _ in range(L + 1)]
    T = int(rng.integers(1, max_T + 1))
    net = [
        DenseLayer(rng.normal(scale=1.5 / np.sqrt(n_in), size=(n_out, n_in)) * 1.5, kernels, spec)
        for n_in, n_out in zip(widths[:-1], widths[1:])
    ]
    x = (rng.random((widths[0], T)) < 0.4).astype(np.float64)
    kindv = LossKind.FILTERED_OUTPUT if i % 2 == 0 else LossKind.RAW_SPIKES
    lg = LossGrad(kindv, rng.normal(size=(widths[-1], T)))
    return net, x, lg


def max_rel_dev(a, b) -> float:
    """Largest elementwise deviation over all layers, relative to the largest reference entry."""
    scale = max((np.abs(g).max() for g in b), default=0.0)
    diff = max((np.abs(x - y).max() for x, y in zip(a, b)), default=0.0)
    if scale == 0.0:
        return diff
    return diff / scale
