"""Reset-free approximate backward pass.

Identical to the exact engine except that ``ds[m]/dz[n]`` is taken to be zero
for ``m != n``, so ``d[n] = f'(u[n]) * p[n]``. Shares the forward run with
the other engines, so any difference isolates the gradient rule.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .forward import DenseLayer, LayerTrace, NetworkTrace
from .grad_exodus import backward_network
from .neuron import surrogate_value
from .report import GradientReport, LossGrad

__all__ = ["slayer_d", "backward_network_slayer"]


def slayer_d(trace: LayerTrace, layer: DenseLayer, p: np.ndarray) -> np.ndarray:
    return surrogate_value(layer.surrogate, trace.u) * p


def backward_network_slayer(
    net: Sequence[DenseLayer],
    trace: NetworkTrace,
    loss_grad: LossGrad,
    keep_signals: bool = False,
) -> GradientReport:
    return backward_network(net, trace, loss_grad, slayer_d, keep_signals)
