"""Losses, the Adam optimizer and the training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from .forward import DenseLayer, NetworkTrace, forward_network
from .grad_bptt import backward_network_bptt
from .grad_exodus import backward_network_exodus
from .grad_slayer import backward_network_slayer
from .report import GradientReport, LossGrad, LossKind, sum_reports

__all__ = [
    "ENGINES",
    "LossGrad",
    "LossKind",
    "AdamState",
    "mse_loss",
    "ce_sum_over_time",
    "ce_max_over_time",
    "adam_step",
    "compute_gradients",
    "train_loop",
    "TrainResult",
    "EpochRecord",
]

logger = logging.getLogger(__name__)

Engine = Literal["exodus", "slayer", "bptt"]

ENGINES: dict[str, Callable[[Sequence[DenseLayer], NetworkTrace, LossGrad], GradientReport]] = {
    "exodus": backward_network_exodus,
    "slayer": backward_network_slayer,
    "bptt": backward_network_bptt,
}

LossFn = Callable[..., tuple[float, LossGrad]]


def _pair(output, target):
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if output.shape != target.shape:
        raise ValueError(f"output shape {output.shape} != target shape {target.shape}")
    return output, target


def mse_loss(output, target, kind: LossKind = LossKind.FILTERED_OUTPUT) -> tuple[float, LossGrad]:
    """Mean over neurons and time of the squared error."""
    output, target = _pair(output, target)
    diff = output - target
    return float(np.mean(diff**2)), LossGrad(kind, 2.0 * diff / diff.size)


def _check_label(output: np.ndarray, label) -> int:
    label = int(label)
    if not 0 <= label < output.shape[0]:
        raise ValueError(f"label {label} out of range for {output.shape[0]} classes")
    return label


def ce_sum_over_time(output, label, kind: LossKind = LossKind.FILTERED_OUTPUT) -> tuple[float, LossGrad]:
    """Softmax cross-entropy on the time-summed output."""
    output = np.asarray(output, dtype=np.float64)
    label = _check_label(output, label)
    logits = output.sum(axis=1)
    loss = float(logsumexp(logits) - logits[label])
    g = softmax(logits)
    g[label] -= 1.0
    return loss, LossGrad(kind, np.repeat(g[:, None], output.shape[1], axis=1))


def ce_max_over_time(output, label, kind: LossKind = LossKind.FILTERED_OUTPUT) -> tuple[float, LossGrad]:
    """Softmax cross-entropy on the per-class maximum over time.

    The gradient goes to the first time bin attaining the maximum.
    """
    output = np.asarray(output, dtype=np.float64)
    label = _check_label(output, label)
    where = np.argmax(output, axis=1)
    logits = output[np.arange(output.shape[0]), where]
    loss = float(logsumexp(logits) - logits[label])
    g = softmax(logits)
    g[label] -= 1.0
    grad = np.zeros_like(output)
    grad[np.arange(output.shape[0]), where] = g
    return loss, LossGrad(kind, grad)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None
    step_count: int = 0


def adam_step(state: AdamState, grads: GradientReport, weights: Sequence[np.ndarray]) -> list[np.ndarray]:
    """One bias-corrected Adam update; returns new weight arrays.

    Non-finite gradients leave weights and moments untouched and mark the
    report as skipped.
    """
    if len(grads.weight_grads) != len(weights):
        raise ValueError("gradient and weight lists differ in length")
    for g, w in zip(grads.weight_grads, weights):
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} != weight shape {w.shape}")
    if not grads.finite:
        logger.warning("non-finite gradient at step %d; update skipped", state.step_count + 1)
        grads.skipped = True
        return [w.copy() for w in weights]
    if state.m is None:
        state.m = [np.zeros_like(w) for w in weights]
        state.v = [np.zeros_like(w) for w in weights]
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    out = []
    for w, g, m, v in zip(weights, grads.weight_grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        out.append(w - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps_hat))
    return out


def compute_gradients(
    net: Sequence[DenseLayer],
    batch: Sequence[tuple[np.ndarray, object]],
    loss_fn: LossFn,
    engine: Engine = "exodus",
    loss_kind: LossKind = LossKind.FILTERED_OUTPUT,
) -> tuple[float, GradientReport]:
    """Forward and backward over a batch; losses averaged, gradients summed."""
    backward = ENGINES[engine]
    loss_kind = LossKind(loss_kind)
    losses, reports = [], []
    for x, target in batch:
        trace = forward_network(net, x, mode="hard")
        out = trace.output if loss_kind is LossKind.FILTERED_OUTPUT else trace.output_spikes
        loss, lg = loss_fn(out, target, kind=loss_kind)
        if lg.kind is not loss_kind:
            raise ValueError(f"loss produced a {lg.kind.value} gradient for a {loss_kind.value} output")
        losses.append(loss)
        reports.append(backward(net, trace, lg))
    return float(np.mean(losses)), sum_reports(reports)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    grad_norms: list[float]


@dataclass
class TrainResult:
    net: list[DenseLayer]
    history: list[EpochRecord] = field(default_factory=list)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.history])


def train_loop(
    net: Sequence[DenseLayer],
    dataset: Sequence[tuple[np.ndarray, object]],
    engine: Engine = "exodus",
    epochs: int = 1,
    loss_fn: LossFn = mse_loss,
    loss_kind: LossKind = LossKind.FILTERED_OUTPUT,
    optimizer: AdamState | None = None,
    batch_size: int = 1,
    seed: int | None = 0,
    shuffle: bool = True,
) -> TrainResult:
    """Train a copy of ``net``; the input network is left untouched.

    Each record holds the mean pre-update loss of the epoch and the per-layer
    gradient norms averaged over its steps. Sample order depends on ``seed``
    only, so runs that differ only in ``engine`` see identical data streams.
    """
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; choose from {sorted(ENGINES)}")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    net = [layer.copy() for layer in net]
    opt = optimizer if optimizer is not None else AdamState()
    rng = np.random.default_rng(seed)
    result = TrainResult(net)
    n = len(dataset)
    for epoch in range(epochs):
        order = rng.permutation(n) if shuffle else np.arange(n)
        losses, norms = [], []
        for start in range(0, n, batch_size):
            batch = [dataset[i] for i in order[start : start + batch_size]]
            loss, report = compute_gradients(net, batch, loss_fn, engine, loss_kind)
            new_w = adam_step(opt, report, [layer.weights for layer in net])
            for layer, w in zip(net, new_w):
                layer.weights = w
            losses.append(loss)
            norms.append(report.layer_grad_norms)
        rec = EpochRecord(epoch, float(np.mean(losses)), np.mean(norms, axis=0).tolist())
        result.history.append(rec)
        logger.debug("epoch %d engine=%s loss=%.6g", epoch, engine, rec.loss)
    return result
