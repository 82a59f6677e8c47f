"""Containers exchanged between losses, backward engines and optimizers."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

__all__ = ["LossKind", "LossGrad", "GradientReport", "sum_reports", "grad_norm"]


class LossKind(str, Enum):
    #: gradient w.r.t. the response-filtered output of the last layer
    FILTERED_OUTPUT = "filtered"
    #: gradient w.r.t. the raw output spikes of the last layer
    RAW_SPIKES = "raw"


@dataclass
class LossGrad:
    kind: LossKind
    values: np.ndarray

    def __post_init__(self):
        self.kind = LossKind(self.kind)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"loss gradient must be (neurons, T), got {self.values.shape}")

    def __add__(self, other: "LossGrad") -> "LossGrad":
        if self.kind is not other.kind:
            raise ValueError("cannot add loss gradients of different kinds")
        return LossGrad(self.kind, self.values + other.values)


def grad_norm(g: np.ndarray) -> float:
    """Root-mean-square of the entries, i.e. the 2-norm normalised by size."""
    return float(np.linalg.norm(g) / np.sqrt(g.size))


@dataclass
class GradientReport:
    """Weight gradients for every layer, input layer first."""

    weight_grads: list[np.ndarray]
    # per-layer d (gradient w.r.t. z), retained when requested
    d_signals: Optional[list[np.ndarray]] = None
    # dL/da for each layer's filtered output, when retained
    e_signals: Optional[list[np.ndarray]] = None
    finite: bool = field(init=False)
    #: set by the optimizer when it refused to apply these gradients
    skipped: bool = field(default=False, init=False)

    def __post_init__(self):
        self.finite = all(np.all(np.isfinite(g)) for g in self.weight_grads)

    @property
    def layer_grad_norms(self) -> list[float]:
        return [grad_norm(g) for g in self.weight_grads]

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.weight_grads])


def sum_reports(reports: Sequence[GradientReport]) -> GradientReport:
    """Sum gradients over batch samples in a fixed order."""
    if not reports:
        raise ValueError("no reports to sum")
    total = [g.copy() for g in reports[0].weight_grads]
    for rep in reports[1:]:
        for acc, g in zip(total, rep.weight_grads):
            acc += g
    return GradientReport(total)
