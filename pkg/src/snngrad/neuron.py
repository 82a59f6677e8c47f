"""Neuron parameterizations, spike generation and surrogate derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.special import expit

from .signal import as_kernel

__all__ = [
    "LifParams",
    "SrmKernels",
    "SurrogateFamily",
    "SurrogateSpec",
    "spike_fn",
    "surrogate_value",
    "soft_spike_fn",
]


@dataclass(frozen=True)
class LifParams:
    """Leaky integrate-and-fire parameters.

    ``tau = inf`` gives an integrate-and-fire neuron (``alpha == 1``).
    """

    tau: float
    dt: float = 1e-3
    theta: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise ValueError(f"theta must be positive and finite, got {self.theta}")

    @property
    def alpha(self) -> float:
        if math.isinf(self.tau):
            return 1.0
        return math.exp(-self.dt / self.tau)

    @classmethod
    def from_alpha(cls, alpha: float, theta: float = 1.0, dt: float = 1e-3) -> "LifParams":
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        tau = math.inf if alpha == 1.0 else -dt / math.log(alpha)
        return cls(tau=tau, dt=dt, theta=theta)


@dataclass(frozen=True, eq=False)
class SrmKernels:
    """Spike-response kernel ``epsilon`` and reset kernel ``nu``.

    Build with :meth:`from_lif` for the parametric LIF/IF form
    (``epsilon[n] = alpha**n``, ``nu[n] = -theta * alpha**n``) or
    :meth:`from_taps` for arbitrary finite causal kernels.
    """

    epsilon_taps: Optional[np.ndarray] = None
    nu_taps: Optional[np.ndarray] = None
    lif: Optional[LifParams] = None

    @classmethod
    def from_lif(cls, params: LifParams) -> "SrmKernels":
        return cls(lif=params)

    @classmethod
    def from_taps(cls, epsilon, nu) -> "SrmKernels":
        return cls(epsilon_taps=as_kernel(epsilon), nu_taps=as_kernel(nu))

    def __post_init__(self):
        if self.lif is None and (self.epsilon_taps is None or self.nu_taps is None):
            raise ValueError("either LIF parameters or both kernels are required")

    @property
    def is_lif(self) -> bool:
        return self.lif is not None

    def epsilon(self, T: int) -> np.ndarray:
        if self.lif is not None:
            return self.lif.alpha ** np.arange(T, dtype=np.float64)
        return self.epsilon_taps

    def nu(self, T: int) -> np.ndarray:
        if self.lif is not None:
            return -self.lif.theta * self.epsilon(T)
        return self.nu_taps

    def materialize(self, T: int) -> tuple[np.ndarray, np.ndarray]:
        return self.epsilon(T), self.nu(T)

    def __eq__(self, other):
        if not isinstance(other, SrmKernels):
            return NotImplemented
        if self.lif is not None or other.lif is not None:
            return self.lif == other.lif
        return np.array_equal(self.epsilon_taps, other.epsilon_taps) and np.array_equal(
            self.nu_taps, other.nu_taps
        )

    def to_dict(self) -> dict:
        if self.lif is not None:
            return {"form": "lif", "tau": self.lif.tau, "dt": self.lif.dt, "theta": self.lif.theta}
        return {
            "form": "fir",
            "epsilon": self.epsilon_taps.tolist(),
            "nu": self.nu_taps.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SrmKernels":
        if d["form"] == "lif":
            return cls.from_lif(LifParams(tau=float(d["tau"]), dt=float(d["dt"]), theta=float(d["theta"])))
        if d["form"] == "fir":
            return cls.from_taps(d["epsilon"], d["nu"])
        raise ValueError(f"unknown kernel form {d['form']!r}")


class SurrogateFamily(str, Enum):
    EXPONENTIAL = "exponential"
    PIECEWISE_LINEAR = "piecewise_linear"
    TANH = "tanh"
    SIGMOID = "sigmoid"


@dataclass(frozen=True)
class SurrogateSpec:
    """Surrogate derivative of the spike function.

    ``scale`` multiplies the family's base derivative. ``clip``, when set,
    caps the scaled derivative from above; it is how a surrogate is confined
    to ``[0, (alpha - mu) / theta]`` for the decay-bound analysis.
    """

    family: SurrogateFamily = SurrogateFamily.EXPONENTIAL
    width: float = 1.0
    theta: float = 1.0
    scale: float = 1.0
    clip: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", SurrogateFamily(self.family))
        if not self.width > 0:
            raise ValueError(f"width must be positive, got {self.width}")
        if not math.isfinite(self.theta):
            raise ValueError(f"theta must be finite, got {self.theta}")
        if not self.scale >= 0:
            raise ValueError(f"scale must be non-negative, got {self.scale}")
        if self.clip is not None and not self.clip >= 0:
            raise ValueError(f"clip must be non-negative, got {self.clip}")

    def with_scale(self, scale: float) -> "SurrogateSpec":
        return SurrogateSpec(self.family, self.width, self.theta, scale, self.clip)

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "width": self.width,
            "theta": self.theta,
            "scale": self.scale,
            "clip": self.clip,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateSpec":
        return cls(
            family=SurrogateFamily(d.get("family", "exponential")),
            width=float(d.get("width", 1.0)),
            theta=float(d.get("theta", 1.0)),
            scale=float(d.get("scale", 1.0)),
            clip=None if d.get("clip") is None else float(d["clip"]),
        )


def spike_fn(u, theta: float):
    """1 where the potential reaches or exceeds ``theta``, else 0."""
    return (np.asarray(u) >= theta).astype(np.float64)


def surrogate_value(spec: SurrogateSpec, u):
    x = (np.asarray(u, dtype=np.float64) - spec.theta) / spec.width
    w = spec.width
    family = spec.family
    if family is SurrogateFamily.EXPONENTIAL:
        base = np.exp(-np.abs(x)) / (2.0 * w)
    elif family is SurrogateFamily.PIECEWISE_LINEAR:
        base = np.maximum(0.0, 1.0 - np.abs(x)) / w
    elif family is SurrogateFamily.TANH:
        base = (1.0 - np.tanh(x) ** 2) / (2.0 * w)
    elif family is SurrogateFamily.SIGMOID:
        # expit(-x) avoids the cancellation in 1 - expit(x) for large x
        base = expit(x) * expit(-x) / w
    else:  # pragma: no cover - enum is closed
        raise ValueError(family)
    out = spec.scale * base
    if spec.clip is not None:
        out = np.minimum(out, spec.clip)
    return out


def soft_spike_fn(spec: SurrogateSpec, u):
    """Logistic relaxation of the spike function.

    Its derivative is exactly the unscaled sigmoid surrogate, which is what
    makes finite differences on a soft forward pass a valid gradient check.
    """
    if spec.family is not SurrogateFamily.SIGMOID:
        raise ValueError("soft spikes are only defined for the sigmoid surrogate family")
    return expit((np.asarray(u, dtype=np.float64) - spec.theta) / spec.width)
