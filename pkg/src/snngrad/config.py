"""Experiment configuration and its JSON file format."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .forward import DenseLayer, make_network
from .neuron import LifParams, SrmKernels, SurrogateFamily, SurrogateSpec
from .report import LossKind
from .train import ENGINES

__all__ = ["ConfigError", "ExperimentConfig", "EXPERIMENTS"]

EXPERIMENTS = ("poisson-fit", "grad-compare", "bench", "ift-check")
RESETS = ("subtractive", "none")
FAULTS = (None, "flip-nu")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``tau = None`` selects integrate-and-fire neurons. ``reset = "none"``
    keeps the LIF response kernel but zeroes the reset kernel.
    """

    experiment: str = "poisson-fit"
    engines: list[str] = field(default_factory=lambda: ["exodus", "slayer"])
    seed: int = 0
    n_seeds: int = 1
    sizes: list[int] = field(default_factory=lambda: [250, 25, 1])
    tau: Optional[float] = 0.02
    dt: float = 1e-3
    theta: float = 1.0
    reset: str = "subtractive"
    surrogate_family: str = "exponential"
    surrogate_width: float = 1.0
    scales: list[float] = field(default_factory=lambda: [1.0])
    T: int = 200
    loss_kind: str = "filtered"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    epochs: int = 3000
    batch_size: int = 1
    input_rate: float = 10.0
    target_spikes: int = 4
    target_rate: float = 50.0
    bench_T: list[int] = field(default_factory=lambda: [128, 512, 2048])
    bench_repeats: int = 5
    bench_warmup: int = 1
    ift_instances: int = 50
    ift_max_T: int = 32
    inject_fault: Optional[str] = None
    out: str = "runs"

    @classmethod
    def default(cls, experiment: str) -> "ExperimentConfig":
        if experiment == "poisson-fit":
            return cls(experiment=experiment)
        if experiment == "grad-compare":
            return cls(
                experiment=experiment,
                engines=["exodus", "slayer", "bptt"],
                sizes=[40, 32, 32, 32, 10],
                tau=None,
                T=100,
                input_rate=300.0,
                scales=[0.01, 0.1, 1.0, 10.0],
                n_seeds=5,
            )
        if experiment == "bench":
            return cls(
                experiment=experiment,
                engines=["exodus", "slayer", "bptt"],
                sizes=[50, 64, 64, 10],
                input_rate=100.0,
            )
        if experiment == "ift-check":
            return cls(experiment=experiment, engines=["exodus"])
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.experiment in EXPERIMENTS, f"unknown experiment {self.experiment!r}")
        need(len(self.engines) > 0, "at least one engine is required")
        for e in self.engines:
            need(e in ENGINES, f"unknown engine {e!r}")
        need(len(self.sizes) >= 2, "network needs an input size and at least one layer")
        need(all(isinstance(n, int) and n >= 1 for n in self.sizes), "layer sizes must be positive integers")
        need(self.tau is None or self.tau > 0, "tau must be positive or null")
        need(self.dt > 0 and math.isfinite(self.dt), "dt must be positive")
        need(self.theta > 0, "theta must be positive")
        need(self.reset in RESETS, f"reset must be one of {RESETS}")
        need(self.surrogate_family in {f.value for f in SurrogateFamily}, "unknown surrogate family")
        need(self.surrogate_width > 0, "surrogate width must be positive")
        need(len(self.scales) > 0 and all(s >= 0 for s in self.scales), "scales must be non-negative")
        need(self.T >= 1, "T must be at least 1")
        need(self.loss_kind in {k.value for k in LossKind}, "unknown loss kind")
        need(self.lr >= 0, "lr must be non-negative")
        need(0 <= self.beta1 < 1 and 0 <= self.beta2 < 1, "Adam betas must be in [0, 1)")
        need(self.epochs >= 0, "epochs must be non-negative")
        need(self.batch_size >= 1, "batch size must be at least 1")
        need(self.n_seeds >= 1, "n_seeds must be at least 1")
        need(0 <= self.input_rate * self.dt <= 1, "input rate times dt must be a probability")
        need(0 <= self.target_rate * self.dt <= 1, "target rate times dt must be a probability")
        need(0 <= self.target_spikes <= self.T, "target spikes must fit in T")
        need(len(self.bench_T) > 0 and all(t >= 1 for t in self.bench_T), "bench_T must be positive")
        need(self.bench_repeats >= 1 and self.bench_warmup >= 0, "bad bench repeat counts")
        need(self.ift_instances >= 1 and self.ift_max_T >= 1, "bad ift-check sizes")
        need(self.inject_fault in FAULTS, f"inject_fault must be one of {FAULTS}")
        return self

    # -- neuron model -------------------------------------------------------

    @property
    def lif(self) -> LifParams:
        return LifParams(tau=math.inf if self.tau is None else self.tau, dt=self.dt, theta=self.theta)

    def kernels(self) -> SrmKernels:
        lif = self.lif
        if self.reset == "none":
            return SrmKernels.from_taps(lif.alpha ** np.arange(self.T), [0.0])
        return SrmKernels.from_lif(lif)

    def surrogate(self, scale: Optional[float] = None) -> SurrogateSpec:
        return SurrogateSpec(
            family=SurrogateFamily(self.surrogate_family),
            width=self.surrogate_width,
            theta=self.theta,
            scale=self.scales[0] if scale is None else scale,
        )

    def network(self, rng: np.random.Generator, scale: Optional[float] = None) -> list[DenseLayer]:
        return make_network(self.sizes, self.kernels(), self.surrogate(scale), rng)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = cls.default(d["experiment"]) if "experiment" in d else cls()
        return dataclasses.replace(base, **d).validate()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        return cls.from_json(text)

    def run_id(self) -> str:
        return hashlib.sha1(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]
