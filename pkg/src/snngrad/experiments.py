"""Experiment runners behind the command line.

Each runner returns its rows and a summary dict; :func:`write_outputs`
persists them as ``<name>.csv`` plus ``summary.json``. CSV column orders are
fixed per schema version (see ``SCHEMAS``).
"""

from __future__ import annotations

import csv
import json
import logging
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .forward import DenseLayer, LayerTrace, forward_layer, forward_network
from .grad_exodus import sigma_srm
from .neuron import LifParams, SrmKernels, SurrogateFamily, SurrogateSpec, surrogate_value
from .oracle import (
    build_ift_jacobians,
    check_chi_interval,
    check_decay_bound,
    chi_closed_form,
    chi_iterative,
    gamma_closed_form,
    gamma_recursive,
    solve_ift_dense,
)
from .report import LossGrad, LossKind
from .signal import exp_filter
from .train import ENGINES, AdamState, mse_loss, train_loop

__all__ = [
    "SCHEMAS",
    "poisson_task",
    "run_poisson_fit",
    "run_grad_compare",
    "run_bench",
    "run_ift_check",
    "write_outputs",
]

logger = logging.getLogger(__name__)

SCHEMAS = {
    "poisson-fit": ("poisson-fit/v1", ["epoch", "seed", "engine", "loss"]),
    "grad-compare": ("grad-compare/v1", ["seed", "engine", "scale", "layer", "grad_norm"]),
    "bench": ("bench/v1", ["engine", "T", "median_s", "min_s", "max_s", "repeats"]),
    "ift-check": ("ift-check/v1", ["check", "instance", "value", "tolerance", "passed"]),
}


def poisson_spikes(rng: np.random.Generator, n: int, T: int, rate: float, dt: float) -> np.ndarray:
    return (rng.random((n, T)) < rate * dt).astype(np.float64)


def poisson_task(cfg: ExperimentConfig, seed: int):
    """Input spikes, target spikes and initial network for one seed."""
    rng = np.random.default_rng(seed)
    x = poisson_spikes(rng, cfg.sizes[0], cfg.T, cfg.input_rate, cfg.dt)
    target = np.zeros((cfg.sizes[-1], cfg.T))
    for row in target:
        row[np.sort(rng.choice(cfg.T, cfg.target_spikes, replace=False))] = 1.0
    net = cfg.network(rng)
    return x, target, net


def _target_signal(cfg: ExperimentConfig, target: np.ndarray, net: list[DenseLayer]) -> np.ndarray:
    if cfg.loss_kind == LossKind.RAW_SPIKES.value:
        return target
    k = net[-1].kernels
    return exp_filter(k.lif.alpha, target) if k.is_lif else np.apply_along_axis(
        lambda r: np.convolve(r, k.epsilon(cfg.T))[: cfg.T], 1, target
    )


def run_poisson_fit(cfg: ExperimentConfig):
    """Fit one output neuron to a target spike train under each engine.

    Every engine starts from the same weights and data for a given seed.
    """
    rows = []
    summed = {e: [] for e in cfg.engines}
    for seed in range(cfg.seed, cfg.seed + cfg.n_seeds):
        x, target, net = poisson_task(cfg, seed)
        dataset = [(x, _target_signal(cfg, target, net))]
        for engine in cfg.engines:
            opt = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps_hat=cfg.eps_hat)
            res = train_loop(
                net, dataset, engine, cfg.epochs, mse_loss, LossKind(cfg.loss_kind), opt,
                cfg.batch_size, seed,
            )
            for rec in res.history:
                rows.append({"epoch": rec.epoch, "seed": seed, "engine": engine, "loss": rec.loss})
            summed[engine].append(float(res.losses.sum()))
            logger.info("seed %d %s summed loss %.4f", seed, engine, summed[engine][-1])
    summary = {
        "mean_summed_loss": {e: float(np.mean(v)) for e, v in summed.items()},
        "summed_loss_per_seed": summed,
    }
    return rows, summary


def run_grad_compare(cfg: ExperimentConfig):
    """Per-layer gradient norms of one backward pass per engine and scale."""
    rows = []
    ratios = {}
    for seed in range(cfg.seed, cfg.seed + cfg.n_seeds):
        rng = np.random.default_rng(seed)
        base = cfg.network(rng)
        x = poisson_spikes(rng, cfg.sizes[0], cfg.T, cfg.input_rate, cfg.dt)
        target = poisson_spikes(rng, cfg.sizes[-1], cfg.T, cfg.target_rate, cfg.dt)
        for scale in cfg.scales:
            spec = cfg.surrogate(scale)
            net = [DenseLayer(l.weights, l.kernels, spec) for l in base]
            trace = forward_network(net, x)
            out = trace.output if cfg.loss_kind == "filtered" else trace.output_spikes
            _, lg = mse_loss(out, _target_signal(cfg, target, net), LossKind(cfg.loss_kind))
            for engine in cfg.engines:
                norms = ENGINES[engine](net, trace, lg).layer_grad_norms
                for layer, g in enumerate(norms):
                    rows.append({"seed": seed, "engine": engine, "scale": scale, "layer": layer, "grad_norm": g})
                ratio = norms[0] / norms[-1] if norms[-1] > 0 else float("inf")
                ratios.setdefault(engine, {}).setdefault(str(scale), []).append(ratio)
    return rows, {"input_output_norm_ratio": ratios}


def run_bench(cfg: ExperimentConfig):
    """Wall time of forward plus backward per engine across ``bench_T``."""
    rows = []
    for T in cfg.bench_T:
        rng = np.random.default_rng(cfg.seed)
        net = cfg.network(rng)
        x = poisson_spikes(rng, cfg.sizes[0], T, cfg.input_rate, cfg.dt)
        lg_values = rng.normal(size=(cfg.sizes[-1], T))
        for engine in cfg.engines:
            backward = ENGINES[engine]
            times = []
            for rep in range(cfg.bench_warmup + cfg.bench_repeats):
                t0 = time.perf_counter()
                trace = forward_network(net, x)
                backward(net, trace, LossGrad(LossKind.FILTERED_OUTPUT, lg_values))
                if rep >= cfg.bench_warmup:
                    times.append(time.perf_counter() - t0)
            rows.append({
                "engine": engine,
                "T": T,
                "median_s": float(np.median(times)),
                "min_s": float(np.min(times)),
                "max_s": float(np.max(times)),
                "repeats": cfg.bench_repeats,
            })
    return rows, {}


def _random_instance(rng: np.random.Generator, i: int, max_T: int):
    T = int(rng.integers(1, max_T + 1))
    N = int(rng.integers(1, max(1, min(4, 512 // T)) + 1))
    family = list(SurrogateFamily)[i % len(SurrogateFamily)]
    theta = float(rng.uniform(0.5, 1.5))
    spec = SurrogateSpec(family=family, width=float(rng.uniform(0.3, 1.5)), theta=theta,
                         scale=float(rng.choice([0.1, 1.0, 10.0])))
    if i % 2 == 0:
        kernels = SrmKernels.from_lif(LifParams.from_alpha(float(rng.choice([0.3, 0.9, 1.0])), theta))
    else:
        K = int(rng.integers(1, 6))
        kernels = SrmKernels.from_taps(rng.uniform(0, 1, K), -rng.uniform(0, 1.5, K))
    layer = DenseLayer(rng.normal(scale=1.5, size=(N, 3)), kernels, spec)
    s_in = (rng.random((3, T)) < 0.4).astype(np.float64)
    return layer, forward_layer(layer, s_in)


def run_ift_check(cfg: ExperimentConfig):
    """Oracle suite on random small layers; every row is one check."""
    rng = np.random.default_rng(cfg.seed)
    rows = []

    def record(check, i, value, tol):
        rows.append({"check": check, "instance": i, "value": float(value), "tolerance": tol,
                     "passed": bool(value <= tol)})

    for i in range(cfg.ift_instances):
        layer, trace = _random_instance(rng, i, cfg.ift_max_T)
        jac = build_ift_jacobians(trace, layer.kernels, layer.surrogate)
        record("det_minus_one", i, abs(jac.det() - 1.0), 1e-8)

        kernels = layer.kernels
        if cfg.inject_fault == "flip-nu":
            eps, nu = kernels.materialize(trace.T)
            kernels = SrmKernels.from_taps(eps, -nu)
        dense = solve_ift_dense(jac)
        recursive = sigma_srm(trace, kernels, layer.surrogate).to_dense()
        scale = max(1.0, np.abs(dense).max())
        record("dense_vs_recursive_sigma", i, np.abs(dense - recursive).max() / scale, 1e-10)

        alpha = float(rng.choice([0.3, 0.9, 1.0]))
        theta = float(rng.uniform(0.5, 1.5))
        fp = rng.uniform(0.0, 1.2 * alpha / theta, size=(2, cfg.ift_max_T))
        T = fp.shape[-1]
        worst = 0.0
        for m in range(T - 1):
            closed = np.stack([chi_closed_form(fp, alpha, theta, m, n) for n in range(m + 1, T)], -1)
            worst = max(worst, _rel(closed, chi_iterative(fp, alpha, theta, m)))
            closed_g = np.stack([gamma_closed_form(fp, alpha, theta, m, n) for n in range(m + 1, T)], -1)
            worst = max(worst, _rel(closed_g, gamma_recursive(fp, alpha, theta, m)))
        record("chi_closed_vs_recursive", i, worst, 1e-12)

        mu = float(rng.uniform(0.05, alpha))
        edge = (alpha - mu) / theta
        # f' in [0, edge]: every factor lies in [mu, alpha]
        rep = check_chi_interval(np.minimum(fp, edge), alpha, theta, mu, alpha)
        record("chi_interval_clamped_below", i, max(rep.max_violation, 0.0), 1e-12)
        # f' in [edge, alpha/theta]: factors in [0, mu], so 0 <= chi <= mu**k
        high = rng.uniform(edge, alpha / theta, size=fp.shape)
        rep = check_decay_bound(high, alpha, theta, mu)
        record("decay_bound_mu", i, max(rep.max_violation, 0.0), 1e-12)

    failed = [r for r in rows if not r["passed"]]
    return rows, {"n_checks": len(rows), "n_failed": len(failed), "passed": not failed}


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))) if a.size else 0.0


RUNNERS = {
    "poisson-fit": run_poisson_fit,
    "grad-compare": run_grad_compare,
    "bench": run_bench,
    "ift-check": run_ift_check,
}


def write_outputs(cfg: ExperimentConfig, rows: list[dict], summary: dict, out_dir: Optional[Path] = None) -> Path:
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    schema, columns = SCHEMAS[cfg.experiment]
    csv_path = out / f"{cfg.experiment}.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    doc = {
        "run_id": cfg.run_id(),
        "schema": schema,
        "experiment": cfg.experiment,
        "metrics": summary,
        "config": cfg.to_dict(),
    }
    (out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    return csv_path
