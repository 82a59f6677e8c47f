import csv
import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snngrad.cli import main
from snngrad.config import EXPERIMENTS, ConfigError, ExperimentConfig
from snngrad.experiments import SCHEMAS, run_bench, run_grad_compare, run_ift_check, run_poisson_fit


def _small(experiment, **kw):
    cfg = ExperimentConfig.default(experiment)
    return dataclasses.replace(cfg, **kw).validate()


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("experiment", EXPERIMENTS)
def test_defaults_validate_and_round_trip(experiment):
    cfg = ExperimentConfig.default(experiment).validate()
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


@settings(max_examples=40, deadline=None)
@given(
    experiment=st.sampled_from(EXPERIMENTS),
    seed=st.integers(0, 2**31),
    sizes=st.lists(st.integers(1, 300), min_size=2, max_size=5),
    tau=st.one_of(st.none(), st.floats(1e-4, 1.0)),
    scales=st.lists(st.floats(0, 100), min_size=1, max_size=4),
    T=st.integers(1, 500),
    family=st.sampled_from(["exponential", "piecewise_linear", "tanh", "sigmoid"]),
    lr=st.floats(0, 1),
)
def test_config_round_trip(experiment, seed, sizes, tau, scales, T, family, lr):
    cfg = _small(experiment, seed=seed, sizes=sizes, tau=tau, scales=scales, T=T,
                 surrogate_family=family, lr=lr, target_spikes=min(4, T))
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg
    assert back.run_id() == cfg.run_id()


@pytest.mark.parametrize("change", [
    dict(sizes=[10]), dict(engines=[]), dict(engines=["adjoint"]), dict(tau=-1.0), dict(T=0),
    dict(reset="soft"), dict(surrogate_family="gauss"), dict(epochs=-1), dict(input_rate=5000.0),
    dict(inject_fault="other"), dict(scales=[-1.0]),
])
def test_invalid_configs_rejected(change):
    with pytest.raises(ConfigError):
        dataclasses.replace(ExperimentConfig(), **change).validate()


def test_unknown_keys_and_bad_json_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "bench", "colour": "red"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("[1, 2]")


def test_reset_free_kernels():
    k = _small("poisson-fit", reset="none", T=20).kernels()
    assert not k.is_lif
    np.testing.assert_array_equal(k.nu(20), 0.0)


def test_poisson_fit_zero_epochs_header_only(tmp_path):
    rc = main(["poisson-fit", "--epochs", "0", "--out", str(tmp_path)])
    assert rc == 0
    assert _rows(tmp_path / "poisson-fit.csv") == [SCHEMAS["poisson-fit"][1]]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["schema"] == "poisson-fit/v1"
    assert ExperimentConfig.from_dict(summary["config"]).epochs == 0


def test_poisson_fit_exodus_and_bptt_losses_agree():
    cfg = _small("poisson-fit", engines=["exodus", "bptt"], epochs=25, T=60)
    rows, _ = run_poisson_fit(cfg)
    ex = [r["loss"] for r in rows if r["engine"] == "exodus"]
    bp = [r["loss"] for r in rows if r["engine"] == "bptt"]
    assert len(ex) == 25
    np.testing.assert_allclose(ex, bp, atol=1e-7, rtol=0)


def test_poisson_fit_is_seed_deterministic():
    cfg = _small("poisson-fit", engines=["slayer"], epochs=5, T=50)
    assert run_poisson_fit(cfg) == run_poisson_fit(cfg)


def test_grad_compare_zero_scale_gives_zero_norms():
    rows, _ = run_grad_compare(_small("grad-compare", scales=[0.0], n_seeds=1, T=30))
    assert rows and all(r["grad_norm"] == 0.0 for r in rows)


def test_grad_compare_reset_free_exodus_equals_slayer():
    rows, _ = run_grad_compare(_small("grad-compare", reset="none", scales=[1.0], n_seeds=2, T=40))
    ex = [r["grad_norm"] for r in rows if r["engine"] == "exodus"]
    sl = [r["grad_norm"] for r in rows if r["engine"] == "slayer"]
    np.testing.assert_allclose(ex, sl, rtol=1e-12, atol=0)


def test_bench_single_cell():
    rows, _ = run_bench(_small("bench", engines=["exodus"], bench_T=[16], bench_repeats=2))
    assert len(rows) == 1 and rows[0]["T"] == 16 and rows[0]["min_s"] <= rows[0]["max_s"]


def test_ift_check_default_passes():
    rows, summary = run_ift_check(_small("ift-check", ift_instances=10))
    assert summary["passed"] and summary["n_checks"] == len(rows)


def test_ift_check_single_step_instances_pass():
    _, summary = run_ift_check(_small("ift-check", ift_instances=10, ift_max_T=1))
    assert summary["passed"]


def test_cli_exit_codes(tmp_path):
    assert main(["ift-check", "--out", str(tmp_path / "ok")]) == 0
    bad = tmp_path / "fault.json"
    bad.write_text(json.dumps({"experiment": "ift-check", "inject_fault": "flip-nu", "ift_instances": 10}))
    assert main(["ift-check", "--config", str(bad), "--out", str(tmp_path / "fault")]) == 2
    rows = [r for r in _rows(tmp_path / "fault" / "ift-check.csv")[1:] if r[0] == "dense_vs_recursive_sigma"]
    assert any(r[4] == "False" for r in rows)
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"experiment": "bench", "sizes": [5]}))
    assert main(["bench", "--config", str(broken)]) == 1
    assert main(["poisson-fit", "--config", str(tmp_path / "missing.json")]) == 1
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"experiment": "bench"}))
    assert main(["poisson-fit", "--config", str(other)]) == 1


def test_cli_flags_override_config(tmp_path):
    rc = main(["grad-compare", "--seed", "3", "--n-seeds", "1", "--engine", "exodus", "--scale", "0.5",
               "--out", str(tmp_path)])
    assert rc == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["seed"] == 3
    assert summary["config"]["engines"] == ["exodus"]
    assert summary["config"]["scales"] == [0.5]
    rows = _rows(tmp_path / "grad-compare.csv")
    assert rows[0] == SCHEMAS["grad-compare"][1] and len(rows) == 1 + 4
