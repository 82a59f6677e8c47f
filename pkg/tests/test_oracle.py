import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snngrad.forward import DenseLayer, LayerTrace, forward_layer, forward_network
from snngrad.grad_bptt import backward_network_bptt
from snngrad.grad_exodus import sigma_srm
from snngrad.neuron import LifParams, SrmKernels, SurrogateFamily, SurrogateSpec, surrogate_value
from snngrad.oracle import (
    MAX_FD_WEIGHTS, build_ift_jacobians, check_chi_interval, check_decay_bound, chi_closed_form,
    chi_iterative, finite_diff_grad, gamma_closed_form, gamma_recursive, solve_ift_dense,
)
from snngrad.report import LossGrad, LossKind

from support import max_rel_dev

SIG = SurrogateSpec(SurrogateFamily.SIGMOID, width=0.5, theta=1.0)
LIF = SrmKernels.from_lif(LifParams.from_alpha(0.8))


def _trace(u):
    u = np.atleast_2d(np.asarray(u, float))
    return LayerTrace(np.zeros_like(u), u.copy(), u, (u >= 1).astype(float))


def test_zero_loss_gives_zero_report():
    net = [DenseLayer(np.ones((2, 3)), LIF, SIG)]
    rep = finite_diff_grad(net, np.ones((3, 5)), lambda tr: 0.0)
    assert not rep.weight_grads[0].any()


def test_quadratic_loss_on_linear_drive():
    rng = np.random.default_rng(0)
    # kept O(1) so that the rounding error eps * L / h stays below the tolerance
    net = [DenseLayer(rng.normal(scale=0.3, size=(3, 4)), LIF, SIG)]
    x = (rng.random((4, 3)) < 0.5).astype(float)
    rep = finite_diff_grad(net, x, lambda tr: float(np.sum(tr.layers[0].z ** 2)))
    a = forward_network(net, x).layers[0].a_in
    np.testing.assert_allclose(rep.weight_grads[0], 2 * net[0].weights @ a @ a.T, rtol=1e-10, atol=1e-10)


def test_soft_net_matches_bptt():
    rng = np.random.default_rng(1)
    net = [DenseLayer(rng.normal(scale=1.5, size=(4, 5)), LIF, SIG),
           DenseLayer(rng.normal(scale=1.5, size=(2, 4)), LIF, SIG)]
    x = (rng.random((5, 8)) < 0.5).astype(float)
    c = rng.normal(size=(2, 8))
    fd = finite_diff_grad(net, x, lambda tr: float(np.sum(c * tr.output)))
    bp = backward_network_bptt(net, forward_network(net, x, mode="soft"), LossGrad(LossKind.FILTERED_OUTPUT, c))
    assert max_rel_dev(bp.weight_grads, fd.weight_grads) <= 1e-6


def test_finite_diff_preconditions():
    net = [DenseLayer(np.ones((2, 3)), LIF, SIG)]
    x = np.ones((3, 4))
    with pytest.raises(ValueError):
        finite_diff_grad(net, x, lambda tr: 0.0, h=1e-2)
    with pytest.raises(ValueError):
        finite_diff_grad([DenseLayer(np.ones((2, 3)), LIF, SurrogateSpec())], x, lambda tr: 0.0)
    with pytest.raises(ValueError):
        finite_diff_grad([DenseLayer(np.ones((2, 3)), LIF, SIG.with_scale(2.0))], x, lambda tr: 0.0)
    big = [DenseLayer(np.ones((MAX_FD_WEIGHTS + 1, 1)), LIF, SIG)]
    with pytest.raises(ValueError):
        finite_diff_grad(big, np.ones((1, 2)), lambda tr: 0.0)


def test_finite_diff_leaves_weights_untouched():
    net = [DenseLayer(np.full((2, 2), 0.7), LIF, SIG)]
    finite_diff_grad(net, np.ones((2, 3)), lambda tr: float(tr.output.sum()))
    assert np.all(net[0].weights == 0.7)


def test_single_step_jacobian():
    spec = SurrogateSpec()
    jac = build_ift_jacobians(_trace([[0.4]]), LIF, spec)
    f = surrogate_value(spec, 0.4)
    np.testing.assert_allclose(jac.J_D, [[1, -f], [0, 1]])


def test_two_step_reset_block():
    theta = 1.7
    k = SrmKernels.from_lif(LifParams.from_alpha(0.8, theta))
    jac = build_ift_jacobians(_trace([[0.4, 2.0]]), k, SurrogateSpec(theta=theta))
    assert jac.reset[1, 0] == pytest.approx(theta)
    assert jac.J_D[3, 0] == pytest.approx(theta)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_determinant_is_one_and_dense_matches_recursion(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 40))
    N = int(rng.integers(1, 512 // T + 1)) if T < 40 else 1
    N = min(N, 6)
    theta = float(rng.uniform(0.5, 1.5))
    if seed % 2:
        k = SrmKernels.from_lif(LifParams.from_alpha(float(rng.uniform(0.3, 1.0)), theta))
    else:
        k = SrmKernels.from_taps([1.0], -rng.uniform(0, 2, int(rng.integers(1, 5))))
    spec = SurrogateSpec(list(SurrogateFamily)[seed % 4], 0.8, theta, float(rng.choice([0.1, 1, 10])))
    layer = DenseLayer(rng.normal(scale=1.5, size=(N, 3)), k, spec)
    tr = forward_layer(layer, (rng.random((3, T)) < 0.4).astype(float))
    jac = build_ift_jacobians(tr, k, spec)
    assert abs(jac.det() - 1.0) <= 1e-8
    dense = solve_ift_dense(jac)
    np.testing.assert_allclose(dense, sigma_srm(tr, k, spec).to_dense(), rtol=1e-10, atol=1e-10)


def test_explosive_regime_agrees_relative_to_magnitude():
    rng = np.random.default_rng(29)
    k = SrmKernels.from_taps([1.0], -rng.uniform(0.5, 1.5, 4))
    spec = SurrogateSpec(SurrogateFamily.EXPONENTIAL, 1.0, 1.0, scale=10.0)
    layer = DenseLayer(rng.normal(scale=1.5, size=(6, 4)), k, spec)
    tr = forward_layer(layer, (rng.random((4, 60)) < 0.4).astype(float))
    ref = sigma_srm(tr, k, spec).to_dense()
    dense = solve_ift_dense(build_ift_jacobians(tr, k, spec))
    assert np.abs(ref).max() > 1e6
    assert np.abs(dense - ref).max() <= 1e-12 * np.abs(ref).max()


def test_zero_surrogate_gives_zero_block():
    spec = SurrogateSpec(SurrogateFamily.PIECEWISE_LINEAR, width=0.1)
    dense = solve_ift_dense(build_ift_jacobians(_trace(np.full((2, 5), -3.0)), LIF, spec))
    assert not dense.any()


def test_reset_free_block_is_diagonal():
    spec = SurrogateSpec()
    tr = _trace(np.random.default_rng(0).normal(1, 1, (2, 5)))
    k = SrmKernels.from_taps([1.0], [0.0])
    dense = solve_ift_dense(build_ift_jacobians(tr, k, spec))
    np.testing.assert_allclose(dense, np.diag(surrogate_value(spec, tr.u).T.ravel()))


def test_six_step_single_neuron_matches_sigma():
    rng = np.random.default_rng(6)
    layer = DenseLayer(np.array([[1.3]]), LIF, SurrogateSpec(scale=3.0))
    tr = forward_layer(layer, (rng.random((1, 6)) < 0.7).astype(float))
    dense = solve_ift_dense(build_ift_jacobians(tr, LIF, layer.surrogate))
    np.testing.assert_allclose(dense, sigma_srm(tr, LIF, layer.surrogate).to_dense(), atol=1e-10)


def test_dense_size_cap():
    with pytest.raises(ValueError):
        build_ift_jacobians(_trace(np.zeros((3, 200))), LIF, SurrogateSpec())


def test_gamma_first_terms():
    fp = np.array([0.3, 0.7, 0.2, 0.9])
    a, th = 0.8, 1.4
    assert gamma_closed_form(fp, a, th, 0, 1) == pytest.approx(-th * 0.3)
    assert gamma_closed_form(fp, a, th, 0, 2) == pytest.approx(-th * 0.3 * (a - th * 0.7))
    assert gamma_closed_form(np.array([0.0, 0.5, 0.5]), a, th, 0, 2) == 0.0
    np.testing.assert_allclose(gamma_recursive(fp, a, th, 0)[:2], [-th * 0.3, -th * 0.3 * (a - th * 0.7)])


def test_chi_pure_leak_and_bad_indices():
    fp = np.zeros(7)
    np.testing.assert_allclose(chi_iterative(fp, 0.6, 1.0, 1), 0.6 ** np.arange(5))
    with pytest.raises(ValueError):
        chi_closed_form(fp, 0.6, 1.0, 3, 3)


@pytest.mark.parametrize("alpha", [0.3, 0.9, 1.0])
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), T=st.integers(2, 64))
def test_closed_forms_match_recursions(alpha, seed, T):
    rng = np.random.default_rng(seed)
    theta = float(rng.uniform(0.5, 1.5))
    fp = rng.uniform(0, 1.5 * alpha / theta, size=(2, T))
    m = int(rng.integers(0, T - 1))
    closed = np.stack([chi_closed_form(fp, alpha, theta, m, n) for n in range(m + 1, T)], -1)
    np.testing.assert_allclose(closed, chi_iterative(fp, alpha, theta, m), rtol=1e-12, atol=1e-300)
    closed_g = np.stack([gamma_closed_form(fp, alpha, theta, m, n) for n in range(m + 1, T)], -1)
    np.testing.assert_allclose(closed_g, gamma_recursive(fp, alpha, theta, m), rtol=1e-12, atol=1e-14)


def test_decay_bound_pure_leak_is_tight_at_alpha():
    rep = check_decay_bound(np.zeros((1, 12)), 0.7, 1.0, mu=0.7)
    assert rep.max_violation <= 1e-15


def test_decay_bound_tight_at_edge():
    alpha, theta, mu = 0.9, 1.2, 0.5
    fp = np.full((1, 16), (alpha - mu) / theta)
    np.testing.assert_allclose(chi_iterative(fp, alpha, theta, 0)[0], mu ** np.arange(15), rtol=1e-12)
    assert check_decay_bound(fp, alpha, theta, mu).max_violation <= 1e-12


def test_decay_bound_holds_above_edge():
    rng = np.random.default_rng(3)
    alpha, theta, mu = 0.9, 1.0, 0.4
    fp = rng.uniform((alpha - mu) / theta, alpha / theta, size=(4, 30))
    assert check_decay_bound(fp, alpha, theta, mu).max_violation <= 1e-12


def test_clamp_below_edge_bounds_chi_from_below():
    rng = np.random.default_rng(4)
    alpha, theta, mu = 0.9, 1.0, 0.4
    fp = rng.uniform(0, (alpha - mu) / theta, size=(4, 30))
    assert check_chi_interval(fp, alpha, theta, mu, alpha).max_violation <= 1e-12
    # every factor is at least mu, so the upper bound mu**k is exceeded
    assert check_decay_bound(fp, alpha, theta, mu).max_violation > 0


def test_overshooting_surrogate_alternates_with_shrinking_magnitude():
    alpha, theta = 0.9, 1.0
    fp = np.full((1, 12), 1.5 * alpha / theta)
    chi = chi_iterative(fp, alpha, theta, 0)[0]
    np.testing.assert_allclose(chi, (-0.5 * alpha) ** np.arange(11), rtol=1e-12)


def test_large_surrogate_makes_chi_grow():
    alpha, theta = 0.9, 1.0
    fp = np.full((1, 12), 2.5 * (1 + alpha) / theta)
    mags = check_decay_bound(fp, alpha, theta, 0.5).max_abs_by_lag
    assert np.all(np.diff(mags) > 0)


def test_short_sequences_trivially_hold():
    rep = check_decay_bound(np.array([[0.3]]), 0.8, 1.0, 0.5)
    assert rep.holds
