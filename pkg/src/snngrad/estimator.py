"""scikit-learn style estimators around the spiking network trainer."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import softmax
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .forward import forward_network, make_network
from .neuron import LifParams, SrmKernels, SurrogateFamily, SurrogateSpec
from .report import LossKind
from .signal import exp_filter
from .train import AdamState, ce_max_over_time, ce_sum_over_time, mse_loss, train_loop
from .validation import check_labels, check_spike_trains, check_target_trains

__all__ = ["SpikingNetworkRegressor", "SpikingNetworkClassifier"]


class _SpikingNetworkBase(BaseEstimator):
    def _build(self, n_in: int, n_out: int, rng):
        lif = LifParams(tau=math.inf if self.tau is None else self.tau, dt=self.dt, theta=self.theta)
        spec = SurrogateSpec(
            family=SurrogateFamily(self.surrogate),
            width=self.surrogate_width,
            theta=self.theta,
            scale=self.surrogate_scale,
        )
        sizes = [n_in, *self.hidden_sizes, n_out]
        return make_network(sizes, SrmKernels.from_lif(lif), spec, rng), lif

    def _train(self, X, targets, n_out, loss_fn, loss_kind):
        rng = np.random.default_rng(self.random_state)
        net, self.lif_ = self._build(X.shape[1], n_out, rng)
        opt = AdamState(lr=self.lr)
        seed = int(rng.integers(2**31))
        result = train_loop(
            net, list(zip(X, targets)), self.engine, self.epochs, loss_fn, loss_kind, opt,
            self.batch_size, seed,
        )
        self.layers_ = result.net
        self.history_ = result.history
        self.n_features_in_ = X.shape[1]
        return self

    def _traces(self, X):
        check_is_fitted(self, "layers_")
        X = check_spike_trains(X, self.n_features_in_)
        return [forward_network(self.layers_, x) for x in X]


class SpikingNetworkRegressor(RegressorMixin, _SpikingNetworkBase):
    """Feed-forward LIF network trained to reproduce target spike trains.

    ``X`` holds input spike trains ``(n_samples, channels, T)`` and ``y`` the
    target trains ``(n_samples, outputs, T)``. Training minimises the squared
    error between output and target after both are filtered by the output
    neurons' response kernel (``loss_kind="filtered"``) or between the raw
    spike trains (``"raw"``).
    """

    def __init__(
        self,
        hidden_sizes=(25,),
        tau=0.02,
        dt=1e-3,
        theta=1.0,
        surrogate="exponential",
        surrogate_width=1.0,
        surrogate_scale=1.0,
        engine="exodus",
        lr=1e-3,
        epochs=100,
        batch_size=1,
        loss_kind="filtered",
        random_state=None,
    ):
        self.hidden_sizes = hidden_sizes
        self.tau = tau
        self.dt = dt
        self.theta = theta
        self.surrogate = surrogate
        self.surrogate_width = surrogate_width
        self.surrogate_scale = surrogate_scale
        self.engine = engine
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.loss_kind = loss_kind
        self.random_state = random_state

    def _signal(self, trains):
        if LossKind(self.loss_kind) is LossKind.RAW_SPIKES:
            return trains
        return exp_filter(self.lif_.alpha, trains)

    def fit(self, X, y):
        X = check_spike_trains(X)
        y = check_target_trains(y, X)
        kind = LossKind(self.loss_kind)
        # lif_ is needed to filter targets before training starts
        self.lif_ = LifParams(tau=math.inf if self.tau is None else self.tau, dt=self.dt, theta=self.theta)
        self.n_outputs_ = y.shape[1]
        return self._train(X, self._signal(y), y.shape[1], mse_loss, kind)

    def predict(self, X):
        """Output spike trains, ``(n_samples, outputs, T)``."""
        return np.stack([tr.output_spikes for tr in self._traces(X)])

    def score(self, X, y, sample_weight=None):
        """Negative mean training loss on ``(X, y)``; higher is better."""
        X = check_spike_trains(X, getattr(self, "n_features_in_", None))
        y = check_target_trains(y, X)
        out = self._signal(self.predict(X))
        losses = np.mean((out - self._signal(y)) ** 2, axis=(1, 2))
        return -float(np.average(losses, weights=sample_weight))


class SpikingNetworkClassifier(ClassifierMixin, _SpikingNetworkBase):
    """Spiking classifier with one output neuron per class.

    Logits are the filtered output summed over time (``readout="sum"``) or
    its per-class maximum over time (``readout="max"``).
    """

    def __init__(
        self,
        hidden_sizes=(32,),
        tau=None,
        dt=1e-3,
        theta=1.0,
        surrogate="exponential",
        surrogate_width=1.0,
        surrogate_scale=1.0,
        engine="exodus",
        readout="sum",
        lr=1e-3,
        epochs=20,
        batch_size=8,
        random_state=None,
    ):
        self.hidden_sizes = hidden_sizes
        self.tau = tau
        self.dt = dt
        self.theta = theta
        self.surrogate = surrogate
        self.surrogate_width = surrogate_width
        self.surrogate_scale = surrogate_scale
        self.engine = engine
        self.readout = readout
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _loss(self):
        if self.readout == "sum":
            return ce_sum_over_time
        if self.readout == "max":
            return ce_max_over_time
        raise ValueError(f"readout must be 'sum' or 'max', got {self.readout!r}")

    def fit(self, X, y):
        X = check_spike_trains(X)
        y = check_labels(y, X)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        return self._train(X, encoded, len(self.classes_), self._loss(), LossKind.FILTERED_OUTPUT)

    def decision_function(self, X):
        outs = [tr.output for tr in self._traces(X)]
        if self.readout == "max":
            return np.stack([o.max(axis=1) for o in outs])
        return np.stack([o.sum(axis=1) for o in outs])

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
