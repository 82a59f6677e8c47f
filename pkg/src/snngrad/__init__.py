"""Exact and approximate gradients for feed-forward spiking networks."""

from .estimator import SpikingNetworkClassifier, SpikingNetworkRegressor
from .forward import DenseLayer, forward_layer, forward_network, make_network
from .grad_bptt import backward_network_bptt
from .grad_exodus import backward_network_exodus
from .grad_slayer import backward_network_slayer
from .neuron import LifParams, SrmKernels, SurrogateFamily, SurrogateSpec
from .report import GradientReport, LossGrad, LossKind
from .train import train_loop

__version__ = "0.1.0"

__all__ = [
    "DenseLayer",
    "GradientReport",
    "LifParams",
    "LossGrad",
    "LossKind",
    "SpikingNetworkClassifier",
    "SpikingNetworkRegressor",
    "SrmKernels",
    "SurrogateFamily",
    "SurrogateSpec",
    "backward_network_bptt",
    "backward_network_exodus",
    "backward_network_slayer",
    "forward_layer",
    "forward_network",
    "make_network",
    "train_loop",
]
