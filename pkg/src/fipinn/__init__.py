"""Failure-informed adaptive collocation for residual-trained neural PDE solvers."""

from .nn import Network, init_network, forward, forward_jet, param_gradient

__version__ = "0.1.0"
