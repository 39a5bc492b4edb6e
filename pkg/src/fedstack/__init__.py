"""Clustered stacked federated learning simulator.

Heterogeneous local dense-network clients train on non-IID label
partitions; a server stacks their class probabilities into a global
meta-model, clusters the clients by their flattened output-layer weights
(cluster count picked by BIC over Gaussian-mixture fits), and trains one
intermediate meta-model per cluster under a cyclical learning rate.
"""

from fedstack._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
