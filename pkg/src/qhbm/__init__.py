"""Quantum Hamiltonian-based generative modelling on pixel data.

A classical energy-based model learns a diagonal modular Hamiltonian
over sampled spin configurations while a variational circuit rotates
its thermal state onto the mixed state of Bernoulli-embedded images.
The trained pair drives event generation and anomaly detection.
"""

__version__ = "0.1.0"

from . import anomaly, ebm, embed, io, metrics, qsim, rng, train
from .errors import ConfigError, DataError, NumericError

__all__ = [
    "__version__",
    "anomaly",
    "ebm",
    "embed",
    "io",
    "metrics",
    "qsim",
    "rng",
    "train",
    "ConfigError",
    "DataError",
    "NumericError",
]
