"""Moment machinery and law-of-large-numbers checks for finite-state branching Markov processes."""
from ._backend import DEFAULT as KERNEL_BACKEND
from .model import BmpModel, build_model, bundled_model, load_model, yule_model
from .spectral import SpectralData, compute_eigendata

__version__ = "0.1.0"

__all__ = [
    "BmpModel",
    "KERNEL_BACKEND",
    "SpectralData",
    "build_model",
    "bundled_model",
    "compute_eigendata",
    "load_model",
    "yule_model",
]
