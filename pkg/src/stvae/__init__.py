"""Variational auto-encoders with Gaussian and multivariate Student-t priors.

Everything runs on a small built-in reverse-mode autodiff engine; the hot
scalar kernels (special functions, Gamma sampling, Ising sweeps) come from a
compiled extension when available, otherwise from a pure-Python twin.
"""
from ._backend import BACKEND
from .config import TrainConfig, load_config, load_preset
from .distributions import RngState, TDistParams

__version__ = "0.1.0"

__all__ = ["BACKEND", "TrainConfig", "load_config", "load_preset", "RngState", "TDistParams"]
