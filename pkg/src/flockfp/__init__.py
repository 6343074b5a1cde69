"""Numerical laboratory for the noisy mean-field flocking Fokker-Planck equation."""

__version__ = "0.1.0"

from .model import ModelParams

__all__ = ["ModelParams", "__version__"]
