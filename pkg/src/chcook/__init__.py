"""Spectral Galerkin laboratory for the stochastic Cahn-Hilliard-Cook equation
with double-logarithmic potential and its polynomial approximations."""
from .kernels import BACKEND
from .potential import PotentialSpec, SingularInput
from .spectral import SpectralField

__version__ = "0.1.0"

__all__ = ["BACKEND", "PotentialSpec", "SingularInput", "SpectralField", "__version__"]
