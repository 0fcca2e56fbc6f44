"""Numerical laboratory for the MMT-type equation
i u_t + (-d_xx)^{alpha/2} u = D^beta(|D^beta u|^2 D^beta u)."""

from .params import ModelParams
from .spectral import GridSpec, SpectralField

__all__ = ["ModelParams", "GridSpec", "SpectralField"]
__version__ = "0.1.0"
