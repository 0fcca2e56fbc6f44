"""Periodic Fourier grids, multiplier operators and Sobolev norms.

Conventions
-----------
Grid points are ``x_j = j * L / n`` for ``j = 0 .. n-1``.  The stored mode
array approximates the unitary continuum Fourier transform

    f_hat(xi) = (2 pi)^(-1/2) * integral f(x) exp(-i x xi) dx

sampled on the lattice ``xi_k = 2 pi k / L``, i.e.

    f_hat_k = L / (sqrt(2 pi) n) * FFT(f)_k.

Modes are kept in numpy FFT order (``k = 0, 1, .., n/2-1, -n/2, .., -1``);
``GridSpec.xi`` gives the matching lattice frequencies.  With this scaling
the grid L2 norm ``(L/n * sum |f_j|^2)^(1/2)`` equals the mode norm
``(2 pi / L * sum |f_hat_k|^2)^(1/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    num_modes: int
    box_length: float = 2 * np.pi

    def __post_init__(self):
        n = self.num_modes
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise GridError(f"num_modes must be a power of two >= 8, got {n!r}")
        if not self.box_length > 0:
            raise GridError(f"box_length must be positive, got {self.box_length!r}")

    @cached_property
    def xi(self) -> np.ndarray:
        """Lattice frequencies in FFT order."""
        k = np.fft.fftfreq(self.num_modes, d=1.0 / self.num_modes)
        return 2 * np.pi * k / self.box_length

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.num_modes) * (self.box_length / self.num_modes)

    @property
    def dx(self) -> float:
        return self.box_length / self.num_modes

    @property
    def dxi(self) -> float:
        return 2 * np.pi / self.box_length

    @property
    def scale(self) -> float:
        # factor between raw FFT output and the continuum-normalised modes
        return self.box_length / (np.sqrt(2 * np.pi) * self.num_modes)

    def to_dict(self) -> dict:
        return {"num_modes": int(self.num_modes), "box_length": float(self.box_length)}


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A complex field on a periodic grid, held by its Fourier modes."""

    grid: GridSpec
    modes: np.ndarray

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=np.complex128)
        if modes.shape != (self.grid.num_modes,):
            raise GridError(
                f"modes must have shape ({self.grid.num_modes},), got {modes.shape}")
        modes = modes.copy()
        modes.flags.writeable = False
        object.__setattr__(self, "modes", modes)

    @classmethod
    def from_values(cls, grid: GridSpec, values) -> "SpectralField":
        values = np.asarray(values, dtype=np.complex128)
        return cls(grid, np.fft.fft(values) * grid.scale)

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> "SpectralField":
        return cls.from_values(grid, func(grid.x))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SpectralField":
        return cls(grid, np.zeros(grid.num_modes, dtype=np.complex128))

    @property
    def values(self) -> np.ndarray:
        return np.fft.ifft(self.modes / self.grid.scale)

    def with_modes(self, modes) -> "SpectralField":
        return SpectralField(self.grid, modes)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return self.with_modes(self.modes + other.modes)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return self.with_modes(self.modes - other.modes)

    def __mul__(self, c) -> "SpectralField":
        return self.with_modes(self.modes * c)

    __rmul__ = __mul__

    def is_mean_free(self, rtol: float = 1e-12) -> bool:
        ref = np.max(np.abs(self.modes), initial=0.0)
        return abs(self.modes[0]) <= rtol * ref


def _check_same_grid(a: SpectralField, b: SpectralField):
    if a.grid != b.grid:
        raise GridError("fields live on different grids")


def fractional_symbol(xi: np.ndarray, gamma: float) -> np.ndarray:
    """|xi|^gamma with the zero mode set to 0 for gamma != 0 (1 for gamma == 0)."""
    xi = np.abs(np.asarray(xi, dtype=float))
    if gamma == 0:
        return np.ones_like(xi)
    out = np.zeros_like(xi)
    nz = xi > 0
    out[nz] = xi[nz] ** gamma
    return out


def bessel_symbol(xi: np.ndarray, sigma: float) -> np.ndarray:
    return (1.0 + np.asarray(xi, dtype=float) ** 2) ** (sigma / 2)


def fractional_derivative(f: SpectralField, gamma: float) -> SpectralField:
    return f.with_modes(f.modes * fractional_symbol(f.grid.xi, gamma))


def bessel_multiplier(f: SpectralField, sigma: float) -> SpectralField:
    return f.with_modes(f.modes * bessel_symbol(f.grid.xi, sigma))


def linear_propagator(f: SpectralField, t: float, alpha: float) -> SpectralField:
    """Free evolution exp(i t |xi|^alpha) applied mode by mode."""
    return f.with_modes(f.modes * np.exp(1j * t * np.abs(f.grid.xi) ** alpha))


def l2_norm(f: SpectralField) -> float:
    """Grid-side L2 norm, ``(dx * sum |f_j|^2)^(1/2)``."""
    return float(np.sqrt(f.grid.dx * np.sum(np.abs(f.values) ** 2)))


def _weighted_mode_norm(f: SpectralField, weight: np.ndarray) -> float:
    total = np.sum(weight * np.abs(f.modes) ** 2) * f.grid.dxi
    return float(np.sqrt(total))


def sobolev_norm(f: SpectralField, s: float) -> float:
    return _weighted_mode_norm(f, bessel_symbol(f.grid.xi, 2 * s))


def homogeneous_sobolev_norm(f: SpectralField, s: float) -> float:
    """Homogeneous H^s norm; the zero mode is always left out."""
    xi = np.abs(f.grid.xi)
    weight = np.zeros_like(xi)
    nz = xi > 0
    weight[nz] = xi[nz] ** (2 * s)
    return _weighted_mode_norm(f, weight)


def pad_modes(modes: np.ndarray, m: int) -> np.ndarray:
    """Zero-pad FFT-ordered modes of length n to length m >= n."""
    n = modes.shape[-1]
    if m == n:
        return modes.copy()
    out = np.zeros(modes.shape[:-1] + (m,), dtype=np.complex128)
    h = n // 2
    out[..., :h] = modes[..., :h]
    out[..., m - h:] = modes[..., n - h:]
    return out


def truncate_modes(modes: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`pad_modes`: keep the n lattice frequencies -n/2..n/2-1."""
    m = modes.shape[-1]
    if m == n:
        return modes.copy()
    h = n // 2
    return np.concatenate([modes[..., :h], modes[..., m - h:]], axis=-1)
