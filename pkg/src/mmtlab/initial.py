"""Named initial-data generators for simulations."""

from __future__ import annotations

import numpy as np

from .spectral import GridSpec, SpectralField

GENERATORS = ("plane_wave", "gaussian_packet", "random_bandlimited")


def plane_wave(grid: GridSpec, A: float, k: int) -> SpectralField:
    if int(k) != k or k == 0:
        raise ValueError("k must be a nonzero integer (lattice frequency index)")
    xi = 2 * np.pi * k / grid.box_length
    return SpectralField.from_function(grid, lambda x: A * np.exp(1j * xi * x))


def gaussian_packet(grid: GridSpec, sigma: float, k0: int, A: float) -> SpectralField:
    """A exp(-(x - L/2)^2 / (2 sigma^2)) e^{i k0 x} with its mean removed."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    L = grid.box_length
    xi0 = 2 * np.pi * k0 / L
    u = SpectralField.from_function(
        grid, lambda x: A * np.exp(-((x - L / 2) ** 2) / (2 * sigma**2)) * np.exp(1j * xi0 * x))
    modes = u.modes.copy()
    modes[0] = 0.0
    return u.with_modes(modes)


def random_bandlimited(grid: GridSpec, band: int, seed: int, A: float) -> SpectralField:
    """Complex Gaussian modes on 1 <= |k| <= band, scaled to rms amplitude A."""
    n = grid.num_modes
    if not 1 <= band < n // 2:
        raise ValueError(f"band must lie in [1, {n // 2 - 1}]")
    rng = np.random.default_rng(seed)
    k = np.fft.fftfreq(n, d=1.0 / n)
    active = (np.abs(k) >= 1) & (np.abs(k) <= band)
    modes = np.zeros(n, dtype=np.complex128)
    modes[active] = rng.standard_normal(active.sum()) + 1j * rng.standard_normal(active.sum())
    u = SpectralField(grid, modes)
    rms = np.sqrt(np.mean(np.abs(u.values) ** 2))
    return u * (A / rms)


def make_initial(grid: GridSpec, spec: dict) -> SpectralField:
    kind = spec.get("kind")
    if kind == "plane_wave":
        return plane_wave(grid, float(spec["A"]), int(spec["k"]))
    if kind == "gaussian_packet":
        return gaussian_packet(grid, float(spec["sigma"]), int(spec.get("k0", 0)), float(spec["A"]))
    if kind == "random_bandlimited":
        return random_bandlimited(grid, int(spec["band"]), int(spec["seed"]), float(spec["A"]))
    raise ValueError(f"unknown initial data kind {kind!r}; expected one of {GENERATORS}")
