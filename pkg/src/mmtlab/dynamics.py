"""Time integration of  i u_t + (-d_xx)^(alpha/2) u = D^beta(|D^beta u|^2 D^beta u).

In Fourier variables ``d/dt u_k = i |xi_k|^alpha u_k - i N(u)_k``.  The
linear part is integrated exactly; the nonlinear part by a fourth order
Runge-Kutta stage structure, either ETD-RK4 (Cox-Matthews, with coefficients
from the Kassam-Trefethen contour average) or integrating-factor RK4.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import ModelParams
from .spectral import (
    GridSpec,
    SpectralField,
    fractional_symbol,
    homogeneous_sobolev_norm,
    pad_modes,
    truncate_modes,
)

SCHEMES = ("ETD-RK4", "IF-RK4")
PAD_FACTORS = (1.0, 1.5, 2.0)


class StepRejected(RuntimeError):
    """A mode became non-finite; carries the time of the failed step."""

    def __init__(self, message, time=None, record=None):
        super().__init__(message)
        self.time = time
        self.record = record


class NotMeanFree(ValueError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    dealias_pad_factor: float = 2.0
    scheme: str = "ETD-RK4"
    record_stride: int = 1
    keep_snapshots: bool = False
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end!r}")
        if not self.dt < self.t_end:
            raise ValueError("dt must be smaller than t_end")
        if float(self.dealias_pad_factor) not in PAD_FACTORS:
            raise ValueError(f"dealias_pad_factor must be one of {PAD_FACTORS}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be a positive integer")

    @property
    def num_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "t_end": self.t_end,
            "dealias_pad_factor": float(self.dealias_pad_factor),
            "scheme": self.scheme,
            "record_stride": int(self.record_stride),
            "keep_snapshots": bool(self.keep_snapshots),
            "nonlinear": bool(self.nonlinear),
        }


def dispersion_symbol(xi, alpha):
    """Linear frequency omega(xi) = |xi|^alpha."""
    return np.abs(xi) ** alpha


# -- padded-grid helpers --------------------------------------------------

def _padded_size(grid: GridSpec, pad_factor: float) -> int:
    return int(round(grid.num_modes * pad_factor))


def _to_padded_values(modes, grid: GridSpec, m: int) -> np.ndarray:
    coeffs = modes * (np.sqrt(2 * np.pi) / grid.box_length)
    return m * np.fft.ifft(pad_modes(coeffs, m))


def _from_padded_values(values, grid: GridSpec) -> np.ndarray:
    m = values.shape[-1]
    coeffs = truncate_modes(np.fft.fft(values) / m, grid.num_modes)
    return coeffs * (grid.box_length / np.sqrt(2 * np.pi))


def _nonlinear_modes(modes, grid, beta, pad_factor):
    sym = fractional_symbol(grid.xi, beta)
    m = _padded_size(grid, pad_factor)
    w = _to_padded_values(modes * sym, grid, m)
    return sym * _from_padded_values(np.abs(w) ** 2 * w, grid)


def nonlinearity(u: SpectralField, beta: float, dealias_pad_factor: float = 2.0) -> SpectralField:
    """D^beta(|D^beta u|^2 D^beta u), cubic product formed on a padded grid."""
    return u.with_modes(_nonlinear_modes(u.modes, u.grid, beta, dealias_pad_factor))


# -- conserved quantities -------------------------------------------------

def mass(u: SpectralField) -> float:
    return float(u.grid.dx * np.sum(np.abs(u.values) ** 2))


def kinetic_energy(u: SpectralField, alpha: float) -> float:
    """The squared homogeneous H^(alpha/2) norm, integral of |D^(alpha/2) u|^2."""
    return homogeneous_sobolev_norm(u, alpha / 2) ** 2


def quartic_integral(u: SpectralField, beta: float, dealias_pad_factor: float = 2.0) -> float:
    """Integral of |D^beta u|^4, exact for band-limited u on a 2x padded grid."""
    grid = u.grid
    m = _padded_size(grid, max(dealias_pad_factor, 2.0))
    w = _to_padded_values(u.modes * fractional_symbol(grid.xi, beta), grid, m)
    return float(grid.box_length / m * np.sum(np.abs(w) ** 4))


def energy(u: SpectralField, params: ModelParams) -> float:
    """E(u) = integral |D^(alpha/2) u|^2 + 1/2 |D^beta u|^4 dx."""
    return kinetic_energy(u, params.alpha) + 0.5 * quartic_integral(u, params.beta)


def hamiltonian(u: SpectralField, params: ModelParams) -> float:
    """integral |D^(alpha/2) u|^2 - 1/2 |D^beta u|^4 dx.

    This is the invariant of the flow with the sign of the nonlinearity used
    here (``i u_t + D^alpha u = +N(u)``); :func:`energy` is not conserved by
    that flow unless the quartic term is negligible.
    """
    return kinetic_energy(u, params.alpha) - 0.5 * quartic_integral(u, params.beta)


# -- time stepping ----------------------------------------------------------

def _etd_coefficients(z: np.ndarray, dt: float, contour_points: int = 32):
    r = np.exp(2j * np.pi * (np.arange(contour_points) + 0.5) / contour_points)
    lr = z[:, None] + r[None, :]
    e = np.exp(lr)
    q = dt * np.mean((np.exp(lr / 2) - 1) / lr, axis=1)
    f1 = dt * np.mean((-4 - lr + e * (4 - 3 * lr + lr**2)) / lr**3, axis=1)
    f2 = dt * np.mean((2 + lr + e * (lr - 2)) / lr**3, axis=1)
    f3 = dt * np.mean((-4 - 3 * lr - lr**2 + e * (4 - lr)) / lr**3, axis=1)
    return q, f1, f2, f3


class Stepper:
    """Precomputed exponential factors for one (grid, params, cfg) triple."""

    def __init__(self, grid: GridSpec, params: ModelParams, cfg: IntegratorConfig):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        dt = cfg.dt
        lin = 1j * dispersion_symbol(grid.xi, params.alpha)
        self.E = np.exp(dt * lin)
        self.E2 = np.exp(dt * lin / 2)
        if cfg.scheme == "ETD-RK4":
            self.Q, self.f1, self.f2, self.f3 = _etd_coefficients(dt * lin, dt)

    def rhs(self, modes):
        if not self.cfg.nonlinear:
            return np.zeros_like(modes)
        return -1j * _nonlinear_modes(modes, self.grid, self.params.beta,
                                      self.cfg.dealias_pad_factor)

    def advance(self, v):
        F, E, E2 = self.rhs, self.E, self.E2
        if self.cfg.scheme == "ETD-RK4":
            Q = self.Q
            Nv = F(v)
            a = E2 * v + Q * Nv
            Na = F(a)
            b = E2 * v + Q * Na
            Nb = F(b)
            c = E2 * a + Q * (2 * Nb - Nv)
            Nc = F(c)
            return E * v + self.f1 * Nv + 2 * self.f2 * (Na + Nb) + self.f3 * Nc
        h = self.cfg.dt
        k1 = F(v)
        k2 = F(E2 * (v + 0.5 * h * k1))
        k3 = F(E2 * v + 0.5 * h * k2)
        k4 = F(E * v + h * E2 * k3)
        return E * v + h / 6 * (E * k1 + 2 * E2 * (k2 + k3) + k4)


def step(u: SpectralField, params: ModelParams, cfg: IntegratorConfig) -> SpectralField:
    out = Stepper(u.grid, params, cfg).advance(u.modes)
    if not np.all(np.isfinite(out)):
        raise StepRejected("non-finite mode after one step", time=cfg.dt)
    return u.with_modes(out)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    mass_series: np.ndarray
    energy_series: np.ndarray
    h_alpha_half_series: np.ndarray
    hamiltonian_series: np.ndarray
    snapshots: list | None = None
    params: ModelParams | None = None
    grid: GridSpec | None = None
    cfg: IntegratorConfig | None = None
    meta: dict = field(default_factory=dict)

    def relative_drift(self, name: str) -> float:
        series = np.asarray(getattr(self, name))
        ref = abs(series[0])
        return float(np.max(np.abs(series - series[0])) / ref)

    def to_json_dict(self, snapshot_index: dict | None = None) -> dict:
        doc = {
            "params": self.params.to_dict() if self.params else None,
            "grid": self.grid.to_dict() if self.grid else None,
            "cfg": self.cfg.to_dict() if self.cfg else None,
            "times": [float(t) for t in self.times],
            "mass": [float(v) for v in self.mass_series],
            "energy": [float(v) for v in self.energy_series],
            "h_half": [float(v) for v in self.h_alpha_half_series],
            "hamiltonian": [float(v) for v in self.hamiltonian_series],
        }
        if snapshot_index is not None:
            doc["snapshots"] = snapshot_index
        if self.meta:
            doc["meta"] = self.meta
        return doc


def integrate(u0: SpectralField, params: ModelParams, cfg: IntegratorConfig) -> TrajectoryRecord:
    """Run ``cfg.num_steps`` steps from ``u0``, recording the monitors.

    Raises :class:`NotMeanFree` for initial data with a nonzero mean and
    :class:`StepRejected` (with ``.time`` and the partial ``.record``) when a
    step produces non-finite modes.
    """
    if not u0.is_mean_free():
        raise NotMeanFree("initial data must have a vanishing zero mode")
    grid = u0.grid
    stepper = Stepper(grid, params, cfg)
    stride = int(cfg.record_stride)
    times, ms, es, hs, hams, snaps = [], [], [], [], [], []

    def record(t, modes):
        f = SpectralField(grid, modes)
        kin = kinetic_energy(f, params.alpha)
        quart = quartic_integral(f, params.beta, cfg.dealias_pad_factor)
        times.append(t)
        ms.append(mass(f))
        es.append(kin + 0.5 * quart)
        hs.append(kin)
        hams.append(kin - 0.5 * quart)
        if cfg.keep_snapshots:
            snaps.append(f)

    def build():
        return TrajectoryRecord(
            np.array(times), np.array(ms), np.array(es), np.array(hs), np.array(hams),
            snaps if cfg.keep_snapshots else None, params, grid, cfg)

    v = u0.modes.copy()
    record(0.0, v)
    n = cfg.num_steps
    for i in range(1, n + 1):
        # overflow is detected below and reported as a rejected step
        with np.errstate(over="ignore", invalid="ignore"):
            v = stepper.advance(v)
        t = i * cfg.dt
        if not np.all(np.isfinite(v)):
            raise StepRejected(f"non-finite mode at t={t:.6g}", time=t, record=build())
        if i % stride == 0 or i == n:
            record(t, v)
    return build()


def write_trajectory(record: TrajectoryRecord, path, snapshots_path=None) -> list[Path]:
    """Write the JSON document and, if snapshots are present, the binary sidecar.

    The sidecar holds raw mode arrays, FFT-ordered, as little-endian
    interleaved float64 (re, im) pairs, one snapshot after another.
    """
    from .io import atomic_write_bytes, atomic_write_text

    path = Path(path)
    written = []
    index = None
    if record.snapshots:
        snapshots_path = Path(snapshots_path or path.with_suffix(".modes.bin"))
        data = np.stack([f.modes for f in record.snapshots]).astype("<c16")
        atomic_write_bytes(snapshots_path, data.tobytes())
        written.append(snapshots_path)
        index = {
            "file": snapshots_path.name,
            "dtype": "<c16",
            "count": len(record.snapshots),
            "num_modes": int(record.grid.num_modes),
            "order": "fft",
            "times": [float(t) for t in record.times],
        }
    atomic_write_text(path, json.dumps(record.to_json_dict(index), indent=1) + "\n")
    written.insert(0, path)
    return written


def read_snapshots(json_path) -> np.ndarray:
    json_path = Path(json_path)
    doc = json.loads(json_path.read_text())
    idx = doc["snapshots"]
    raw = np.frombuffer((json_path.parent / idx["file"]).read_bytes(), dtype=idx["dtype"])
    return raw.reshape(idx["count"], idx["num_modes"])


def plane_wave_solution(grid: GridSpec, params: ModelParams, amplitude: float, k: int, t: float):
    """Exact single-mode solution A exp(i(k x + (|k|^alpha - |k|^(4 beta) A^2) t))."""
    kk = 2 * np.pi * k / grid.box_length
    freq = abs(kk) ** params.alpha - abs(kk) ** (4 * params.beta) * amplitude**2
    return amplitude * np.exp(1j * (kk * grid.x + freq * t))


def observed_order(errors, dts) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    slope = np.polyfit(np.log(np.asarray(dts)), np.log(np.asarray(errors)), 1)[0]
    return float(slope)

