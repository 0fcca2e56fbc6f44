import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import mmtlab.dynamics as dyn
from mmtlab.dynamics import (
    SCHEMES,
    IntegratorConfig,
    NotMeanFree,
    StepRejected,
    energy,
    hamiltonian,
    integrate,
    kinetic_energy,
    mass,
    nonlinearity,
    observed_order,
    plane_wave_solution,
    read_snapshots,
    step,
    write_trajectory,
)
from mmtlab.initial import gaussian_packet, plane_wave, random_bandlimited
from mmtlab.params import ModelParams
from mmtlab.spectral import GridSpec, SpectralField, l2_norm, linear_propagator

from conftest import random_field


@pytest.mark.parametrize("kw", [
    dict(dt=0.0, t_end=1.0),
    dict(dt=1.0, t_end=0.5),
    dict(dt=0.1, t_end=1.0, dealias_pad_factor=1.25),
    dict(dt=0.1, t_end=1.0, scheme="RK4"),
    dict(dt=0.1, t_end=1.0, record_stride=0),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        IntegratorConfig(**kw)


def test_model_params_reject_alpha_le_one():
    with pytest.raises(ValueError):
        ModelParams(1.0, 0.0)


def test_nonlinearity_zero_and_plane_wave(grid64):
    assert np.all(nonlinearity(SpectralField.zeros(grid64), 0.3).modes == 0)
    A, k, beta = 0.7, 5, 0.35
    u = plane_wave(grid64, A, k)
    out = nonlinearity(u, beta)
    assert np.max(np.abs(out.values - k ** (4 * beta) * A**3 * np.exp(1j * k * grid64.x))) < 1e-12


def test_nonlinearity_beta_zero_is_cubic_product(grid64):
    # band 10 keeps |u|^2 u inside the 64-mode lattice, so nothing aliases
    u = random_field(grid64, 10, 4)
    direct = np.abs(u.values) ** 2 * u.values
    for pad in (1.5, 2.0):
        assert np.allclose(nonlinearity(u, 0.0, pad).values, direct, atol=1e-12)


def test_linear_step_is_propagator(grid64):
    u = random_field(grid64, 20, 5)
    p = ModelParams(1.7, 0.1)
    for scheme in SCHEMES:
        cfg = IntegratorConfig(0.01, 1.0, scheme=scheme, nonlinear=False)
        assert np.allclose(step(u, p, cfg).modes, linear_propagator(u, 0.01, 1.7).modes,
                           atol=1e-13, rtol=0)


def test_mass_examples():
    g = GridSpec(32, 3.0)
    assert mass(SpectralField.zeros(g)) == 0.0
    u = SpectralField.from_function(g, lambda x: np.exp(2j * np.pi * 2 * x / 3.0))
    assert abs(mass(u) - 3.0) < 1e-12
    v = random_field(g, 8, 1)
    assert abs(mass(v) - g.dxi * np.sum(np.abs(v.modes) ** 2)) < 1e-12 * mass(v)


def test_energy_of_plane_wave():
    g = GridSpec(64, 2 * math.pi)
    A, k = 0.8, 3
    for a, b in ((2.0, 0.0), (1.5, 0.25), (1.3, -0.2)):
        p = ModelParams(a, b)
        u = plane_wave(g, A, k)
        L = g.box_length
        assert energy(SpectralField.zeros(g), p) == 0.0
        expected = L * (k**a * A**2 + 0.5 * k ** (4 * b) * A**4)
        assert abs(energy(u, p) - expected) < 1e-11 * expected


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16), a=st.floats(1.1, 2.0), b=st.floats(-0.24, 0.4))
def test_energy_nonnegative_and_hamiltonian_below(seed, a, b):
    u = random_field(GridSpec(32), 6, seed)
    p = ModelParams(a, b)
    assert energy(u, p) >= 0
    assert hamiltonian(u, p) <= energy(u, p)


def test_mean_free_required(grid64):
    u = SpectralField.from_function(grid64, lambda x: 1.0 + np.exp(1j * x))
    with pytest.raises(NotMeanFree):
        integrate(u, ModelParams(2.0, 0.0), IntegratorConfig(0.01, 0.1))


def test_linear_run_conserves_exactly(grid64):
    u = random_field(grid64, 20, 7)
    p = ModelParams(1.6, 0.1)
    rec = integrate(u, p, IntegratorConfig(0.01, 1.0, nonlinear=False, record_stride=5))
    assert rec.relative_drift("mass_series") < 1e-12
    assert rec.relative_drift("h_alpha_half_series") < 1e-12


def test_record_shape(grid64):
    rec = integrate(random_field(grid64, 5, 0) * 0.1, ModelParams(2.0, 0.0),
                    IntegratorConfig(0.01, 0.25, record_stride=10))
    assert np.allclose(rec.times, [0.0, 0.1, 0.2, 0.25])
    assert np.all(np.diff(rec.times) > 0)
    n = len(rec.times)
    for name in ("mass_series", "energy_series", "h_alpha_half_series", "hamiltonian_series"):
        assert len(getattr(rec, name)) == n


@pytest.mark.parametrize("alpha,beta", [(1.5, 0.2), (1.5, -0.2)])
def test_conservation_fractional(alpha, beta):
    u0 = random_bandlimited(GridSpec(1024), 8, 0, 0.5)
    rec = integrate(u0, ModelParams(alpha, beta), IntegratorConfig(1e-3, 1.0, record_stride=10))
    assert rec.relative_drift("mass_series") <= 1e-8
    assert rec.relative_drift("hamiltonian_series") <= 1e-6
    assert np.all(rec.h_alpha_half_series <= rec.energy_series[0] * (1 + 1e-6))


def test_printed_energy_is_the_invariant_of_the_opposite_sign(monkeypatch):
    # With N(u) entering as -N(u) the quartic sign flips and K + Q/2 becomes
    # the conserved quantity; documents which sign convention each functional
    # belongs to.
    orig = dyn.Stepper.rhs
    monkeypatch.setattr(dyn.Stepper, "rhs", lambda self, m: -orig(self, m))
    u0 = random_bandlimited(GridSpec(256), 8, 0, 0.5)
    rec = integrate(u0, ModelParams(2.0, 0.0), IntegratorConfig(1e-3, 0.5, record_stride=50))
    assert rec.relative_drift("energy_series") <= 1e-8
    assert rec.relative_drift("hamiltonian_series") > 1e-4


@pytest.mark.parametrize("scheme", SCHEMES)
@pytest.mark.parametrize("alpha,beta,A,k", [(2.0, 0.0, 1.5, 1), (1.5, -0.2, 1.0, 2)])
def test_convergence_order(scheme, alpha, beta, A, k):
    g = GridSpec(32)
    p = ModelParams(alpha, beta)
    dts = [0.05, 0.025, 0.0125, 0.00625]
    errs = []
    for dt in dts:
        rec = integrate(plane_wave(g, A, k), p,
                        IntegratorConfig(dt, 1.0, scheme=scheme, record_stride=10**6,
                                         keep_snapshots=True))
        errs.append(np.max(np.abs(rec.snapshots[-1].values
                                  - plane_wave_solution(g, p, A, k, 1.0))))
    assert observed_order(errs, dts) >= 3.8


def test_observed_order_of_exact_power_law():
    dts = np.array([0.1, 0.05, 0.025])
    assert abs(observed_order(3 * dts**4, dts) - 4) < 1e-12


def test_step_rejected_carries_time():
    u0 = random_bandlimited(GridSpec(1024), 8, 0, 1.0)
    with pytest.raises(StepRejected) as info:
        integrate(u0, ModelParams(1.5, 0.2), IntegratorConfig(1e-3, 0.5, record_stride=10))
    exc = info.value
    assert 0 < exc.time < 0.5
    assert exc.record is not None and exc.record.times[-1] < exc.time


def test_trajectory_json_and_sidecar(tmp_path, grid64):
    u0 = random_field(grid64, 6, 2) * 0.1
    rec = integrate(u0, ModelParams(2.0, 0.0),
                    IntegratorConfig(0.01, 0.1, record_stride=5, keep_snapshots=True))
    paths = write_trajectory(rec, tmp_path / "traj.json")
    doc = json.loads(paths[0].read_text())
    assert set(doc) >= {"params", "grid", "cfg", "times", "mass", "energy", "h_half"}
    modes = read_snapshots(paths[0])
    assert modes.shape == (3, 64)
    assert np.array_equal(modes[-1], rec.snapshots[-1].modes)
    raw = np.frombuffer(paths[1].read_bytes(), dtype="<f8")
    assert raw[0] == rec.snapshots[0].modes[0].real
    assert raw[1] == rec.snapshots[0].modes[0].imag


def test_initial_generators():
    g = GridSpec(256, 20.0)
    u = random_bandlimited(g, 8, 3, 0.6)
    assert abs(math.sqrt(np.mean(np.abs(u.values) ** 2)) - 0.6) < 1e-12
    assert u.is_mean_free()
    assert np.all(u.modes[9:-8] == 0)
    v = gaussian_packet(g, 1.0, 5, 1.0)
    assert v.is_mean_free()
    assert abs(l2_norm(plane_wave(g, 2.0, 3)) - 2 * math.sqrt(20.0)) < 1e-12
    with pytest.raises(ValueError):
        plane_wave(g, 1.0, 0)
