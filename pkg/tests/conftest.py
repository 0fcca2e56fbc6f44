import numpy as np
import pytest

from mmtlab.spectral import GridSpec, SpectralField


def random_field(grid, band, seed, mean_free=True):
    """Complex Gaussian modes on |k| <= band."""
    rng = np.random.default_rng(seed)
    k = np.fft.fftfreq(grid.num_modes, d=1.0 / grid.num_modes)
    active = np.abs(k) <= band
    if mean_free:
        active &= k != 0
    modes = np.zeros(grid.num_modes, complex)
    modes[active] = rng.standard_normal(active.sum()) + 1j * rng.standard_normal(active.sum())
    return SpectralField(grid, modes)


@pytest.fixture
def grid64():
    return GridSpec(64)


ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail=""):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}  {detail}".rstrip()
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
