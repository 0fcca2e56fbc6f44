"""Closed-form parameter arithmetic: critical index, local well-posedness
threshold, C^3 ill-posedness predicate and the (beta, s) region chart."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .params import ModelParams
from .spectral import GridSpec, SpectralField, pad_modes, truncate_modes


class OutOfRange(ValueError):
    pass


class IncompatibleDilation(ValueError):
    pass


class Classification(str, Enum):
    WELL_POSED = "WellPosed"
    ILL_POSED_C3 = "IllPosedC3"
    OPEN = "Open"


class Branch(str, Enum):
    B1_FOUR_THIRDS = "B1_four_thirds"
    B2_LINEAR = "B2_linear"
    B3_TWO_BETA = "B3_two_beta"
    NONE = "None"


@dataclass(frozen=True)
class RegionCell:
    beta: float
    s: float
    classification: Classification
    branch: Branch
    threshold_value: float


@dataclass(frozen=True)
class ScalingLaw:
    lam: float
    alpha: float
    beta: float
    s: float

    @property
    def data_exponent(self) -> float:
        return (4 * self.beta - self.alpha) / 2

    @property
    def norm_exponent(self) -> float:
        return (4 * self.beta + 1 - self.alpha) / 2 - self.s

    @property
    def norm_factor(self) -> float:
        return self.lam ** self.norm_exponent


def critical_index(alpha: float, beta: float) -> float:
    return 2 * beta + (1 - alpha) / 2


def ill_posed_line(alpha: float, beta: float) -> float:
    """s = 2 beta + (2 - alpha)/4, below which the flow map is not C^3."""
    return 2 * beta + (2 - alpha) / 4


def branch_junctions(alpha: float) -> tuple[float, float]:
    return 7 / 8 - alpha, 1 / 8 - alpha / 4


def branch_value(branch: Branch, alpha: float, beta: float, delta: float = 0.0) -> float:
    """Evaluate one branch formula, whether or not beta lies in its range."""
    if branch is Branch.B1_FOUR_THIRDS:
        return 4 / 3 * beta + (2 - alpha) / 6
    if branch is Branch.B2_LINEAR:
        return beta + 5 / 8 - alpha / 2 + delta
    if branch is Branch.B3_TWO_BETA:
        return ill_posed_line(alpha, beta)
    raise ValueError(f"no formula for branch {branch}")


def _check_alpha(alpha):
    if not 1 < alpha <= 2:
        raise OutOfRange(f"alpha must lie in (1, 2], got {alpha!r}")


def active_branch(alpha: float, beta: float) -> Branch:
    _check_alpha(alpha)
    if not -0.25 < beta < (alpha - 1) / 2:
        raise OutOfRange(
            f"beta must lie in (-1/4, (alpha-1)/2) = (-0.25, {(alpha - 1) / 2:g}), got {beta!r}")
    j1, j2 = branch_junctions(alpha)
    if beta <= j1:
        return Branch.B1_FOUR_THIRDS
    if beta <= j2:
        return Branch.B2_LINEAR
    return Branch.B3_TWO_BETA


def lwp_threshold(alpha: float, beta: float, delta: float = 0.0) -> tuple[float, Branch]:
    if delta < 0:
        raise OutOfRange("delta must be nonnegative")
    branch = active_branch(alpha, beta)
    return branch_value(branch, alpha, beta, delta), branch


def illposed_predicate(alpha: float, beta: float, s: float) -> bool:
    return s < ill_posed_line(alpha, beta) or beta < -0.25 or beta > (alpha - 1) / 2


def classify(alpha: float, beta: float, s: float, delta: float = 0.0) -> RegionCell:
    _check_alpha(alpha)
    inside = -0.25 < beta < (alpha - 1) / 2
    if inside:
        thr, branch = lwp_threshold(alpha, beta, delta)
    else:
        thr, branch = math.nan, Branch.NONE
    if illposed_predicate(alpha, beta, s):
        cls = Classification.ILL_POSED_C3
    elif inside:
        if branch is Branch.B2_LINEAR and delta == 0:
            ok = s > thr
        else:
            ok = s >= thr
        cls = Classification.WELL_POSED if ok else Classification.OPEN
    else:
        # the endpoints beta = -1/4 and beta = (alpha-1)/2
        cls = Classification.OPEN
    return RegionCell(float(beta), float(s), cls, branch, float(thr))


def region_chart(alpha, beta_range, s_range, resolution, delta=0.0) -> list[RegionCell]:
    """Classify a resolution x resolution grid; rows ordered by beta, then s."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    (b0, b1), (s0, s1) = beta_range, s_range
    if not (b0 < b1 and s0 < s1):
        raise ValueError("ranges must be nonempty intervals (lo < hi)")
    betas = np.linspace(b0, b1, resolution)
    ss = np.linspace(s0, s1, resolution)
    return [classify(alpha, float(b), float(s), delta) for b in betas for s in ss]


def chart_to_csv(cells) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beta", "s", "classification", "branch", "threshold"])
    for c in cells:
        w.writerow([f"{c.beta:.17g}", f"{c.s:.17g}", c.classification.value,
                    c.branch.value, f"{c.threshold_value:.17g}"])
    return buf.getvalue()


def dnls_threshold(alpha: float, beta: float) -> float:
    """Regularity threshold for v = D^beta u in the fractional derivative NLS."""
    if not alpha > 1:
        raise OutOfRange(f"alpha must be > 1, got {alpha!r}")
    if not 0 <= beta < (alpha - 1) / 2:
        raise OutOfRange(f"beta must lie in [0, (alpha-1)/2), got {beta!r}")
    return beta + (2 - alpha) / 4


def rescale_data(u: SpectralField, lam: float, params: ModelParams,
                 rtol: float = 1e-13) -> SpectralField:
    """u^lam(x) = lam^((4 beta - alpha)/2) u(x / lam) on a box lam times longer.

    The grid spacing is kept, so the new grid has ``lam * num_modes`` modes and
    lattice frequency ``k`` of the old box maps to lattice frequency ``k`` of
    the new one.  For lam < 1 the dropped modes must vanish.
    """
    n = u.grid.num_modes
    m = lam * n
    if not (lam > 0 and abs(m - round(m)) < 1e-9 and round(m) >= 8
            and (int(round(m)) & (int(round(m)) - 1)) == 0):
        raise IncompatibleDilation(
            f"lambda={lam!r} does not map a {n}-mode lattice onto a power-of-two lattice")
    m = int(round(m))
    amp = lam ** ((4 * params.beta - params.alpha) / 2) * lam
    if m >= n:
        modes = pad_modes(u.modes, m)
    else:
        kept = truncate_modes(u.modes, m)
        dropped = np.sum(np.abs(u.modes) ** 2) - np.sum(np.abs(kept) ** 2)
        if dropped > rtol * np.sum(np.abs(u.modes) ** 2):
            raise IncompatibleDilation("field is not band-limited to the contracted lattice")
        modes = kept
    return SpectralField(GridSpec(m, u.grid.box_length * lam), modes * amp)
