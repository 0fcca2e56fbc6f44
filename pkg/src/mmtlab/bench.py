"""Sampled checks of the set-measure bounds behind the dyadic multiplier
estimates.

Nothing here bounds an operator norm.  A characteristic-function multiplier
on the hyperplane has norm at most the square root of its largest fibre
measure, and the dyadic estimates are proved by bounding such fibres.  The
bench measures the fibres (or, for four-variable interactions, the level sets
left after the largest modulation is localised away) and compares them with
the squared bound forms up to a constant fixed on the smallest instance of
each sweep.

Dyadic convention: ``|x| ~ N`` means ``N <= |x| < 2N``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .probe import omega_difference

# dispersion signs h_j = sign_j |xi_j|^alpha
TRIPLE_SIGNS = (1, -1, 1)
QUAD_SIGNS = (1, -1, 1, -1)


class InfeasibleConfig(ValueError):
    pass


class UnknownCase(KeyError):
    pass


def _is_dyadic(x) -> bool:
    return x > 0 and abs(math.log2(x) - round(math.log2(x))) < 1e-12


def dyadic_floor(x: float) -> float:
    return 2.0 ** math.floor(math.log2(x))


@dataclass(frozen=True)
class DyadicConfig:
    N: tuple
    L_levels: tuple = ()
    alpha: float = 2.0

    def __post_init__(self):
        N = tuple(float(n) for n in self.N)
        if len(N) not in (3, 4):
            raise ValueError("N must hold three or four dyadic sizes")
        for v in N + tuple(self.L_levels):
            if not _is_dyadic(v):
                raise ValueError(f"{v!r} is not an integer power of two")
        if not 1 < self.alpha <= 2:
            raise ValueError(f"alpha must lie in (1, 2], got {self.alpha!r}")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "L_levels", tuple(float(v) for v in self.L_levels))


@dataclass(frozen=True)
class MeasureEstimate:
    """A set measure.  ``stderr`` is the binomial standard error of a hit
    count (zero for grid counting); ``error_bound`` is a rigorous bound on the
    grid discretisation error (zero for sampling)."""

    value: float
    stderr: float
    samples: int
    seed: int
    error_bound: float = 0.0


# -- dispersion ---------------------------------------------------------------

def _h(x, sign, alpha):
    return sign * np.abs(x) ** alpha


def triple_resonance(x1, x2, x3, alpha):
    """|x1|^a - |x2|^a + |x3|^a (on x1 + x2 + x3 = 0)."""
    return omega_difference(x1, x2, alpha) + np.abs(x3) ** alpha


def quartic_resonance(x1, x2, x3, x4, alpha):
    """|x1|^a - |x2|^a + |x3|^a - |x4|^a, paired to avoid cancellation."""
    return omega_difference(x1, x2, alpha) + omega_difference(x3, x4, alpha)


# -- frequency range of the three-wave resonance --------------------------------

def h_range_lower_constant(alpha: float) -> float:
    """inf |h| / (|xi|_max^{alpha-1} |xi|_min) over the plane x1+x2+x3 = 0.

    Write the two ``+`` slots as a, b with t = |b|/|a| <= 1.  With a, b of one
    sign the ``-`` slot is the largest and the ratio is
    ((1+t)^a - 1 - t^a) / ((1+t)^(a-1) t), smallest at t = 1.  With opposite
    signs it is (1 + t^a - (1-t)^a) / min(t, 1-t) >= min(a, 2), never smaller.
    """
    return 2.0 - 2.0 ** (2.0 - alpha)


def h_range_upper_constant(alpha: float) -> float:
    # |h| <= max(|x1|^a + |x3|^a, |x2|^a) < 2 (2 N_max)^a
    return 2.0 ** (alpha + 1)


def _sample_annulus(rng, N, size):
    r = rng.uniform(N, 2 * N, size)
    return np.where(rng.random(size) < 0.5, -r, r)


def h_range_check(cfg: DyadicConfig, samples: int = 100_000, seed: int = 0,
                  max_draws: int = 1_000_000) -> dict:
    """Sample the three annuli on x1 + x2 + x3 = 0 and compare |h| with
    N_max^{alpha-1} N_min (below) and N_max^alpha (above)."""
    if len(cfg.N) != 3:
        raise ValueError("h_range_check needs exactly three sizes")
    alpha = cfg.alpha
    N = np.array(cfg.N)
    order = np.argsort(-N, kind="stable")
    solved = int(order[0])          # one of the two largest sizes
    free = [j for j in range(3) if j != solved]
    rng = np.random.default_rng(seed)
    kept, draws = [], 0
    batch = max(1000, min(samples, 100_000))
    while sum(len(k) for k in kept) < samples and draws < max_draws:
        xs = {j: _sample_annulus(rng, N[j], batch) for j in free}
        xs[solved] = -(xs[free[0]] + xs[free[1]])
        a = np.abs(xs[solved])
        ok = (a >= N[solved]) & (a < 2 * N[solved])
        draws += batch
        if ok.any():
            kept.append(np.vstack([xs[0][ok], xs[1][ok], xs[2][ok]]))
    if not kept:
        raise InfeasibleConfig(f"no sample met the annulus constraints for N={cfg.N} "
                               f"after {draws} draws")
    pts = np.hstack(kept)[:, :samples]
    h = np.abs(triple_resonance(pts[0], pts[1], pts[2], alpha))
    Nmax, Nmin = N.max(), N.min()
    low = h / (Nmax ** (alpha - 1) * Nmin)
    high = h / Nmax**alpha
    n_hit = sum(k.shape[1] for k in kept)
    p = n_hit / draws
    lo_c, hi_c = h_range_lower_constant(alpha), h_range_upper_constant(alpha)
    return {
        "N": list(cfg.N), "alpha": alpha, "samples": int(pts.shape[1]), "seed": seed,
        "min_lower_ratio": float(low.min()), "max_upper_ratio": float(high.max()),
        "lower_constant": lo_c, "upper_constant": hi_c,
        "acceptance": MeasureEstimate(p, math.sqrt(p * (1 - p) / draws), draws, seed),
        "passed": bool(low.min() >= lo_c and high.max() <= hi_c),
    }


# -- level sets ---------------------------------------------------------------

def _cell_grid(A, B, resolution):
    h = min(A[1] - A[0], B[1] - B[0]) / resolution
    n1 = max(1, int(math.ceil((A[1] - A[0]) / h - 1e-9)))
    n2 = max(1, int(math.ceil((B[1] - B[0]) / h - 1e-9)))
    h1, h2 = (A[1] - A[0]) / n1, (B[1] - B[0]) / n2
    x1 = A[0] + (np.arange(n1) + 0.5) * h1
    x2 = B[0] + (np.arange(n2) + 0.5) * h2
    return x1, x2, h1, h2


def level_set_measure(A, B, sign_pattern, xi, tau, L, alpha, resolution=256,
                      C=None) -> MeasureEstimate:
    """Grid count of |{(x1, x2) in A x B : |h1(x1) + h2(x2) + h3(xi-x1-x2) - tau| <= L}|.

    Cells have side min(|A|, |B|)/resolution.  A cell is certain when the
    level-set test gives the same answer on the whole cell, judged from the
    centre value and a Lipschitz bound; ``error_bound`` is the area of the
    uncertain cells.  With ``C`` given, x3 = xi - x1 - x2 must lie in C.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    x1, x2, h1, h2 = _cell_grid(A, B, resolution)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    s1, s2, s3 = sign_pattern
    X3 = xi - X1 - X2
    g = _h(X1, s1, alpha) + _h(X2, s2, alpha) + _h(X3, s3, alpha)
    # Lipschitz bound of g over a cell, from the largest |x| reachable in it
    r1, r2 = h1 / 2, h2 / 2
    m1 = np.abs(X1) + r1
    m2 = np.abs(X2) + r2
    m3 = np.abs(X3) + r1 + r2
    var = alpha * (m1 ** (alpha - 1) * r1 + m2 ** (alpha - 1) * r2
                   + m3 ** (alpha - 1) * (r1 + r2))
    dist = np.abs(g - tau)
    inside = dist <= L
    uncertain = np.abs(dist - L) <= var
    if C is not None:
        inside &= (X3 >= C[0]) & (X3 <= C[1])
        near_edge = (np.abs(X3 - C[0]) <= r1 + r2) | (np.abs(X3 - C[1]) <= r1 + r2)
        uncertain |= near_edge
    area = h1 * h2
    return MeasureEstimate(float(inside.sum() * area), 0.0, int(inside.size), 0,
                           float(uncertain.sum() * area))


def level_set_measure_mc(A, B, sign_pattern, xi, tau, L, alpha, samples=100_000,
                         seed=0, C=None) -> MeasureEstimate:
    """Hit-or-miss estimate of the same set, with binomial standard error."""
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(A[0], A[1], samples)
    x2 = rng.uniform(B[0], B[1], samples)
    s1, s2, s3 = sign_pattern
    x3 = xi - x1 - x2
    g = _h(x1, s1, alpha) + _h(x2, s2, alpha) + _h(x3, s3, alpha)
    hit = np.abs(g - tau) <= L
    if C is not None:
        hit &= (x3 >= C[0]) & (x3 <= C[1])
    box = (A[1] - A[0]) * (B[1] - B[0])
    p = hit.mean()
    return MeasureEstimate(float(p * box), float(box * math.sqrt(p * (1 - p) / samples)),
                           samples, seed)


def _interval_roots(coeffs, lo, hi):
    """Subintervals of [lo, hi] where the polynomial in ``coeffs`` is <= 0."""
    roots = [r.real for r in np.roots(np.trim_zeros(coeffs, "f")) if abs(r.imag) < 1e-12] \
        if np.any(np.asarray(coeffs) != 0) else []
    pts = sorted([lo, hi] + [r for r in roots if lo < r < hi])
    total = 0.0
    for a, b in zip(pts, pts[1:]):
        if np.polyval(coeffs, 0.5 * (a + b)) <= 0:
            total += b - a
    return total


def level_set_measure_quadratic(A, B, sign_pattern, xi, tau, L, C=None) -> float:
    """Semi-analytic measure for alpha = 2.

    For fixed x1 the constraint |g - tau| <= L is a pair of quadratic
    inequalities in x2, solved exactly; the resulting length is integrated
    over x1 by adaptive quadrature.
    """
    s1, s2, s3 = sign_pattern

    def length(x1):
        lo, hi = B
        if C is not None:
            # x3 = xi - x1 - x2 in C  <=>  x2 in [xi - x1 - C1, xi - x1 - C0]
            lo, hi = max(lo, xi - x1 - C[1]), min(hi, xi - x1 - C[0])
        if hi <= lo:
            return 0.0
        c = xi - x1
        # g(x2) = s1 x1^2 + s2 x2^2 + s3 (c - x2)^2
        q = np.array([s2 + s3, -2 * s3 * c, s1 * x1**2 + s3 * c**2])
        upper = q - np.array([0, 0, tau + L])      # g - tau - L <= 0
        lower = -(q - np.array([0, 0, tau - L]))   # tau - L - g <= 0
        # measure of {upper <= 0} minus measure of {upper <= 0 and lower > 0}
        both_bad = _interval_roots(upper, lo, hi) + _interval_roots(lower, lo, hi) - (hi - lo)
        return max(both_bad, 0.0)

    val, _ = integrate.quad(length, A[0], A[1], limit=400, epsabs=0.0, epsrel=1e-10)
    return float(val)


# -- fibre measures for the three-wave dyadic blocks ------------------------------

def _band_overlap(c, La, Lb):
    """Length of {l : La <= |l| < 2La, Lb <= |c - l| < 2Lb}, vectorised in c."""
    total = np.zeros_like(c)
    for sa in (-1.0, 1.0):
        a0, a1 = sorted((sa * La, sa * 2 * La))
        for sb in (-1.0, 1.0):
            # |c - l| in band  <=>  l in c - sb*[Lb, 2Lb)
            e0, e1 = c - sb * Lb, c - sb * 2 * Lb
            b0, b1 = np.minimum(e0, e1), np.maximum(e0, e1)
            total += np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0, None)
    return total


def _annulus_nodes(N, n):
    u = (np.arange(n) + 0.5) / n
    pos = N + N * u
    return np.concatenate([-pos[::-1], pos]), N / n


def _intersect(a, b):
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if hi > lo:
                out.append((lo, hi))
    return sorted(out)


def _annulus(N):
    return [(-2 * N, -N), (N, 2 * N)]


def _overlap_kinks(La, Lb):
    """Values of c at which the band-overlap length has a kink."""
    ends_a = [s * v for s in (-1, 1) for v in (La, 2 * La)]
    ends_b = [s * v for s in (-1, 1) for v in (Lb, 2 * Lb)]
    return sorted({ea + eb for ea in ends_a for eb in ends_b})


_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def _crossings(y, f, targets, func, iters=45):
    """All roots of func(y) = t, t in ``targets``, that are bracketed on the
    node set y; refined by bisection, vectorised over roots."""
    targets = np.asarray(targets, dtype=float)
    d = f[None, :] - targets[:, None]
    ti, idx = np.nonzero(np.sign(d[:, :-1]) * np.sign(d[:, 1:]) < 0)
    if idx.size == 0:
        return np.empty(0)
    t = targets[ti]
    lo, hi = y[idx].copy(), y[idx + 1].copy()
    slo = np.sign(d[ti, idx])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        left = np.sign(func(mid) - t) == slo
        lo = np.where(left, mid, lo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def _fibre_integral(func, lo, hi, kink_values, weight, nodes=256):
    """Integrate weight(func(y)) over [lo, hi] where weight is smooth in
    func between consecutive ``kink_values``.

    Breakpoints are the nodes of a uniform grid, the approximate local extrema
    of func and every crossing of a kink value; each piece gets a 6-point
    Gauss-Legendre rule.  ``weight`` may return an array with leading axes,
    which are kept.
    """
    y = np.linspace(lo, hi, nodes + 1)
    f = func(y)
    df = np.diff(f)
    turn = np.nonzero(np.sign(df[:-1]) * np.sign(df[1:]) < 0)[0] + 1
    if turn.size:
        # parabola through three neighbours locates each extremum
        y0, y1, y2 = y[turn - 1], y[turn], y[turn + 1]
        f0, f1, f2 = f[turn - 1], f[turn], f[turn + 1]
        den = f0 - 2 * f1 + f2
        with np.errstate(divide="ignore", invalid="ignore"):
            shift = np.where(den != 0, 0.5 * (f0 - f2) / den, 0.0)
        ext = np.clip(y1 + shift * (y2 - y1), y0, y2)
        y = np.sort(np.concatenate([y, ext]))
        f = func(y)
    pts = np.unique(np.concatenate([y, _crossings(y, f, kink_values, func)]))
    a, b = pts[:-1], pts[1:]
    half = 0.5 * (b - a)
    q = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X[None, :]
    vals = weight(func(q))
    return (vals @ _GL_W) @ half


def fibre_measure(N, L, H, alpha, fixed, candidates=16, rng=None, lam_points=8,
                  nodes=256) -> float:
    """sup over (xi_k, tau_k) of |{(xi_i, tau_i)}| in the block, k = ``fixed``.

    For fixed xi_i, the admissible tau_i form the intersection of two
    modulation bands, whose length is a piecewise linear function of h.  The
    xi_i integral is done piecewise exactly (see :func:`_fibre_integral`).
    The supremum runs over a grid of xi_k in its annulus (plus random points
    when ``rng`` is given) and ``2*lam_points`` modulations per xi_k.
    """
    k = fixed
    i, j = [m for m in range(3) if m != k]
    xk, _ = _annulus_nodes(N[k], candidates)
    if rng is not None:
        xk = np.concatenate([xk, _sample_annulus(rng, N[k], candidates)])
    band = L[k] * (1 + (np.arange(lam_points) + 0.5) / lam_points)
    lam_k = np.concatenate([band, -band])
    kinks = np.array(_overlap_kinks(L[i], L[j]))
    # lambda_i + lambda_j = -h - lambda_k, so kinks sit at h = -lambda_k - c
    targets = np.concatenate([(-lam_k[:, None] - kinks[None, :]).ravel(),
                              [H, 2 * H, -H, -2 * H]])

    def weight(h):
        ah = np.abs(h)
        band_ok = (ah >= H) & (ah < 2 * H)
        c = -h[None, ...] - lam_k.reshape((-1,) + (1,) * h.ndim)
        return _band_overlap(c, L[i], L[j]) * band_ok

    best = 0.0
    for x in xk:
        # xi_j = -x - xi_i must lie in its annulus
        dom_j = [(-x - hi, -x - lo) for lo, hi in _annulus(N[j])]
        domain = _intersect(_annulus(N[i]), dom_j)
        if not domain:
            continue

        def h_of(y, x=x):
            xs = [None, None, None]
            xs[k], xs[i], xs[j] = np.full_like(y, x), y, -x - y
            return triple_resonance(xs[0], xs[1], xs[2], alpha)

        total = sum(_fibre_integral(h_of, lo, hi, targets, weight, nodes)
                    for lo, hi in domain)
        best = max(best, float(np.max(total)))
    return best


def block_measure(N, L, H, alpha, candidates=16, rng=None) -> float:
    """Smallest of the three fibre suprema (any of them bounds the norm squared)."""
    return min(fibre_measure(N, L, H, alpha, k, candidates, rng) for k in range(3))


def typical_h(N, alpha, slots=(0, 1, 2), samples=20000, seed=0, quartic=False):
    """Dyadic floor of the median |h| over the annulus configuration."""
    rng = np.random.default_rng(seed)
    n = len(N)
    solved = int(np.argmax(N))
    xs = [None] * n
    for j in range(n):
        if j != solved:
            xs[j] = _sample_annulus(rng, N[j], samples)
    xs[solved] = -sum(xs[j] for j in range(n) if j != solved)
    a = np.abs(xs[solved])
    ok = (a >= N[solved]) & (a < 2 * N[solved])
    if not ok.any():
        raise InfeasibleConfig(f"sizes {N} admit no zero-sum configuration")
    if quartic:
        h = quartic_resonance(*(x[ok] for x in xs), alpha)
    else:
        h = triple_resonance(*(x[ok] for x in xs), alpha)
    return dyadic_floor(float(np.median(np.abs(h))))


# -- four-wave level sets --------------------------------------------------------

def quartic_level_sup(centres, widths, eliminated, L, alpha, resolution=128, xi_points=9):
    """sup over (xi, tau) of the quartic level set left after the slot
    ``eliminated`` is localised away, minimised over which remaining slot is
    solved for.

    ``centres``/``widths`` describe the localised boxes of the four slots.
    For each choice of the integrated pair and each xi on a grid of the
    eliminated box, the supremum over tau is exact on the cell grid: the
    largest count of cell values in a window of width 2L.
    """
    rest = [m for m in range(4) if m != eliminated]
    boxes = [(c - w / 2, c + w / 2) for c, w in zip(centres, widths)]
    ce, we = centres[eliminated], widths[eliminated]
    xis = -(ce - we / 2 + (np.arange(xi_points) + 0.5) * we / xi_points)
    results = []
    for solved in rest:
        a, b = [m for m in rest if m != solved]
        x1, x2, h1, h2 = _cell_grid(boxes[a], boxes[b], resolution)
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        best = 0.0
        for xi in xis:
            X3 = xi - X1 - X2
            inC = (X3 >= boxes[solved][0]) & (X3 <= boxes[solved][1])
            if not inC.any():
                continue
            g = (_h(X1[inC], QUAD_SIGNS[a], alpha) + _h(X2[inC], QUAD_SIGNS[b], alpha)
                 + _h(X3[inC], QUAD_SIGNS[solved], alpha))
            g = np.sort(g)
            counts = np.searchsorted(g, g + 2 * L, side="right") - np.arange(g.size)
            best = max(best, float(counts.max() * h1 * h2))
        results.append(best)
    return min(results)


# -- the case table ---------------------------------------------------------------

@dataclass(frozen=True)
class BenchCase:
    tag: str
    kind: str           # "bilinear" or "trilinear"
    description: str
    sizes: object       # N -> tuple of dyadic sizes
    lmax_slot: int
    bound: object       # dict of levels -> squared bound
    notes: str = ""


def _ord(v):
    v = sorted(v)
    return v[0], v[1], v[-1]


def _b_case1(N, Ls, a):
    Nmin, _, Nmax = _ord(N)
    Lmin, Lmed, _ = _ord(Ls)
    return Lmin * min(Nmin, Nmax ** (1 - a) * Lmed)


def _b_case2(N, Ls, a):
    Nmin, _, Nmax = _ord(N)
    Lmin, Lmed, _ = _ord(Ls)
    return Lmin * min(Nmin, Nmax ** (2 - a) / Nmin * Lmed)


def _b_plain(N, Ls, a):
    return _ord(Ls)[0] * _ord(N)[0]


def _b_449(N, Ls, a):
    s = sorted(N)
    return s[0] * s[1]


def _b_4410(N, Ls, a):
    s = sorted(N)
    Lmean = sorted(Ls)[-1]
    return Lmean * s[0] ** (1 / 3) * s[1] ** (1 / 3) * s[-1] ** (4 / 3 - a)


def _b_4411(N, Ls, a):
    s = sorted(N)
    Lmean = sorted(Ls)[-1]
    return Lmean * s[0] ** 0.5 * s[-1] ** (1.5 - a)


CASES = {
    "bil-L1max-N1max": BenchCase(
        "bil-L1max-N1max", "bilinear", "H ~ L_max ~ L1, N1 ~ N_max",
        lambda N: (N, N, N / 8), 0, _b_case1),
    "bil-L1max-N23": BenchCase(
        "bil-L1max-N23", "bilinear", "H ~ L_max ~ L1, N2 ~ N3 >> N1",
        lambda N: (N / 8, N, N), 0, _b_case2),
    "bil-L2max-comparable": BenchCase(
        "bil-L2max-comparable", "bilinear", "H ~ L_max ~ L2, N_max ~ N_min",
        lambda N: (N, 2 * N, N), 1, _b_plain,
        "three equal dyadic annuli cannot sum to zero, so the middle one is doubled"),
    "bil-L2max-N12": BenchCase(
        "bil-L2max-N12", "bilinear", "H ~ L_max ~ L2, N_max ~ N_med >> N_min",
        lambda N: (N, N, N / 8), 1, _b_case1),
    "bil-Lmax-Lmed": BenchCase(
        "bil-Lmax-Lmed", "bilinear", "H << L_max ~ L_med",
        lambda N: (N, N, N / 8), 0, _b_plain),
    "tri-HLL": BenchCase(
        "tri-HLL", "trilinear", "H~ << L_max ~ L_mean",
        lambda N: (N, N, N / 8, N / 32), 0, _b_449),
    "tri-N1N3max": BenchCase(
        "tri-N1N3max", "trilinear", "N1 ~ N3 ~ N_max, H~ ~ L_max ~ L2",
        lambda N: (N, N / 8, N, N / 32), 1, _b_4410),
    "tri-N1N2max": BenchCase(
        "tri-N1N2max", "trilinear", "N1 ~ N2 ~ N_max >> N3, H~ ~ L_max ~ L1",
        lambda N: (N, N, N / 8, N / 32), 0, _b_4411),
}


def case_table() -> list[dict]:
    """Sign and slot assignments used by each case, for the docs."""
    rows = []
    for c in CASES.values():
        signs = TRIPLE_SIGNS if c.kind == "bilinear" else QUAD_SIGNS
        rows.append({"case": c.tag, "kind": c.kind, "regime": c.description,
                     "signs": "".join("+" if s > 0 else "-" for s in signs),
                     "lmax_slot": c.lmax_slot + 1})
    return rows


def _bilinear_levels(case, N, alpha, m, seed):
    sizes = case.sizes(N)
    H = typical_h(sizes, alpha, seed=seed)
    Nmin, _, Nmax = _ord(sizes)
    Lmin = 1.0
    if case.tag == "bil-Lmax-Lmed":
        Lmax = 8 * H
        Lmed = Lmax
    else:
        Lmax = H
        cross = Nmin * Nmax ** (alpha - 1)
        if case.tag == "bil-L1max-N23":
            cross = Nmin**2 * Nmax ** (alpha - 2)
        # L_med = L_max leaves no room for lambda_1 + lambda_2 + lambda_3 = -h
        Lmed = min(max(dyadic_floor(cross * 2.0**m), Lmin), Lmax / 2)
    Ls = [0.0, 0.0, 0.0]
    k = case.lmax_slot
    others = [j for j in range(3) if j != k]
    Ls[k], Ls[others[0]], Ls[others[1]] = Lmax, Lmed, Lmin
    return sizes, tuple(Ls), H


def _quartic_geometry(case, N):
    sizes = case.sizes(N)
    if case.tag == "tri-N1N3max":
        c = [1.5 * sizes[0], -1.5 * sizes[1], 0.0, 1.5 * sizes[3]]
        c[2] = -(c[0] + c[1] + c[3])
    else:
        c = [1.5 * sizes[0], 0.0, 1.5 * sizes[2], -1.5 * sizes[3]]
        c[1] = -(c[0] + c[2] + c[3])
    s = sorted(sizes)
    Nmin, Nmed = s[0], s[1]
    widths = [Nmed / 8 if j != 3 else Nmin / 8 for j in range(4)]
    return sizes, c, widths


def _measure_cell(case, N, alpha, m, resolution, samples, seed):
    rng = np.random.default_rng(seed) if samples else None
    if case.kind == "bilinear":
        sizes, Ls, H = _bilinear_levels(case, N, alpha, m, seed)
        # the fibre through the L_max slot, as in the dyadic argument
        meas = fibre_measure(sizes, Ls, H, alpha, case.lmax_slot, candidates=16, rng=rng)
        return sizes, Ls, meas, case.bound(sizes, Ls, alpha)
    sizes, c, w = _quartic_geometry(case, N)
    Ht = dyadic_floor(float(np.abs(quartic_resonance(*c, alpha))))
    if case.tag == "tri-HLL":
        Lmean = 8 * Ht
    else:
        # variation of the level function across the localised boxes
        V = sizes[0] ** (alpha - 1) * sorted(sizes)[1] / 8
        Lmean = dyadic_floor(V * 2.0**m)
    Ls = (1.0, 1.0, Lmean)          # L_min, L_med, L_mean after localisation
    meas = quartic_level_sup(c, w, case.lmax_slot, Lmean, alpha,
                             resolution=resolution)
    # the level-set form of the bound divides out L_min L_med
    return sizes, Ls, meas, case.bound(sizes, Ls, alpha)


@dataclass
class BenchReport:
    case: str
    alpha: float
    seed: int
    rows: list = field(default_factory=list)
    calibration_constant: float = math.nan
    margin: float = 1.0

    @property
    def worst_ratio(self) -> float:
        return max(r["ratio"] for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= 1.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", "alpha", "N1", "N2", "N3", "N4", "L1", "L2", "L3",
                    "measured", "bound", "ratio"])
        for r in self.rows:
            Ns = list(r["N"]) + [""] * (4 - len(r["N"]))
            w.writerow([self.case, f"{self.alpha:.17g}"] + [f"{v:.17g}" if v != "" else "" for v in Ns]
                       + [f"{v:.17g}" for v in r["L"]]
                       + [f"{r['measured']:.17g}", f"{r['bound']:.17g}", f"{r['ratio']:.17g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"case": self.case, "alpha": self.alpha, "worst_ratio": self.worst_ratio,
                "calibration_constant": self.calibration_constant, "margin": self.margin,
                "seed": self.seed, "passed": self.passed,
                "scope": "set-measure bounds only; no operator norm is computed"}


DEFAULT_N_SWEEP = tuple(2.0**k for k in range(6, 12))
DEFAULT_L_SWEEP = (-6, -3, 0)
CALIBRATION_MARGIN = 1.5


def counting_bound_check(case_tag, alpha, N_sweep=DEFAULT_N_SWEEP, L_sweep=DEFAULT_L_SWEEP,
                         samples=0, seed=0, resolution=256, threads=1,
                         margin=CALIBRATION_MARGIN) -> BenchReport:
    """Sweep (N, L) for one case and compare measured sets with the bound form.

    ``L_sweep`` holds dyadic offsets m: the free modulation level is placed at
    2^m times the case's crossover scale.  The constant is the largest
    measured/bound ratio at the smallest N (over the L levels), times
    ``margin``; every reported ratio is divided by it.
    """
    if case_tag not in CASES:
        raise UnknownCase(case_tag)
    case = CASES[case_tag]
    Ns = [float(n) for n in N_sweep]
    for n in Ns:
        if not _is_dyadic(n):
            raise ValueError(f"N sweep value {n!r} is not dyadic")
    if any(min(case.sizes(n)) < 1 for n in Ns):
        raise InfeasibleConfig(f"N sweep too small for {case_tag}")
    cells = [(n, m) for n in Ns for m in L_sweep]

    def work(cell):
        return _measure_cell(case, cell[0], alpha, cell[1], resolution, samples, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(work, cells))
    else:
        out = [work(c) for c in cells]
    raw = [meas / bnd for (_, _, meas, bnd) in out]
    n0 = Ns[0]
    C = margin * max(r for (n, _), r in zip(cells, raw) if n == n0)
    rep = BenchReport(case_tag, float(alpha), seed, calibration_constant=C, margin=margin)
    for (n, m), (sizes, Ls, meas, bnd), r in zip(cells, out, raw):
        rep.rows.append({"N": tuple(sizes), "L": tuple(Ls), "level": m,
                         "measured": meas, "bound": bnd, "ratio": r / C if C > 0 else 0.0})
    return rep


def write_json_summary(reports) -> str:
    return json.dumps([r.summary() for r in reports], indent=1, sort_keys=True) + "\n"
