"""Command-line front end.

    mmt <simulate|probe|map|bench|selftest> --config <path> [--out-dir <path>]
        [--assert-slope <tol>] [--seed <int>] [--threads <int>]

Exit codes: 0 ok, 1 configuration error, 2 numerical failure (rejected
step), 3 assertion failure.  Every run writes ``manifest.json`` next to its
outputs; the ``config_echo`` entry is the fully resolved configuration and can
be fed back through ``--config`` to reproduce the output digests.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .io import atomic_write_text, sha256_file

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 1, 2, 3
COMMANDS = ("simulate", "probe", "map", "bench", "selftest")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the culprit."""

    def __init__(self, field, message, line=None):
        self.field = field
        self.line = line
        loc = f" (line {line})" if line else ""
        super().__init__(f"config field '{field}'{loc}: {message}")


# -- config helpers ------------------------------------------------------------

def _key_line(text, field):
    """First line of the raw JSON naming ``field``, or its nearest parent
    when the field itself is absent."""
    if not text:
        return None
    lines = text.splitlines()
    for part in reversed(field.split(".")):
        key = '"' + part.split("[")[0] + '"'
        for i, line in enumerate(lines, 1):
            if key in line:
                return i
    return None


class _Reader:
    """Typed access to a nested JSON document that reports the field path."""

    def __init__(self, doc, text=""):
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        self.doc = doc
        self.text = text

    def fail(self, field, message):
        raise ConfigError(field, message, _key_line(self.text, field))

    def get(self, field, default=..., kind=float):
        node = self.doc
        for part in field.split("."):
            if not isinstance(node, dict) or part not in node:
                if default is ...:
                    self.fail(field, "required field is missing")
                return default
            node = node[part]
        if kind is float:
            if isinstance(node, bool) or not isinstance(node, (int, float)) or not math.isfinite(node):
                self.fail(field, f"expected a finite number, got {node!r}")
            return float(node)
        if kind is int:
            if isinstance(node, bool) or not isinstance(node, (int, float)) or node != int(node):
                self.fail(field, f"expected an integer, got {node!r}")
            return int(node)
        if kind is str:
            if not isinstance(node, str):
                self.fail(field, f"expected a string, got {node!r}")
            return node
        if kind is bool:
            if not isinstance(node, bool):
                self.fail(field, f"expected true or false, got {node!r}")
            return node
        if kind is list:
            if not isinstance(node, list):
                self.fail(field, f"expected a list, got {node!r}")
            return node
        return node

    def pair(self, field, default=...):
        v = self.get(field, default, kind=list)
        if len(v) != 2 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            self.fail(field, f"expected [lo, hi], got {v!r}")
        if not v[0] < v[1]:
            self.fail(field, f"expected lo < hi, got {v!r}")
        return [v[0], v[1]]


def load_config(path):
    if path is None:
        return {}, ""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"{exc.msg} at column {exc.colno}", exc.lineno)
    return doc, text


def _params(r: _Reader, with_s=True):
    from .params import ModelParams

    alpha = r.get("params.alpha")
    if not alpha > 1:
        r.fail("params.alpha", f"alpha must be > 1, got {alpha!r}")
    beta = r.get("params.beta")
    s = r.get("params.s", 0.0) if with_s else 0.0
    return ModelParams(alpha, beta, s)


# -- manifest -------------------------------------------------------------------

def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir, command, config_echo, started, outputs, status, extra=None):
    man = {
        "command": command,
        "config_echo": config_echo,
        "artifact_version": __version__,
        "started": started,
        "finished": _now(),
        "status": status,
        "outputs": [{"path": Path(p).name, "sha256": sha256_file(p)} for p in outputs],
    }
    if extra:
        man.update(extra)
    path = Path(out_dir) / "manifest.json"
    atomic_write_text(path, json.dumps(man, indent=1, sort_keys=True) + "\n")
    return man


# -- commands -------------------------------------------------------------------

def resolve_simulate(doc, text, args):
    from .dynamics import IntegratorConfig
    from .initial import GENERATORS
    from .spectral import GridSpec

    r = _Reader(doc, text)
    params = _params(r)
    n = r.get("grid.num_modes", kind=int)
    L = r.get("grid.box_length", 2 * math.pi)
    try:
        grid = GridSpec(n, L)
    except ValueError as exc:
        r.fail("grid.num_modes" if "num_modes" in str(exc) else "grid.box_length", str(exc))
    integ = {
        "dt": r.get("integrator.dt"),
        "t_end": r.get("integrator.t_end"),
        "dealias_pad_factor": r.get("integrator.dealias_pad_factor", 2.0),
        "scheme": r.get("integrator.scheme", "ETD-RK4", kind=str),
        "record_stride": r.get("integrator.record_stride", 1, kind=int),
        "keep_snapshots": r.get("integrator.keep_snapshots", False, kind=bool),
        "nonlinear": r.get("integrator.nonlinear", True, kind=bool),
    }
    try:
        cfg = IntegratorConfig(**integ)
    except ValueError as exc:
        name = next((k for k in integ if str(exc).startswith(k)), "integrator")
        r.fail(f"integrator.{name}" if name != "integrator" else name, str(exc))
    kind = r.get("initial.kind", kind=str)
    if kind not in GENERATORS:
        r.fail("initial.kind", f"unknown generator {kind!r}; expected one of {GENERATORS}")
    if kind == "plane_wave":
        init = {"kind": kind, "A": r.get("initial.A"), "k": r.get("initial.k", kind=int)}
        if init["k"] == 0:
            r.fail("initial.k", "k must be nonzero (data must be mean-free)")
    elif kind == "gaussian_packet":
        init = {"kind": kind, "sigma": r.get("initial.sigma"), "k0": r.get("initial.k0", 0, kind=int),
                "A": r.get("initial.A")}
        if not init["sigma"] > 0:
            r.fail("initial.sigma", "sigma must be positive")
    else:
        seed = args.seed if args.seed is not None else r.get("initial.seed", 0, kind=int)
        init = {"kind": kind, "band": r.get("initial.band", kind=int), "seed": seed,
                "A": r.get("initial.A")}
        if not 1 <= init["band"] < n // 2:
            r.fail("initial.band", f"band must lie in [1, {n // 2 - 1}]")
    return {"params": params.to_dict(), "grid": grid.to_dict(), "integrator": cfg.to_dict(),
            "initial": init}, (params, grid, cfg)


def cmd_simulate(doc, text, args, out_dir):
    from .dynamics import StepRejected, integrate, write_trajectory
    from .initial import make_initial

    started = _now()
    echo, (params, grid, cfg) = resolve_simulate(doc, text, args)
    u0 = make_initial(grid, echo["initial"])
    path = Path(out_dir) / "trajectory.json"
    try:
        rec = integrate(u0, params, cfg)
    except StepRejected as exc:
        outputs = write_trajectory(exc.record, path) if exc.record is not None else []
        write_manifest(out_dir, "simulate", echo, started, outputs, "rejected",
                       {"failure_time": exc.time, "message": str(exc)})
        print(f"step rejected at t={exc.time:.6g}", file=sys.stderr)
        return EXIT_NUMERIC
    outputs = write_trajectory(rec, path)
    drift = {"mass": rec.relative_drift("mass_series"),
             "hamiltonian": rec.relative_drift("hamiltonian_series"),
             "energy": rec.relative_drift("energy_series")}
    write_manifest(out_dir, "simulate", echo, started, outputs, "ok", {"relative_drift": drift})
    print(f"simulate: {cfg.num_steps} steps, mass drift {drift['mass']:.3e}, "
          f"hamiltonian drift {drift['hamiltonian']:.3e}")
    return EXIT_OK


def resolve_probe(doc, text, args):
    from .probe import FAMILIES, ProbeSpec

    r = _Reader(doc, text)
    family = r.get("family", kind=str)
    if family not in FAMILIES:
        r.fail("family", f"unknown family {family!r}; expected one of {FAMILIES}")
    params = _params(r)
    lo, hi = r.pair("N_exponents", [8, 13])
    if lo != int(lo) or hi != int(hi):
        r.fail("N_exponents", "exponents must be integers")
    if lo < 6:
        r.fail("N_exponents", f"smallest N is 2^{lo:g}; must be at least 2^6")
    t, eps = r.get("t", 0.1), r.get("eps", 0.01)
    if t < 0:
        r.fail("t", "t must be nonnegative")
    if not eps > 0:
        r.fail("eps", "eps must be positive")
    Q, M = r.get("Q", 128, kind=int), r.get("M", 64, kind=int)
    if Q < 32:
        r.fail("Q", "Q must be >= 32")
    if M < 16:
        r.fail("M", "M must be >= 16")
    spec = ProbeSpec(family, params, t, eps, tuple(2.0**k for k in range(int(lo), int(hi) + 1)), Q, M)
    echo = {"family": family, "params": params.to_dict(), "t": t, "eps": eps,
            "N_exponents": [int(lo), int(hi)], "Q": Q, "M": M}
    return echo, spec


def cmd_probe(doc, text, args, out_dir, threads):
    from .probe import ProbeError, run_probe, support_disjointness_check

    started = _now()
    echo, spec = resolve_probe(doc, text, args)
    try:
        res = run_probe(spec, threads=threads)
    except ProbeError as exc:
        # constructions that break down for these parameters are config errors
        raise ConfigError("N_exponents", str(exc))
    footer = res.footer()
    if spec.family != "LLL":
        footer["support_disjoint"] = [
            bool(support_disjointness_check(spec.family, n, spec.eps, spec.params))
            for n in spec.N_list]
    csv_path = Path(out_dir) / "probe.csv"
    json_path = Path(out_dir) / "probe.json"
    atomic_write_text(csv_path, res.to_csv())
    atomic_write_text(json_path, json.dumps(footer, indent=1, sort_keys=True) + "\n")
    status = "ok"
    code = EXIT_OK
    if args.assert_slope is not None and not res.slope_error <= args.assert_slope:
        status, code = "assertion_failed", EXIT_ASSERT
    write_manifest(out_dir, "probe", echo, started, [csv_path, json_path], status,
                   {"assert_slope": args.assert_slope})
    print(f"probe {spec.family}: fitted {res.fitted_slope:.4f} +- {res.fit_stderr:.4f}, "
          f"predicted {res.predicted_slope:.4f}")
    return code


def resolve_map(doc, text, args):
    r = _Reader(doc, text)
    alpha = r.get("alpha")
    if not 1 < alpha <= 2:
        r.fail("alpha", f"alpha must lie in (1, 2], got {alpha!r}")
    beta_range = r.pair("beta_range", [-0.25, (alpha - 1) / 2])
    s_range = r.pair("s_range", [-1.0, 1.5])
    res = r.get("resolution", 200, kind=int)
    if res < 2:
        r.fail("resolution", "resolution must be >= 2")
    delta = r.get("delta", 0.0)
    if delta < 0:
        r.fail("delta", "delta must be nonnegative")
    return {"alpha": alpha, "beta_range": beta_range, "s_range": s_range,
            "resolution": res, "delta": delta}


def cmd_map(doc, text, args, out_dir):
    from .thresholds import branch_junctions, chart_to_csv, region_chart

    started = _now()
    echo = resolve_map(doc, text, args)
    cells = region_chart(echo["alpha"], echo["beta_range"], echo["s_range"],
                         echo["resolution"], echo["delta"])
    path = Path(out_dir) / "region.csv"
    atomic_write_text(path, chart_to_csv(cells))
    write_manifest(out_dir, "map", echo, started, [path], "ok",
                   {"junctions": list(branch_junctions(echo["alpha"]))})
    print(f"map: {len(cells)} cells")
    return EXIT_OK


def resolve_bench(doc, text, args):
    from .bench import CASES

    r = _Reader(doc, text)
    cases = r.get("cases", list(CASES), kind=list)
    for i, tag in enumerate(cases):
        if tag not in CASES:
            r.fail(f"cases[{i}]", f"unknown case_tag {tag!r}; known tags: {sorted(CASES)}")
    alphas = [float(a) for a in r.get("alphas", [1.5, 2.0], kind=list)]
    for i, a in enumerate(alphas):
        if not 1 < a <= 2:
            r.fail(f"alphas[{i}]", f"alpha must lie in (1, 2], got {a!r}")
    lo, hi = r.pair("N_exponents", [6, 11])
    if lo != int(lo) or hi != int(hi) or lo < 5:
        r.fail("N_exponents", "exponents must be integers with the smallest >= 5")
    offsets = [int(m) for m in r.get("L_offsets", [-6, -3, 0], kind=list)]
    seed = args.seed if args.seed is not None else r.get("seed", 0, kind=int)
    resolution = r.get("resolution", 256, kind=int)
    h_cfgs = r.get("h_range", [], kind=list)
    for i, h in enumerate(h_cfgs):
        if not isinstance(h, dict) or "N" not in h or "alpha" not in h:
            r.fail(f"h_range[{i}]", "each entry needs N (three sizes) and alpha")
    return {"cases": cases, "alphas": alphas, "N_exponents": [int(lo), int(hi)],
            "L_offsets": offsets, "seed": seed, "resolution": resolution,
            "h_range": [{"N": list(h["N"]), "alpha": float(h["alpha"]),
                         "samples": int(h.get("samples", 100_000))} for h in h_cfgs]}


def cmd_bench(doc, text, args, out_dir, threads):
    from .bench import (DyadicConfig, InfeasibleConfig, counting_bound_check,
                        h_range_check)

    started = _now()
    echo = resolve_bench(doc, text, args)
    lo, hi = echo["N_exponents"]
    sweep = tuple(2.0**k for k in range(lo, hi + 1))
    reports = []
    try:
        for a in echo["alphas"]:
            for tag in echo["cases"]:
                reports.append(counting_bound_check(tag, a, sweep, tuple(echo["L_offsets"]),
                                                    seed=echo["seed"],
                                                    resolution=echo["resolution"],
                                                    threads=threads))
        h_reports = []
        for i, h in enumerate(echo["h_range"]):
            try:
                cfg = DyadicConfig(tuple(h["N"]), alpha=h["alpha"])
            except ValueError as exc:
                raise ConfigError(f"h_range[{i}]", str(exc), _key_line(text, "h_range"))
            rep = h_range_check(cfg, h["samples"], echo["seed"])
            rep["acceptance"] = asdict(rep["acceptance"])
            h_reports.append(rep)
    except InfeasibleConfig as exc:
        raise ConfigError("N_exponents", str(exc))
    csv_lines = []
    for i, rep in enumerate(reports):
        body = rep.to_csv().splitlines()
        csv_lines.extend(body if i == 0 else body[1:])
    csv_path = Path(out_dir) / "bench.csv"
    json_path = Path(out_dir) / "bench.json"
    atomic_write_text(csv_path, "\n".join(csv_lines) + "\n")
    summary = {"seed": echo["seed"], "cases": [r.summary() for r in reports],
               "h_range": h_reports,
               "worst_ratio": max((r.worst_ratio for r in reports), default=0.0)}
    atomic_write_text(json_path, json.dumps(summary, indent=1, sort_keys=True) + "\n")
    ok = all(r.passed for r in reports) and all(h["passed"] for h in h_reports)
    write_manifest(out_dir, "bench", echo, started, [csv_path, json_path],
                   "ok" if ok else "assertion_failed")
    for rep in reports:
        print(f"bench {rep.case} alpha={rep.alpha:g}: worst ratio {rep.worst_ratio:.3f} "
              f"{'PASS' if rep.passed else 'FAIL'}")
    for h in h_reports:
        print(f"h-range N={h['N']} alpha={h['alpha']:g}: {'PASS' if h['passed'] else 'FAIL'}")
    return EXIT_OK if ok else EXIT_ASSERT


# -- selftest -------------------------------------------------------------------

def _suite_spectral():
    from .spectral import GridSpec, SpectralField, fractional_symbol, l2_norm

    g = GridSpec(64)
    f = SpectralField.from_function(g, lambda x: np.exp(3j * x))
    return [
        ("zero mode convention", fractional_symbol(np.array([0.0]), 0.5)[0] == 0
         and fractional_symbol(np.array([0.0]), 0.0)[0] == 1),
        ("plane wave L2 norm", abs(l2_norm(f) - math.sqrt(2 * math.pi)) < 1e-12),
        ("round trip", np.allclose(SpectralField.from_values(g, f.values).modes, f.modes,
                                   atol=1e-13)),
    ]


def _suite_dynamics():
    from .dynamics import IntegratorConfig, integrate, plane_wave_solution
    from .initial import plane_wave
    from .params import ModelParams
    from .spectral import GridSpec

    g = GridSpec(32)
    checks = []
    for a, b in ((2.0, 0.0), (2.0, 0.5), (1.5, 0.25), (1.5, -0.2)):
        p = ModelParams(a, b)
        cfg = IntegratorConfig(1e-3, 0.1, record_stride=100, keep_snapshots=True)
        rec = integrate(plane_wave(g, 0.5, 4), p, cfg)
        exact = plane_wave_solution(g, p, 0.5, 4, rec.times[-1])
        err = np.max(np.abs(rec.snapshots[-1].values - exact))
        checks.append((f"plane wave alpha={a:g} beta={b:g}", err <= 1e-8))
    return checks


def _suite_thresholds():
    from .thresholds import branch_junctions, branch_value, Branch, critical_index, classify

    j1, j2 = branch_junctions(1.05)
    return [
        ("critical index alpha=2 beta=0", critical_index(2.0, 0.0) == -0.5),
        ("junction B1/B2", abs(branch_value(Branch.B1_FOUR_THIRDS, 1.05, j1)
                               - branch_value(Branch.B2_LINEAR, 1.05, j1)) < 1e-12),
        ("junction B2/B3", abs(branch_value(Branch.B2_LINEAR, 1.05, j2)
                               - branch_value(Branch.B3_TWO_BETA, 1.05, j2)) < 1e-12),
        ("alpha=2 boundary", classify(2.0, 0.25, 0.5).classification.value == "WellPosed"
         and classify(2.0, 0.25, 0.49).classification.value == "IllPosedC3"),
    ]


def _suite_probe():
    from .probe import oscillatory_factor, resonance, resonance_lower_bound_check

    rng = np.random.default_rng(0)
    x = rng.uniform(-10, 10, size=(3, 10_000))
    res = resonance(x[0], x[1], x[2], 2.0)
    ident = 2 * (x[0] - x[1]) * (x[2] - x[1])
    return [
        ("alpha=2 resonance identity",
         np.max(np.abs(res - ident) / np.maximum(1.0, np.abs(ident))) <= 1e-12),
        ("oscillatory factor at 0", oscillatory_factor(0.0, 0.1) == 0.1j),
        ("alpha=2 four-wave ratio", resonance_lower_bound_check(2000, 2.0, 0)["passed"]),
    ]


def _suite_bench():
    from .bench import DyadicConfig, h_range_check

    rep = h_range_check(DyadicConfig((8, 8, 1), alpha=2.0), samples=5000, seed=0)
    return [("h range alpha=2 (8,8,1)", rep["passed"])]


SELFTEST_SUITES = {
    "spectral": _suite_spectral,
    "dynamics": _suite_dynamics,
    "thresholds": _suite_thresholds,
    "probe": _suite_probe,
    "bench": _suite_bench,
}


def cmd_selftest():
    all_ok = True
    for name, suite in SELFTEST_SUITES.items():
        t0 = time.perf_counter()
        try:
            checks = suite()
        except Exception as exc:  # a crash counts as a failed suite
            checks = [(f"raised {type(exc).__name__}: {exc}", False)]
        passed = sum(bool(ok) for _, ok in checks)
        print(f"{name}: {passed}/{len(checks)} passed ({time.perf_counter() - t0:.2f}s)")
        for label, ok in checks:
            if not ok:
                print(f"  FAILED {label}")
        all_ok &= passed == len(checks)
    return EXIT_OK if all_ok else EXIT_ASSERT


# -- entry point -------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="mmt", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--out-dir", help="output directory (default ./runs/<timestamp>)")
    ap.add_argument("--assert-slope", type=float, default=None,
                    help="probe: exit 3 when |fitted - predicted| exceeds this")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (fallback: $MMT_THREADS, then 1)")
    return ap


def _threads(args):
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("MMT_THREADS", "1")
        try:
            n = int(env)
        except ValueError:
            raise ConfigError("MMT_THREADS", f"expected an integer, got {env!r}")
    if n < 1:
        raise ConfigError("--threads", f"must be >= 1, got {n}")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return cmd_selftest()
        if args.config is None:
            raise ConfigError("--config", f"{args.command} needs a configuration file")
        doc, text = load_config(args.config)
        threads = _threads(args)
        out_dir = Path(args.out_dir or Path("runs") / datetime.now().strftime("%Y%m%d-%H%M%S"))
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(doc, text, args, out_dir)
        if args.command == "probe":
            return cmd_probe(doc, text, args, out_dir, threads)
        if args.command == "map":
            return cmd_map(doc, text, args, out_dir)
        return cmd_bench(doc, text, args, out_dir, threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
