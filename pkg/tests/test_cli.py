import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

import mmtlab.dynamics as dyn
from mmtlab.cli import main


def _write(path, doc):
    path.write_text(json.dumps(doc, indent=1))
    return str(path)


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


PLANE = {
    "params": {"alpha": 2.0, "beta": 0.5, "s": 0.0},
    "grid": {"num_modes": 32},
    "integrator": {"dt": 0.001, "t_end": 0.2, "record_stride": 50},
    "initial": {"kind": "plane_wave", "A": 0.5, "k": 4},
}


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    suites = [ln.split(":")[0] for ln in lines]
    assert suites == ["spectral", "dynamics", "thresholds", "probe", "bench"]
    assert all("passed" in ln for ln in lines)


def test_selftest_catches_flipped_dispersion(monkeypatch, capsys):
    monkeypatch.setattr(dyn, "dispersion_symbol", lambda xi, a: -np.abs(xi) ** a)
    assert main(["selftest"]) == 3
    assert "dynamics: 0/4 passed" in capsys.readouterr().out


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "mmtlab.cli", "selftest"],
                         capture_output=True, text=True, timeout=120)
    assert out.returncode == 0, out.stderr


def test_simulate_plane_wave(tmp_path):
    cfg = _write(tmp_path / "c.json", PLANE)
    out = tmp_path / "run"
    assert main(["simulate", "--config", cfg, "--out-dir", str(out)]) == 0
    man = _manifest(out)
    assert man["command"] == "simulate" and man["status"] == "ok"
    assert man["config_echo"]["integrator"]["scheme"] == "ETD-RK4"
    for entry in man["outputs"]:
        digest = hashlib.sha256((out / entry["path"]).read_bytes()).hexdigest()
        assert digest == entry["sha256"]
    traj = json.loads((out / "trajectory.json").read_text())
    m = np.array(traj["mass"])
    assert np.max(np.abs(m - m[0])) / m[0] < 1e-10


def test_simulate_rerun_from_echo_reproduces_digests(tmp_path):
    doc = dict(PLANE, initial={"kind": "random_bandlimited", "band": 4, "seed": 3, "A": 0.3})
    doc["integrator"] = dict(PLANE["integrator"], keep_snapshots=True)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", _write(tmp_path / "c.json", doc), "--out-dir", str(a)]) == 0
    echo = _write(tmp_path / "echo.json", _manifest(a)["config_echo"])
    assert main(["simulate", "--config", echo, "--out-dir", str(b)]) == 0
    assert _manifest(a)["outputs"] == _manifest(b)["outputs"]
    assert len(_manifest(a)["outputs"]) == 2


def test_seed_flag_overrides_config(tmp_path):
    doc = dict(PLANE, initial={"kind": "random_bandlimited", "band": 4, "seed": 3, "A": 0.3})
    cfg = _write(tmp_path / "c.json", doc)
    assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path / "r"), "--seed", "11"]) == 0
    assert _manifest(tmp_path / "r")["config_echo"]["initial"]["seed"] == 11


@pytest.mark.parametrize("patch,field", [
    ({"params": {"alpha": 0.9, "beta": 0.0}}, "params.alpha"),
    ({"grid": {"num_modes": 48}}, "grid.num_modes"),
    ({"integrator": {"dt": -1.0, "t_end": 1.0}}, "integrator.dt"),
    ({"integrator": {"dt": 0.1, "t_end": 1.0, "dealias_pad_factor": 3}},
     "integrator.dealias_pad_factor"),
    ({"initial": {"kind": "soliton"}}, "initial.kind"),
    ({"initial": {"kind": "plane_wave", "A": 1.0}}, "initial.k"),
])
def test_simulate_config_errors_name_field(tmp_path, capsys, patch, field):
    doc = dict(PLANE)
    doc.update(patch)
    cfg = _write(tmp_path / "c.json", doc)
    assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path / "r")]) == 1
    err = capsys.readouterr().err
    assert f"'{field}'" in err and "line" in err


def test_malformed_json_reports_line(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{\n "alpha": 2.0,\n "beta_range": [0, \n}')
    assert main(["map", "--config", str(p), "--out-dir", str(tmp_path / "r")]) == 1
    assert "line 4" in capsys.readouterr().err


def test_simulate_blowup_exit2(tmp_path):
    doc = {"params": {"alpha": 1.5, "beta": 0.2}, "grid": {"num_modes": 1024},
           "integrator": {"dt": 0.001, "t_end": 0.5, "record_stride": 10},
           "initial": {"kind": "random_bandlimited", "band": 8, "seed": 0, "A": 1.0}}
    out = tmp_path / "r"
    assert main(["simulate", "--config", _write(tmp_path / "c.json", doc),
                 "--out-dir", str(out)]) == 2
    man = _manifest(out)
    assert man["status"] == "rejected" and 0 < man["failure_time"] < 0.5
    assert (out / "trajectory.json").exists()


PROBE = {"family": "HHH", "params": {"alpha": 2.0, "beta": 0.5, "s": 0.0},
         "t": 0.1, "eps": 0.01, "N_exponents": [8, 13], "Q": 128, "M": 64}


def test_probe_default_hhh_with_assert(tmp_path):
    out = tmp_path / "r"
    cfg = _write(tmp_path / "c.json", PROBE)
    assert main(["probe", "--config", cfg, "--out-dir", str(out), "--assert-slope", "0.15",
                 "--threads", "4"]) == 0
    rows = list(csv.reader((out / "probe.csv").open()))
    assert rows[0] == ["N", "hs_norm", "min_abs_omega", "max_abs_omega"] and len(rows) == 7
    footer = json.loads((out / "probe.json").read_text())
    assert abs(footer["fitted_slope"] - footer["predicted_slope"]) <= 0.15
    assert all(footer["support_disjoint"])


def test_probe_assert_failure_exit3(tmp_path):
    doc = dict(PROBE, N_exponents=[8, 10], Q=64, M=32)
    cfg = _write(tmp_path / "c.json", doc)
    assert main(["probe", "--config", cfg, "--out-dir", str(tmp_path / "r"),
                 "--assert-slope", "1e-6"]) == 3


@pytest.mark.parametrize("patch,field", [
    ({"N_exponents": [4, 8]}, "N_exponents"),
    ({"family": "HLH"}, "family"),
    ({"Q": 8}, "Q"),
])
def test_probe_config_errors(tmp_path, capsys, patch, field):
    cfg = _write(tmp_path / "c.json", dict(PROBE, **patch))
    assert main(["probe", "--config", cfg, "--out-dir", str(tmp_path / "r")]) == 1
    assert f"'{field}'" in capsys.readouterr().err


def test_map_alpha2(tmp_path):
    cfg = _write(tmp_path / "c.json", {"alpha": 2.0, "resolution": 41})
    out = tmp_path / "r"
    assert main(["map", "--config", cfg, "--out-dir", str(out)]) == 0
    rows = list(csv.DictReader((out / "region.csv").open()))
    assert len(rows) == 41 * 41
    for r in rows:
        b, s = float(r["beta"]), float(r["s"])
        if -0.25 < b < 0.5:
            assert (r["classification"] == "WellPosed") == (s >= 2 * b)
    assert (out / "region.csv").read_bytes().count(b"\r") == 0


def test_map_resolution_two_and_errors(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"alpha": 1.5, "resolution": 2})
    assert main(["map", "--config", cfg, "--out-dir", str(tmp_path / "r")]) == 0
    assert len((tmp_path / "r" / "region.csv").read_text().splitlines()) == 5
    bad = _write(tmp_path / "b.json", {"alpha": 1.5, "s_range": [1.0, -1.0]})
    assert main(["map", "--config", bad, "--out-dir", str(tmp_path / "x")]) == 1
    assert "'s_range'" in capsys.readouterr().err


def test_bench_unknown_tag(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"cases": ["case-99"]})
    assert main(["bench", "--config", cfg, "--out-dir", str(tmp_path / "r")]) == 1
    assert "case-99" in capsys.readouterr().err


def test_bench_small_sweep_and_seed_change(tmp_path):
    doc = {"cases": ["bil-L2max-N12"], "alphas": [2.0], "N_exponents": [6, 8],
           "L_offsets": [-3, 0], "h_range": [{"N": [64, 64, 2], "alpha": 1.5, "samples": 20000}]}
    cfg = _write(tmp_path / "c.json", doc)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["bench", "--config", cfg, "--out-dir", str(a), "--seed", "1"]) == 0
    assert main(["bench", "--config", cfg, "--out-dir", str(b), "--seed", "2"]) == 0
    ja, jb = (json.loads((d / "bench.json").read_text()) for d in (a, b))
    assert ja["worst_ratio"] == jb["worst_ratio"] <= 1
    ha, hb = ja["h_range"][0]["acceptance"], jb["h_range"][0]["acceptance"]
    assert abs(ha["value"] - hb["value"]) <= 4 * (ha["stderr"] + hb["stderr"])
    assert (a / "bench.csv").read_text().startswith("case,alpha,N1,N2,N3,N4,L1,L2,L3,")


def test_threads_env_fallback(tmp_path, monkeypatch, capsys):
    cfg = _write(tmp_path / "c.json", {"alpha": 2.0, "resolution": 2})
    monkeypatch.setenv("MMT_THREADS", "many")
    assert main(["map", "--config", cfg, "--out-dir", str(tmp_path / "r")]) == 1
    assert "MMT_THREADS" in capsys.readouterr().err
    monkeypatch.setenv("MMT_THREADS", "2")
    assert main(["map", "--config", cfg, "--out-dir", str(tmp_path / "r")]) == 0


def test_default_out_dir(tmp_path, monkeypatch):
    cfg = _write(tmp_path / "c.json", {"alpha": 2.0, "resolution": 2})
    monkeypatch.chdir(tmp_path)
    assert main(["map", "--config", cfg]) == 0
    runs = list((tmp_path / "runs").iterdir())
    assert len(runs) == 1 and (runs[0] / "manifest.json").exists()


def test_missing_config(capsys):
    assert main(["map"]) == 1
    assert "--config" in capsys.readouterr().err
