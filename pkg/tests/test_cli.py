import csv
import hashlib
import json
import math
import subprocess
import sys

import pytest

from blinktweezer import cli, config
from blinktweezer.dynamics import GaussianBeam, HarmonicCutoff


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def small_config(tmp_path, **over):
    doc = {
        "trap": {"model": "harmonic", "omega_khz": 79.0, "cutoff_um": 0.9},
        "atom": {"temperature_uk": 15.0},
        "timing": {"t_on_us": 1.4, "t_off_us": 5.0, "n_blink": 10},
        "grid": {"t_on_us": {"min": 0.5, "max": 3.5, "num": 3}, "t_off_us": {"values": [2.0, 5.0]}},
        "n_samples": 300,
        "seed": 5,
    }
    doc.update(over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return p


def test_resonance_command(capsys):
    code, out, _ = run(capsys, "resonance", "--omega-khz", "64", "--toff-us", "10")
    assert code == 0
    fields = dict(line.split("=", 1) for line in out.strip().splitlines())
    assert float(fields["t_on_us"]) == pytest.approx(1.148, abs=1e-3)
    lo, hi = (float(x) for x in fields["band_us"].strip("()").split(","))
    assert lo == 0.0 and hi == pytest.approx(2.2955, abs=1e-3)


def test_resonance_quarter_period_and_np2(capsys):
    code, out, _ = run(capsys, "resonance", "--omega-khz", "64", "--toff-us", "0")
    assert code == 0
    t_on = float(out.split("t_on_us=")[1])
    assert t_on == pytest.approx(1e6 / (4 * 64e3), rel=1e-6)
    code, out, _ = run(capsys, "resonance", "--s", "2", "--np", "2", "--omega-khz", "64")
    assert code == 0 and len(out.split("t_on_us=")[1].split(",")) == 2
    code, out, _ = run(capsys, "resonance", "--np", "3")
    assert code == 0


def test_resonance_errors(capsys):
    code, _, err = run(capsys, "resonance", "--np", "2", "--s", "1")
    assert code == 2 and "error" in err
    code, _, _ = run(capsys, "resonance", "--k", "-1")
    assert code == 2


def test_survive_and_scale(capsys):
    code, out, _ = run(capsys, "survive", "--m", "9")
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0 and rows[0]["M"] == "9" and rows[0]["M_eff_star"] == "6"
    code, out, _ = run(capsys, "survive")
    assert list(csv.DictReader(out.splitlines()))[0]["M"] == "9"

    code, out, _ = run(capsys, "scale", "--toff-max", "0")
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0 and len(rows) == 1 and rows[0]["M"] == "1"

    code, out, _ = run(capsys, "scale", "--alpha", "1", "--trise", "0", "--lifetime-loss", "0", "--toff-max", "15", "--points", "16")
    rows = list(csv.DictReader(out.splitlines()))
    omega = 2 * math.pi * 64e3
    sigma = math.sqrt(1.380649e-23 * 13e-6 / 1.44316e-25)
    for r in rows:
        s = omega * float(r["t_off_us"]) * 1e-6
        norm = math.sqrt(((2 + s * s) + math.sqrt((2 + s * s) ** 2 - 4)) / 2)
        expected = math.erf(omega * 0.9e-6 / (sigma * norm) / math.sqrt(2))
        assert float(r["P_worst"]) == pytest.approx(expected, rel=1e-8)
        assert r["accessible"] == "1"


def test_scale_defaults_peak_at_rise_boundary(capsys):
    code, out, _ = run(capsys, "scale")
    rows = list(csv.DictReader(out.splitlines()))
    acc = [r for r in rows if r["accessible"] == "1"]
    best = max(int(r["M_eff_star"]) for r in acc)
    at_best = [float(r["t_off_us"]) for r in acc if int(r["M_eff_star"]) == best]
    # M*_eff steps upward with t_off; the rise time caps it at 8 near 11.5 us
    assert best == 8
    assert max(at_best) == pytest.approx(max(float(r["t_off_us"]) for r in acc))
    assert 11.0 <= min(at_best) and max(at_best) <= 12.0


def test_scale_out_dir(tmp_path, capsys):
    code, _, _ = run(capsys, "scale", "--points", "5", "--out", str(tmp_path / "s"))
    assert code == 0
    man = json.loads((tmp_path / "s" / "manifest.json").read_text())
    data = (tmp_path / "s" / "scale.csv").read_bytes()
    assert man["outputs"]["scale.csv"]["sha256"] == hashlib.sha256(data).hexdigest()


def test_mc_outputs_and_determinism(tmp_path, capsys):
    cfg = small_config(tmp_path)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run(capsys, "mc", str(cfg), "--out", str(a))[0] == 0
    assert run(capsys, "mc", str(cfg), "--out", str(b))[0] == 0
    assert run(capsys, "mc", str(cfg), "--out", str(c), "--threads", "2")[0] == 0
    data = (a / "heatmap.csv").read_bytes()
    assert data == (b / "heatmap.csv").read_bytes() == (c / "heatmap.csv").read_bytes()
    assert b"\r" not in data
    rows = list(csv.DictReader(data.decode().splitlines()))
    assert len(rows) == 6
    assert list(rows[0]) == ["t_on_us", "t_off_us", "P", "stderr"]
    assert [float(r["t_on_us"]) for r in rows[::2]] == [1.0, 2.0, 3.0]
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 5
    assert man["config"]["trap"]["ramp_shape"] == "linear"
    assert man["outputs"]["heatmap.csv"]["sha256"] == hashlib.sha256(data).hexdigest()
    d = tmp_path / "d"
    run(capsys, "mc", str(cfg), "--out", str(d), "--seed", "6")
    assert (d / "heatmap.csv").read_bytes() != data


def test_mc_single_cell(tmp_path, capsys):
    cfg = small_config(tmp_path, grid=None)
    assert run(capsys, "mc", str(cfg), "--out", str(tmp_path / "o"))[0] == 0
    lines = (tmp_path / "o" / "heatmap.csv").read_text().splitlines()
    assert len(lines) == 2


def test_mc_invalid_config(tmp_path, capsys):
    bad = small_config(tmp_path, bogus=1)
    code, _, err = run(capsys, "mc", str(bad))
    assert code == 2 and "bogus" in err
    bad = small_config(tmp_path, timing={"t_on_us": -1.0})
    code, _, err = run(capsys, "mc", str(bad))
    assert code == 2 and "t_on_us" in err
    code, _, _ = run(capsys, "mc", str(tmp_path / "missing.json"))
    assert code == 2


def test_bundled_configs():
    cfg = config.load("fig2a")
    sim = config.build_sim(cfg)
    assert isinstance(sim.trap.variant, GaussianBeam)
    assert sim.trap.rise_time == pytest.approx(1e-6)
    assert sim.timing.n_blink == 100 and sim.lifetime_loss == 0.03
    t_on, t_off = config.build_grid(cfg)
    assert len(t_on) == 50 and len(t_off) == 50
    assert 0 < t_on.min() and t_on.max() < 10e-6 and t_off.max() < 15e-6
    h = config.build_sim(config.load("fig2a_harmonic"))
    assert isinstance(h.trap.variant, HarmonicCutoff)
    assert h.trap.variant.d == pytest.approx(0.9e-6)


def test_config_errors():
    with pytest.raises(config.ConfigError):
        config.resolve({"trap": {"nope": 1}})
    with pytest.raises(config.ConfigError):
        config.build_sim(config.resolve({"trap": {"model": "square"}}))
    with pytest.raises(config.ConfigError):
        config.build_sim(config.resolve({"n_samples": 1.5}))
    with pytest.raises(config.ConfigError):
        config.grid_values({"min": 2, "max": 1, "num": 3}, "g")


def test_rearrange_command(tmp_path, capsys):
    out = tmp_path / "w"
    code, stdout, _ = run(capsys, "rearrange", "--scenario", "worm", "--out", str(out))
    assert code == 0 and "0 violations" in stdout
    sched = json.loads((out / "schedule.json").read_text())
    assert sched["n_slots"] == 9
    rf = (out / "rf.csv").read_text().splitlines()
    assert rf[0] == "axis,start_time_us,frequency_MHz,amplitude"
    assert not (out / "violations.csv").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["outputs"]) == {"schedule.json", "rf.csv"}


def test_rearrange_violations_and_capacity(tmp_path, capsys):
    code, _, err = run(capsys, "rearrange", "--scenario", "fall", "--vmax", "0.05", "--out", str(tmp_path / "v"))
    assert code == 2 and "drag speed" in err
    scen = {
        "name": "crowd",
        "sites": [[i * 20.0, 0.0] for i in range(12)],
        "occupancy": [True] * 12,
        "moves": [],
    }
    f = tmp_path / "crowd.json"
    f.write_text(json.dumps(scen))
    code, _, err = run(capsys, "rearrange", "--scenario-file", str(f), "--out", str(tmp_path / "c"))
    assert code == 2 and "capacity" in err
    scen = {"name": "close", "sites": [[0, 0], [5, 0]], "occupancy": [True, True]}
    f.write_text(json.dumps(scen))
    code, _, _ = run(capsys, "rearrange", "--scenario-file", str(f), "--out", str(tmp_path / "p"))
    assert code == 2
    assert "proximity" in (tmp_path / "p" / "violations.csv").read_text()


def test_rearrange_simulate(tmp_path, capsys):
    args = ["rearrange", "--scenario", "vacancy", "--simulate", "--trap", "harmonic", "--samples", "300"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, *args, "--out", str(a))[0] == 0
    assert run(capsys, *args, "--out", str(b), "--threads", "2")[0] == 0
    data = (a / "survival.csv").read_bytes()
    assert data == (b / "survival.csv").read_bytes()
    rows = list(csv.DictReader(data.decode().splitlines()))
    assert [r["atom"] for r in rows] == ["0", "4", "5", "7", "mean"]
    assert float(rows[-1]["P"]) > 0.8


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "blinktweezer", "resonance"], capture_output=True, text=True)
    assert out.returncode == 0 and "t_on_us=1.14774" in out.stdout
    bad = subprocess.run([sys.executable, "-m", "blinktweezer", "resonance", "--np", "2", "--s", "1"], capture_output=True, text=True)
    assert bad.returncode == 2
