"""Acceptance checks, one per criterion.

Run under pytest (a PASS/FAIL summary line per criterion is printed at the end
of the session) or directly with `python tests/test_acceptance.py`.
"""

from __future__ import annotations

import math
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.ndimage import binary_dilation

from blinktweezer import config
from blinktweezer.analytic import (
    K_B,
    RB87_MASS,
    AnalyticTrap,
    AtomSpec,
    effective_scaling,
    max_atoms,
    omega_from_trap,
    release_recapture_survival,
    worst_survival,
)
from blinktweezer.dynamics import (
    BlinkTiming,
    GaussianBeam,
    SimConfig,
    TrapModel,
    simulate_survival,
    sweep_heatmap,
)
from blinktweezer.phasespace import rotation_map, shear_map, shear_norm, spectral_norm
from blinktweezer.rearrange import builtin_scenarios, compile_scenario, validate_schedule
from blinktweezer.resonance import in_any_band, is_periodic, resonant_ton_np1, resonant_ton_np2

TWO_PI = 2 * math.pi
US = 1e-6
RESULTS: dict[int, tuple[bool, str]] = {}
TITLES = {
    1: "resonance values",
    2: "matrix oracles",
    3: "band/heatmap agreement",
    4: "calibration number",
    5: "scaling",
    6: "trap-frequency reconciliation",
    7: "experimental survival reproduction",
    8: "rearrangement arithmetic",
    9: "determinism",
}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (bool(ok), detail)
    print(format_line(n), flush=True)


def format_line(n: int) -> str:
    ok, detail = RESULTS[n]
    return f"[{'PASS' if ok else 'FAIL'}] criterion {n} ({TITLES[n]}): {detail}"


# 1


def check_1():
    a = resonant_ton_np1(TWO_PI * 64e3, 10 * US) / US
    b = resonant_ton_np1(TWO_PI * 79e3, 5 * US) / US
    # agree with the quoted 1.148 / 1.366 to their last digit, and with 1.1 / 1.4 within 0.05
    ok = abs(a - 1.148) < 1e-3 and abs(b - 1.366) < 1e-3 and abs(a - 1.1) <= 0.05 and abs(b - 1.4) <= 0.05
    record(1, ok, f"t_on = {a:.4f} us (64 kHz, 10 us), {b:.4f} us (79 kHz, 5 us)")
    return ok


# 2


def check_2():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    n = 10_000
    thetas = rng.uniform(-4 * math.pi, 4 * math.pi, n)
    shears = rng.uniform(0, 20, n)
    det_err = norm_err = rot_err = 0.0
    for th, s in zip(thetas, shears):
        r, t = rotation_map(th), shear_map(s)
        rt = r @ t
        det_err = max(det_err, abs(r.det - 1), abs(t.det - 1), abs(rt.det - 1))
        svd_t = np.linalg.svd(t.as_array(), compute_uv=False)[0]
        svd_rt = np.linalg.svd(rt.as_array(), compute_uv=False)[0]
        norm_err = max(
            norm_err,
            abs(shear_norm(s) - svd_t) / svd_t,
            abs(spectral_norm(t) - svd_t) / svd_t,
            abs(spectral_norm(rt) - svd_rt) / svd_rt,
        )
        # n_p = 1 solution for this shear, as a dimensionless angle
        rot_err = max(rot_err, is_periodic(1.0, resonant_ton_np1(1.0, s), s, 1)[1])
    s2 = rng.uniform(0.1, 10, 100)
    s2 = np.where(np.abs(s2 - 1) < 1e-6, 1.5, s2)
    np2_err = max(is_periodic(1.0, t, s, 2)[1] for s in s2 for t in resonant_ton_np2(1.0, s))
    elapsed = time.perf_counter() - start
    ok = det_err < 1e-10 and norm_err < 1e-9 and rot_err < 1e-9 and np2_err < 1e-9 and elapsed < 1.0
    record(
        2,
        ok,
        f"max |det-1| {det_err:.1e}, norm rel err {norm_err:.1e}, n_p=1 residual {rot_err:.1e}, "
        f"n_p=2 residual {np2_err:.1e}, {elapsed:.2f} s",
    )
    return ok


# 3


def check_3():
    start = time.perf_counter()
    cfg = config.load("fig2a_harmonic")
    base = config.build_sim(cfg)
    t_on, t_off = config.build_grid(cfg)
    omega = base.trap.variant.omega
    workers = os.cpu_count() or 1
    hm = sweep_heatmap(base, t_on, t_off, workers=workers)
    inside = np.array([[in_any_band(omega, a, b) for b in t_off] for a in t_on])
    # cells whose whole 3x3 neighbourhood lies outside every band
    far = ~binary_dilation(inside, structure=np.ones((3, 3), bool))
    far_max = float(hm.p[far].max())

    c = omega * base.trap.variant.d / base.atom.sigma
    dev = []
    for j, b in enumerate(t_off):
        res_t = resonant_ton_np1(omega, b)
        if res_t > t_on[-1]:
            continue
        cell = replace(base, timing=replace(base.timing, t_on=res_t, t_off=b), seed=base.seed + 1000 + j)
        p = simulate_survival(cell).p
        dev.append(abs(p - release_recapture_survival(omega * b, c, base.n_axes)))
    line_dev = max(dev)
    elapsed = time.perf_counter() - start
    ok = far_max < 0.05 and line_dev <= 0.05
    record(
        3,
        ok,
        f"max P over {int(far.sum())} cells > 1 cell outside band = {far_max:.3f}; "
        f"max |P - RR| on resonance line ({len(dev)} points) = {line_dev:.4f}; {elapsed:.0f} s on {workers} worker(s)",
    )
    return ok


# 4


def check_4():
    omega = TWO_PI * 64e3
    trap = AnalyticTrap(omega, 0.90 * US, alpha=0.5)
    atom = AtomSpec(RB87_MASS, 13 * US)
    p_gauss = worst_survival(trap, atom, 10 * US, convention="gauss")
    p_erf = worst_survival(trap, atom, 10 * US, convention="erf")
    rng = np.random.default_rng(4)
    n = 2_000_000
    z = rng.normal(0.0, atom.sigma, (2, n))
    q, v = shear_map(omega * 10 * US).as_array() @ z  # n_b = 1 for n_p = 1
    r = trap.alpha * omega * trap.cutoff_d
    oracle = float(np.mean(q * q + v * v < r * r))
    matches_gauss = abs(oracle - p_gauss) < abs(oracle - p_erf) and abs(oracle - p_gauss) < 0.005
    default = worst_survival(trap, atom, 10 * US)
    ok = matches_gauss and default == p_gauss and abs(default - 0.77) <= 0.01
    record(
        4,
        ok,
        f"worst_survival = {default:.4f}; oracle {oracle:.4f} vs gauss {p_gauss:.4f} / erf {p_erf:.4f}",
    )
    return ok


# 5


def check_5():
    a = max_atoms(1.1 * US, 10 * US)
    b = max_atoms(1.5 * US, 5 * US)
    trap = AnalyticTrap(TWO_PI * 64e3, 0.90 * US, alpha=0.5)
    atom = AtomSpec(RB87_MASS, 13 * US)
    rep = effective_scaling(trap, atom, 1.1 * US, 10 * US, lifetime_loss=0.03, m_override=9)
    ok = a == 10 and b == 4 and rep.M_eff_star == 6
    record(5, ok, f"max_atoms = {a}, {b}; M_eff = {rep.M_eff:.3f} -> M*_eff = {rep.M_eff_star}")
    return ok


# 6


def check_6():
    w1 = omega_from_trap(K_B * 1.0e-3, 0.90 * US, RB87_MASS) / TWO_PI / 1e3
    w2 = omega_from_trap(K_B * 0.72e-3, 0.90 * US, RB87_MASS) / TWO_PI / 1e3
    ok = 72 <= w1 <= 86 and 59 <= w2 <= 69
    record(6, ok, f"{w1:.2f} kHz at 1.0 mK, {w2:.2f} kHz at 0.72 mK")
    return ok


# 7


def _gauss_trap(omega_khz, depth_mk, rise):
    omega = TWO_PI * omega_khz * 1e3
    return TrapModel(GaussianBeam.from_frequency(omega, K_B * depth_mk * 1e-3, RB87_MASS), rise_time=rise)


def check_7():
    on = SimConfig(
        _gauss_trap(79, 1.0, 1 * US),
        AtomSpec(RB87_MASS, 15 * US),
        BlinkTiming(1.5 * US, 5 * US, 100),
        n_samples=4000,
        seed=7,
        lifetime_loss=0.03,
    )
    off = SimConfig(
        _gauss_trap(64, 0.72, 1 * US),
        AtomSpec(RB87_MASS, 13 * US),
        BlinkTiming(6 * US, 10 * US, 100),
        n_samples=4000,
        seed=7,
        lifetime_loss=0.03,
    )
    p_on = simulate_survival(on)
    p_off = simulate_survival(off)
    ok = 0.90 <= p_on.p <= 1.0 and p_off.p < 0.10
    record(
        7,
        ok,
        f"resonant P = {p_on.p:.3f} +- {p_on.stderr:.3f}; off-resonant P = {p_off.p:.3f} +- {p_off.stderr:.3f}",
    )
    return ok


# 8


def check_8():
    timing = BlinkTiming(1.1 * US, 10 * US, 1, n_slots=9)
    scen = {s.name: s for s in builtin_scenarios(20 * US)}
    sched = {name: compile_scenario(s, timing, 0.13) for name, s in scen.items()}
    rot = sched["rotation"].step_lengths[0] / US
    diag = sched["vacancy"].step_lengths[5] / timing.t_on
    lat = sched["fall"].step_lengths[3] / timing.t_on
    n_viol = {name: len(validate_schedule(s, timing, 0.13, 7.5 * US, 1 * US)) for name, s in sched.items()}
    ok = (
        abs(rot / 0.099 - 1) <= 0.01
        and abs(diag / 0.129 - 1) <= 0.01
        and abs(lat / 0.0909 - 1) <= 0.01
        and not any(n_viol.values())
    )
    record(
        8,
        ok,
        f"rotation step {rot:.4f} um, diagonal {diag:.4f} m/s, lateral {lat:.4f} m/s, violations {n_viol}",
    )
    return ok


# 9


def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "blinktweezer", *args], cwd=cwd, capture_output=True, text=True)


def check_9():
    cfg_doc = (
        '{"trap": {"model": "gaussian", "omega_khz": 79.0, "depth_mk": 1.0, "rise_us": 1.0},'
        ' "atom": {"temperature_uk": 15.0}, "timing": {"n_blink": 20},'
        ' "grid": {"t_on_us": {"min": 0, "max": 10, "num": 4}, "t_off_us": {"min": 0, "max": 15, "num": 3}},'
        ' "n_samples": 5000, "seed": 99, "lifetime_loss": 0.03}'
    )
    runs = {
        "mc": (["mc", "cfg.json"], "heatmap.csv"),
        "rearrange": (["rearrange", "--scenario", "vacancy", "--simulate", "--samples", "5000", "--seed", "3"], "survival.csv"),
        "scale": (["scale"], "scale.csv"),
    }
    same = {}
    with tempfile.TemporaryDirectory() as tmp:
        Path(tmp, "cfg.json").write_text(cfg_doc)
        for name, (args, fname) in runs.items():
            outs = []
            for tag, threads in (("a", "1"), ("b", "1"), ("c", "2")):
                extra = ["--out", f"{name}_{tag}"]
                if name != "scale":
                    extra += ["--threads", threads]
                proc = _cli(*args, *extra, cwd=tmp)
                if proc.returncode != 0:
                    outs.append(None)
                    continue
                outs.append(Path(tmp, f"{name}_{tag}", fname).read_bytes())
            same[name] = outs[0] is not None and outs.count(outs[0]) == 3
    ok = all(same.values())
    record(9, ok, "byte-identical across repeats and 1 vs 2 workers: " + ", ".join(f"{k}={v}" for k, v in same.items()))
    return ok


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9]


@pytest.mark.parametrize("check", CHECKS, ids=[f"criterion_{i}" for i in range(1, 10)])
def test_criterion(check):
    assert check()


def main() -> int:
    failed = 0
    for check in CHECKS:
        try:
            failed += not check()
        except Exception as exc:  # report and continue
            n = CHECKS.index(check) + 1
            record(n, False, f"error: {exc!r}")
            failed += 1
    print(f"{len(CHECKS) - failed}/{len(CHECKS)} criteria passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
