"""Blinking-tweezer toolkit: resonance timing, survival estimates, Monte Carlo sweeps and rearrangement schedules.

Exit codes: 0 success, 2 invalid input or constraint violation, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .analytic import (
    K_B,
    RB87_MASS,
    AnalyticTrap,
    AtomSpec,
    effective_scaling,
    max_atoms,
    resonant_ton_np1,
    scaling_curve,
)
from .dynamics import BlinkTiming, sweep_heatmap
from .rearrange import (
    AodCalibration,
    Scenario,
    ScheduleError,
    atom_sim_config,
    builtin_scenario,
    compile_scenario,
    schedule_to_rf,
    validate_schedule,
)
from .dynamics import simulate_survival
from .resonance import (
    ResonanceQuery,
    admissible_band,
    find_resonances,
    resonant_ton_np2,
)

US = 1e-6


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([c if isinstance(c, str) else _fmt(c) for c in r])
    return buf.getvalue()


def _write(out: Path, name: str, text: str, digests: dict) -> None:
    data = text.encode("utf-8")
    (out / name).write_bytes(data)
    digests[name] = hashlib.sha256(data).hexdigest()


def write_manifest(out: Path, command: str, resolved: dict, seed, started: float, digests: dict) -> None:
    doc = {
        "tool": "blinktweezer",
        "version": __version__,
        "command": command,
        "argv": sys.argv[1:],
        "config": resolved,
        "seed": seed,
        "wall_clock_s": round(time.perf_counter() - started, 3),
        "outputs": {k: {"sha256": v} for k, v in sorted(digests.items())},
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _omega(args) -> float:
    return 2 * math.pi * 1e3 * args.omega_khz


def cmd_resonance(args) -> int:
    omega = _omega(args)
    if args.s is not None:
        t_off = args.s / omega
    else:
        t_off = args.toff_us * US
    query = ResonanceQuery(omega, t_off, args.k, args.np)
    band = admissible_band(query)
    s = omega * t_off
    lines = [f"omega_rad_s={omega:.10g}", f"t_off_us={t_off / US:.10g}", f"s={s:.10g}", f"k={args.k}", f"n_p={args.np}"]
    if band is None:
        lines.append("band_us=empty")
    else:
        lines.append(f"band_us=({band.t_on_min / US:.6g}, {band.t_on_max / US:.6g})")
    if args.np == 1:
        sols = [resonant_ton_np1(omega, t_off, args.k)]
    elif args.np == 2:
        sols = [t + args.k * math.pi / omega for t in resonant_ton_np2(omega, t_off)]
    else:
        sols = find_resonances(omega, t_off, args.np, args.k)
    lines.append("t_on_us=" + ",".join(f"{t / US:.6g}" for t in sols))
    print("\n".join(lines))
    return 0


def cmd_mc(args) -> int:
    started = time.perf_counter()
    resolved = cfgmod.load(args.config)
    if args.seed is not None:
        resolved["seed"] = args.seed
    if args.samples is not None:
        resolved["n_samples"] = args.samples
    if args.nblink is not None:
        resolved["timing"]["n_blink"] = args.nblink
    sim = cfgmod.build_sim(resolved)
    t_on, t_off = cfgmod.build_grid(resolved)
    hm = sweep_heatmap(sim, t_on, t_off, workers=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digests: dict = {}
    rows = [(a / US, b / US, p, e) for a, b, p, e in hm.rows()]
    _write(out, "heatmap.csv", csv_text(["t_on_us", "t_off_us", "P", "stderr"], rows), digests)
    write_manifest(out, "mc", resolved, resolved["seed"], started, digests)
    print(f"wrote {out / 'heatmap.csv'} ({len(rows)} cells)")
    return 0


def _scale_trap_atom(args):
    trap = AnalyticTrap(_omega(args), args.cutoff_um * US, alpha=args.alpha)
    atom = AtomSpec(RB87_MASS, args.temperature_uk * US)
    return trap, atom


def _scale_resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def cmd_scale(args) -> int:
    started = time.perf_counter()
    trap, atom = _scale_trap_atom(args)
    n = args.points if args.toff_max > args.toff_min else 1
    t_off = np.linspace(args.toff_min, args.toff_max, n) * US
    pts = scaling_curve(trap, atom, t_off, args.trise_us * US, args.np, args.convention, args.lifetime_loss)
    header = ["t_off_us", "t_on_us", "M", "P_worst", "M_eff", "accessible", "M_eff_star"]
    rows = [(p.t_off / US, p.t_on / US, p.M, p.P_worst, p.M_eff, p.accessible, p.M_eff_star) for p in pts]
    text = csv_text(header, rows)
    if args.out is None:
        sys.stdout.write(text)
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digests: dict = {}
    _write(out, "scale.csv", text, digests)
    write_manifest(out, "scale", _scale_resolved(args), None, started, digests)
    print(f"wrote {out / 'scale.csv'} ({len(rows)} rows)")
    return 0


def cmd_survive(args) -> int:
    trap, atom = _scale_trap_atom(args)
    t_off = args.toff_us * US
    t_on = resonant_ton_np1(trap.omega, t_off) if args.ton_us is None else args.ton_us * US
    rep = effective_scaling(
        trap, atom, t_on, t_off, args.np, args.convention, args.lifetime_loss, m_override=args.m
    )
    header = ["t_off_us", "t_on_us", "M", "P_worst", "M_eff", "M_eff_star"]
    sys.stdout.write(csv_text(header, [(t_off / US, t_on / US, rep.M, rep.P_worst, rep.M_eff, rep.M_eff_star)]))
    return 0


def _rearrange_sim(args):
    doc = {
        "trap": {
            "model": args.trap,
            "omega_khz": args.omega_khz,
            "depth_mk": args.depth_mk,
            "cutoff_um": args.cutoff_um if args.trap == "harmonic" else None,
            "rise_us": args.trise_us if args.trap == "gaussian" else 0.0,
        },
        "atom": {"temperature_uk": args.temperature_uk},
        "timing": {"t_on_us": args.ton_us, "t_off_us": args.toff_us, "n_blink": 1},
        "n_samples": args.samples,
        "seed": args.seed,
        "lifetime_loss": args.lifetime_loss,
    }
    resolved = cfgmod.resolve(doc)
    return resolved, cfgmod.build_sim(resolved)


def cmd_rearrange(args) -> int:
    started = time.perf_counter()
    if args.scenario_file:
        doc = json.loads(Path(args.scenario_file).read_text(encoding="utf-8"))
        scenario = Scenario.from_json(doc)
    else:
        scenario = builtin_scenario(args.scenario, args.lattice_um * US)
    timing = BlinkTiming(args.ton_us * US, args.toff_us * US, args.nblink, args.nslots)
    v_max = args.vmax
    schedule = compile_scenario(scenario, timing, v_max)
    violations = validate_schedule(schedule, timing, v_max, args.min_sep_um * US, args.trise_us * US)
    cal = AodCalibration(
        origin_freq_x=args.origin_mhz * 1e6,
        origin_freq_y=args.origin_mhz * 1e6,
        slope_x=args.slope_mhz_per_um * 1e12,
        slope_y=args.slope_mhz_per_um * 1e12,
    )
    rf = schedule_to_rf(schedule, cal, args.x_shift_us * US)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digests: dict = {}
    _write(out, "schedule.json", json.dumps(schedule.to_json(), sort_keys=True) + "\n", digests)
    _write(out, "rf.csv", csv_text(["axis", "start_time_us", "frequency_MHz", "amplitude"], rf.csv_rows()), digests)
    resolved = {"scenario": scenario.to_json(), "args": _scale_resolved(args)}
    seed = None
    if violations:
        _write(
            out,
            "violations.csv",
            csv_text(["kind", "cycle", "atoms", "detail"], [(v.kind, "" if v.cycle is None else str(v.cycle), " ".join(map(str, v.atoms)), v.detail) for v in violations]),
            digests,
        )
    elif args.simulate:
        sim_resolved, sim = _rearrange_sim(args)
        resolved["simulation"] = sim_resolved
        seed = args.seed
        rows = []
        for atom in schedule.atoms:
            res = simulate_survival(atom_sim_config(schedule, atom, sim), workers=args.threads)
            rows.append((str(atom), res.p, res.stderr))
        mean = float(np.mean([r[1] for r in rows])) if rows else 0.0
        rows.append(("mean", mean, math.sqrt(sum(r[2] ** 2 for r in rows)) / max(len(rows), 1)))
        _write(out, "survival.csv", csv_text(["atom", "P", "stderr"], rows), digests)
        print(f"mean survival {mean:.4f}")
    write_manifest(out, "rearrange", resolved, seed, started, digests)
    print(f"{scenario.name}: {len(schedule.cycles)} cycles, {len(schedule.atoms)} atoms, {len(violations)} violations")
    if violations:
        for v in violations[:10]:
            print(f"  {v}", file=sys.stderr)
        raise ScheduleError(violations)
    return 0


def _add_scale_args(p):
    p.add_argument("--omega-khz", type=float, default=64.0)
    p.add_argument("--cutoff-um", type=float, default=0.90)
    p.add_argument("--temperature-uk", type=float, default=13.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--np", type=int, default=1)
    p.add_argument("--lifetime-loss", type=float, default=0.03)
    p.add_argument("--convention", choices=["gauss", "erf"], default="gauss")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blinktweezer", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("resonance", help="admissible band and resonant t_on")
    p.add_argument("--omega-khz", type=float, default=64.0)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--toff-us", type=float, default=10.0)
    g.add_argument("--s", type=float, default=None, help="dimensionless shear omega*t_off")
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--np", type=int, default=1)
    p.set_defaults(func=cmd_resonance)

    p = sub.add_parser("mc", help="Monte Carlo survival heatmap from a JSON config")
    p.add_argument("config", help="config path, or the name of a bundled config (fig2a)")
    p.add_argument("--out", default="mc_out")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--nblink", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("scale", help="effective scaling along the n_p=1 resonance")
    _add_scale_args(p)
    p.add_argument("--trise-us", type=float, default=1.0)
    p.add_argument("--toff-min", type=float, default=0.0)
    p.add_argument("--toff-max", type=float, default=15.0)
    p.add_argument("--points", type=int, default=151)
    p.add_argument("--out", default=None, help="output directory; CSV goes to stdout if omitted")
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("survive", help="worst-case survival and effective scale at one timing")
    _add_scale_args(p)
    p.add_argument("--toff-us", type=float, default=10.0)
    p.add_argument("--ton-us", type=float, default=None, help="defaults to the n_p=1 resonance")
    p.add_argument("--m", type=int, default=None, help="demonstrated array size instead of the maximal M")
    p.set_defaults(func=cmd_survive)

    p = sub.add_parser("rearrange", help="compile a rearrangement scenario")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", choices=["rotation", "vacancy", "worm", "fall"], default="worm")
    src.add_argument("--scenario-file")
    p.add_argument("--lattice-um", type=float, default=20.0)
    p.add_argument("--ton-us", type=float, default=1.1)
    p.add_argument("--toff-us", type=float, default=10.0)
    p.add_argument("--nblink", type=int, default=1)
    p.add_argument("--nslots", type=int, default=9)
    p.add_argument("--vmax", type=float, default=0.13, help="m/s")
    p.add_argument("--min-sep-um", type=float, default=7.5)
    p.add_argument("--trise-us", type=float, default=1.0)
    p.add_argument("--x-shift-us", type=float, default=1.5)
    p.add_argument("--origin-mhz", type=float, default=100.0)
    p.add_argument("--slope-mhz-per-um", type=float, default=0.5)
    p.add_argument("--simulate", action="store_true")
    p.add_argument("--trap", choices=["harmonic", "gaussian"], default="gaussian")
    p.add_argument("--omega-khz", type=float, default=64.0)
    p.add_argument("--depth-mk", type=float, default=0.72)
    p.add_argument("--cutoff-um", type=float, default=0.90)
    p.add_argument("--temperature-uk", type=float, default=13.0)
    p.add_argument("--lifetime-loss", type=float, default=0.0)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="rearrange_out")
    p.set_defaults(func=cmd_rearrange)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
