"""JSON run configs in lab units (us, uK, um, kHz, mK), resolved to SI objects."""

from __future__ import annotations

import copy
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .analytic import K_B, RB87_MASS, AtomSpec
from .dynamics import BlinkTiming, GaussianBeam, HarmonicCutoff, SimConfig, TrapModel

DEFAULTS = {
    "trap": {
        "model": "gaussian",
        "omega_khz": 79.0,
        "depth_mk": 1.0,
        "cutoff_um": None,
        "waist_um": None,
        "ellipticity": 1.0,
        "rise_us": 0.0,
        "fall_us": 0.0,
        "ramp_shape": "linear",
    },
    "atom": {"temperature_uk": 15.0, "mass_kg": RB87_MASS},
    "timing": {"t_on_us": 1.5, "t_off_us": 5.0, "n_blink": 100, "n_slots": 1},
    "grid": None,
    "n_samples": 1000,
    "seed": 0,
    "lifetime_loss": 0.0,
    "n_axes": 2,
    "propagator": "auto",
    "dt_us": None,
}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def _merge(base: dict, over: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(prefix + key, "unknown field")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, prefix + key + ".")
        else:
            out[key] = val
    return out


def resolve(doc: dict) -> dict:
    """Fill defaults; raises ConfigError on unknown fields."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    return _merge(DEFAULTS, doc)


def bundled_config_path(name: str) -> Path:
    return Path(str(resources.files("blinktweezer") / "configs" / name))


def load(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        alt = bundled_config_path(p.name if p.suffix else p.name + ".json")
        if alt.exists():
            p = alt
        else:
            raise FileNotFoundError(f"config {path} not found")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
    return resolve(doc)


def _num(cfg: dict, key: str, prefix: str, positive: bool = False, allow_none: bool = False):
    val = cfg.get(key)
    if val is None and allow_none:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ConfigError(prefix + key, f"expected a finite number, got {val!r}")
    if positive and not val > 0:
        raise ConfigError(prefix + key, f"must be positive, got {val!r}")
    return float(val)


def build_trap(cfg: dict, mass: float) -> TrapModel:
    t = cfg["trap"]
    omega = 2 * math.pi * 1e3 * _num(t, "omega_khz", "trap.", positive=True)
    model = t["model"]
    if model == "harmonic":
        cutoff = _num(t, "cutoff_um", "trap.", positive=True, allow_none=True)
        if cutoff is None:
            depth = K_B * 1e-3 * _num(t, "depth_mk", "trap.", positive=True)
            cutoff_m = math.sqrt(2 * depth / mass) / omega
        else:
            cutoff_m = cutoff * 1e-6
        variant = HarmonicCutoff(omega, cutoff_m)
    elif model == "gaussian":
        depth = K_B * 1e-3 * _num(t, "depth_mk", "trap.", positive=True)
        ell = _num(t, "ellipticity", "trap.", positive=True)
        waist = _num(t, "waist_um", "trap.", positive=True, allow_none=True)
        if waist is None:
            variant = GaussianBeam.from_frequency(omega, depth, mass, ell)
        else:
            variant = GaussianBeam(depth, waist * 1e-6, waist * 1e-6 * ell)
    else:
        raise ConfigError("trap.model", f"expected 'harmonic' or 'gaussian', got {model!r}")
    rise = _num(t, "rise_us", "trap.") * 1e-6
    fall = _num(t, "fall_us", "trap.") * 1e-6
    if rise < 0 or fall < 0:
        raise ConfigError("trap.rise_us", "ramp times must be non-negative")
    if t["ramp_shape"] not in ("linear", "cosine"):
        raise ConfigError("trap.ramp_shape", f"expected 'linear' or 'cosine', got {t['ramp_shape']!r}")
    return TrapModel(variant, rise, fall, t["ramp_shape"])


def build_sim(cfg: dict) -> SimConfig:
    a = cfg["atom"]
    mass = _num(a, "mass_kg", "atom.", positive=True)
    temp = _num(a, "temperature_uk", "atom.")
    if temp < 0:
        raise ConfigError("atom.temperature_uk", "must be non-negative")
    atom = AtomSpec(mass, temp * 1e-6)
    trap = build_trap(cfg, mass)
    tm = cfg["timing"]
    n_blink = tm["n_blink"]
    if not isinstance(n_blink, int) or n_blink < 0:
        raise ConfigError("timing.n_blink", f"expected a non-negative integer, got {n_blink!r}")
    try:
        timing = BlinkTiming(
            _num(tm, "t_on_us", "timing.", positive=True) * 1e-6,
            _num(tm, "t_off_us", "timing.") * 1e-6,
            n_blink,
            int(tm["n_slots"]),
        )
    except ValueError as exc:
        raise ConfigError("timing", str(exc)) from exc
    for key in ("n_samples", "seed", "n_axes"):
        if not isinstance(cfg[key], int) or isinstance(cfg[key], bool):
            raise ConfigError(key, f"expected an integer, got {cfg[key]!r}")
    dt = _num(cfg, "dt_us", "", positive=True, allow_none=True)
    try:
        return SimConfig(
            trap=trap,
            atom=atom,
            timing=timing,
            n_samples=cfg["n_samples"],
            dt=None if dt is None else dt * 1e-6,
            seed=cfg["seed"],
            lifetime_loss=_num(cfg, "lifetime_loss", ""),
            n_axes=cfg["n_axes"],
            propagator=cfg["propagator"],
        )
    except ValueError as exc:
        raise ConfigError("<sim>", str(exc)) from exc


def grid_values(spec, field: str) -> np.ndarray:
    """Grid axis in seconds from {"min","max","num"} (cell centers) or {"values"} in us."""
    if not isinstance(spec, dict):
        raise ConfigError(field, "expected an object with min/max/num or values")
    if "values" in spec:
        vals = spec["values"]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(field + ".values", "expected a non-empty list")
        return np.asarray([_num({"v": v}, "v", field + ".values") for v in vals]) * 1e-6
    lo = _num(spec, "min", field + ".")
    hi = _num(spec, "max", field + ".")
    num = spec.get("num")
    if not isinstance(num, int) or num < 1:
        raise ConfigError(field + ".num", f"expected a positive integer, got {num!r}")
    if hi < lo:
        raise ConfigError(field, "max must be >= min")
    step = (hi - lo) / num
    return (lo + (np.arange(num) + 0.5) * step) * 1e-6


def build_grid(cfg: dict) -> tuple[np.ndarray, np.ndarray]:
    g = cfg.get("grid")
    if g is None:
        tm = cfg["timing"]
        return np.array([tm["t_on_us"] * 1e-6]), np.array([tm["t_off_us"] * 1e-6])
    if not isinstance(g, dict) or "t_on_us" not in g or "t_off_us" not in g:
        raise ConfigError("grid", "expected t_on_us and t_off_us axes")
    t_on = grid_values(g["t_on_us"], "grid.t_on_us")
    if np.any(t_on <= 0):
        raise ConfigError("grid.t_on_us", "all t_on values must be positive")
    t_off = grid_values(g["t_off_us"], "grid.t_off_us")
    if np.any(t_off < 0):
        raise ConfigError("grid.t_off_us", "t_off values must be non-negative")
    return t_on, t_off
