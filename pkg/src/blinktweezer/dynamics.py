"""Monte Carlo phase-space simulation of atoms in a blinking tweezer.

Each sample carries a transverse position x (m) and velocity v (m/s) per
axis. A blinking period is: trap-on phase (integrated motion in the trap,
optionally with power ramps), capture check, free flight. Random streams are
derived from (seed, block index) so results do not depend on worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence, Union

import numpy as np

from .analytic import AtomSpec

BLOCK_SIZE = 4096

RampShape = Literal["linear", "cosine"]
Propagator = Literal["auto", "verlet", "exact"]


@dataclass(frozen=True)
class HarmonicCutoff:
    """Isotropic harmonic well truncated at radius d (zero force outside)."""

    omega: float
    d: float

    def __post_init__(self):
        if not (self.omega > 0 and self.d > 0):
            raise ValueError("omega and d must be positive")

    def depth(self, mass: float) -> float:
        return 0.5 * mass * self.omega**2 * self.d**2

    def omegas(self, mass: float) -> tuple[float, float]:
        return (self.omega, self.omega)


@dataclass(frozen=True)
class GaussianBeam:
    """U(x, y) = -U0 * p * exp(-2 x^2/waist_x^2 - 2 y^2/waist_y^2)."""

    U0: float
    waist_x: float
    waist_y: float

    def __post_init__(self):
        if not (self.U0 > 0 and self.waist_x > 0 and self.waist_y > 0):
            raise ValueError("U0 and waists must be positive")

    @classmethod
    def from_frequency(cls, omega: float, U0: float, mass: float, ellipticity: float = 1.0) -> GaussianBeam:
        """Beam whose small-oscillation frequency along x is omega.

        ellipticity stretches the y waist, lowering omega_y by the same factor.
        """
        w = math.sqrt(4.0 * U0 / (mass * omega**2))
        return cls(U0, w, w * ellipticity)

    def depth(self, mass: float) -> float:
        return self.U0

    def omegas(self, mass: float) -> tuple[float, float]:
        return (
            math.sqrt(4.0 * self.U0 / (mass * self.waist_x**2)),
            math.sqrt(4.0 * self.U0 / (mass * self.waist_y**2)),
        )


TrapVariant = Union[HarmonicCutoff, GaussianBeam]


@dataclass(frozen=True)
class TrapModel:
    variant: TrapVariant
    rise_time: float = 0.0
    fall_time: float = 0.0
    ramp_shape: RampShape = "linear"

    def __post_init__(self):
        if self.rise_time < 0 or self.fall_time < 0:
            raise ValueError("rise_time and fall_time must be non-negative")
        if self.ramp_shape not in ("linear", "cosine"):
            raise ValueError(f"unknown ramp shape {self.ramp_shape!r}")

    @property
    def has_ramps(self) -> bool:
        return self.rise_time > 0 or self.fall_time > 0


@dataclass(frozen=True)
class BlinkTiming:
    t_on: float
    t_off: float
    n_blink: int = 1
    n_slots: int = 1

    def __post_init__(self):
        if not self.t_on > 0:
            raise ValueError(f"t_on must be positive, got {self.t_on}")
        if self.t_off < 0:
            raise ValueError(f"t_off must be non-negative, got {self.t_off}")
        if self.n_blink < 0 or self.n_slots < 1:
            raise ValueError("n_blink must be >= 0 and n_slots >= 1")
        if self.n_slots > 1 and self.t_off < (self.n_slots - 1) * self.t_on * (1 - 1e-12):
            raise ValueError(
                f"t_off={self.t_off:.4g} s is shorter than (n_slots-1)*t_on="
                f"{(self.n_slots - 1) * self.t_on:.4g} s"
            )

    @property
    def period(self) -> float:
        return self.t_on + self.t_off


@dataclass(frozen=True)
class SimConfig:
    trap: TrapModel
    atom: AtomSpec
    timing: BlinkTiming
    n_samples: int = 10_000
    dt: float | None = None  # None -> t_on / 100
    seed: int = 0
    lifetime_loss: float = 0.0
    trap_center_path: tuple[tuple[float, float], ...] | None = None
    initial_center: tuple[float, float] | None = None
    n_axes: int = 2
    propagator: Propagator = "auto"

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.n_axes not in (1, 2):
            raise ValueError("n_axes must be 1 or 2")
        if self.dt is not None:
            if not self.dt > 0:
                raise ValueError("dt must be positive")
            if self.dt > self.timing.t_on / 20 * (1 + 1e-12):
                raise ValueError(f"dt={self.dt:.3g} s exceeds t_on/20")
        if not 0 <= self.lifetime_loss <= 1:
            raise ValueError("lifetime_loss must lie in [0, 1]")
        if self.trap_center_path is not None and len(self.trap_center_path) != self.timing.n_blink:
            raise ValueError(
                f"trap_center_path has {len(self.trap_center_path)} points, "
                f"expected one per cycle ({self.timing.n_blink})"
            )
        if self.propagator not in ("auto", "verlet", "exact"):
            raise ValueError(f"unknown propagator {self.propagator!r}")
        if self.propagator == "exact" and not _exact_ok(self.trap):
            raise ValueError("the exact propagator needs a HarmonicCutoff trap without ramps")

    @property
    def step(self) -> float:
        return self.dt if self.dt is not None else self.timing.t_on / 100.0

    def center(self, cycle: int) -> np.ndarray:
        if self.trap_center_path is not None:
            return np.asarray(self.trap_center_path[cycle], dtype=float)[: self.n_axes]
        return self.start_center()

    def start_center(self) -> np.ndarray:
        if self.initial_center is not None:
            c = self.initial_center
        elif self.trap_center_path:
            c = self.trap_center_path[0]
        else:
            c = (0.0, 0.0)
        return np.asarray(c, dtype=float)[: self.n_axes]


@dataclass
class PhaseSpaceEnsemble:
    x: np.ndarray  # (n, n_axes) m
    v: np.ndarray  # (n, n_axes) m/s
    alive: np.ndarray = field(default=None)  # (n,) bool

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
            self.v = self.v[:, None]
        if self.x.shape != self.v.shape:
            raise ValueError("x and v must have the same shape")
        if self.alive is None:
            self.alive = np.ones(len(self.x), dtype=bool)
        self.alive = np.asarray(self.alive, dtype=bool)
        if self.alive.shape != (len(self.x),):
            raise ValueError("alive must have one flag per sample")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def n_alive(self) -> int:
        return int(self.alive.sum())

    def copy(self) -> PhaseSpaceEnsemble:
        return PhaseSpaceEnsemble(self.x.copy(), self.v.copy(), self.alive.copy())


@dataclass(frozen=True)
class SurvivalResult:
    p: float
    stderr: float
    n_samples: int
    n_alive: int
    alive_history: tuple[int, ...]  # alive count after each capture check


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic 63-bit child seed for (seed, key...)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def sample_initial(
    atom: AtomSpec,
    n: int,
    seed: int,
    omega,
    n_axes: int = 2,
    center=None,
    block: int = 0,
) -> PhaseSpaceEnsemble:
    """Thermal ensemble: velocity std sigma, position std sigma/omega per axis."""
    if n < 1:
        raise ValueError("n must be >= 1")
    omegas = np.broadcast_to(np.asarray(omega, dtype=float), (n_axes,))
    sigma = atom.sigma
    rng = _rng(seed, block)
    z = rng.standard_normal((2, n, n_axes))
    x = z[0] * (sigma / omegas)
    v = z[1] * sigma
    if center is not None:
        x = x + np.asarray(center, dtype=float)[:n_axes]
    return PhaseSpaceEnsemble(x, v)


def potential_and_force(trap: TrapModel | TrapVariant, position, power_fraction: float, mass: float):
    """Potential energy (J) and force (N) at positions relative to the trap center.

    position has shape (n, k) or (k,); k=1 uses only the x waist.
    """
    variant = trap.variant if isinstance(trap, TrapModel) else trap
    pos = np.asarray(position, dtype=float)
    single = pos.ndim == 1
    if single:
        pos = pos[None, :]
    p = float(power_fraction)
    if isinstance(variant, HarmonicCutoff):
        k = mass * variant.omega**2
        r2 = np.sum(pos * pos, axis=1)
        inside = r2 < variant.d**2
        u = np.where(inside, p * (0.5 * k * r2 - variant.depth(mass)), 0.0)
        f = np.where(inside[:, None], -p * k * pos, 0.0)
    elif isinstance(variant, GaussianBeam):
        inv_w2 = np.array([variant.waist_x**-2, variant.waist_y**-2])[: pos.shape[1]]
        u = -variant.U0 * p * np.exp(-2.0 * (pos * pos) @ inv_w2)
        f = (4.0 * u)[:, None] * pos * inv_w2
    else:
        raise TypeError(f"unknown trap variant {type(variant).__name__}")
    if single:
        return float(u[0]), f[0]
    return u, f


def power_profile(t, duration: float, rise_time: float, fall_time: float, shape: RampShape = "linear"):
    """Relative beam power at time t into an on-phase of the given duration.

    Linear ramps up over rise_time and down over fall_time; when the phase is
    too short for both the ramps meet, so the peak is duration/(rise+fall).
    """
    t = np.asarray(t, dtype=float)
    p = np.ones_like(t)
    if rise_time > 0:
        p = np.minimum(p, t / rise_time)
    if fall_time > 0:
        p = np.minimum(p, (duration - t) / fall_time)
    p = np.clip(p, 0.0, 1.0)
    if shape == "cosine":
        p = 0.5 * (1.0 - np.cos(np.pi * p))
    return p


def _exact_ok(trap: TrapModel) -> bool:
    return isinstance(trap.variant, HarmonicCutoff) and not trap.has_ramps


def _propagate_on(x, v, trap: TrapModel, center, duration, dt, mass, exact: bool):
    """Advance arrays (n, k) through one on-phase; returns new (x, v)."""
    if exact:
        # bound samples never reach the cutoff, so the motion is a rotation;
        # unbound ones fail the next capture check either way
        w = trap.variant.omega
        c, s = math.cos(w * duration), math.sin(w * duration)
        rel = x - center
        return center + rel * c + v * (s / w), v * c - rel * (w * s)
    n_steps = max(1, int(math.ceil(duration / dt - 1e-9)))
    h = duration / n_steps
    times = np.linspace(0.0, duration, n_steps + 1)
    powers = power_profile(times, duration, trap.rise_time, trap.fall_time, trap.ramp_shape)
    x = x.copy()
    v = v.copy()
    half = 0.5 * h / mass
    _, f = potential_and_force(trap, x - center, powers[0], mass)
    for i in range(n_steps):
        v += half * f
        x += h * v
        _, f = potential_and_force(trap, x - center, powers[i + 1], mass)
        v += half * f
    return x, v


def step_on_phase(
    ensemble: PhaseSpaceEnsemble,
    trap: TrapModel,
    center,
    duration: float,
    dt: float,
    mass: float,
    propagator: Propagator = "verlet",
) -> PhaseSpaceEnsemble:
    """Velocity-Verlet through a trap-on phase with rise/fall ramps."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    if dt > duration * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3g} s exceeds duration={duration:.3g} s")
    exact = propagator == "exact" or (propagator == "auto" and _exact_ok(trap))
    if exact and not _exact_ok(trap):
        raise ValueError("the exact propagator needs a HarmonicCutoff trap without ramps")
    out = ensemble.copy()
    a = out.alive
    k = out.x.shape[1]
    c = np.asarray(center, dtype=float)[:k]
    out.x[a], out.v[a] = _propagate_on(out.x[a], out.v[a], trap, c, duration, dt, mass, exact)
    return out


def step_off_phase(ensemble: PhaseSpaceEnsemble, duration: float) -> PhaseSpaceEnsemble:
    """Free flight; exact."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    out = ensemble.copy()
    if duration:
        out.x[out.alive] += out.v[out.alive] * duration
    return out


def _bound(x, v, trap: TrapModel, center, mass) -> np.ndarray:
    u, _ = potential_and_force(trap, x - center, 1.0, mass)
    return 0.5 * mass * np.sum(v * v, axis=1) + u < 0.0


def apply_capture_filter(ensemble: PhaseSpaceEnsemble, trap: TrapModel, center, mass: float) -> PhaseSpaceEnsemble:
    """Kill every alive sample whose energy in the full-power trap is >= 0."""
    out = ensemble.copy()
    k = out.x.shape[1]
    c = np.asarray(center, dtype=float)[:k]
    a = out.alive
    keep = _bound(out.x[a], out.v[a], trap, c, mass)
    idx = np.flatnonzero(a)
    out.alive[idx[~keep]] = False
    return out


def _run_block(config: SimConfig, block: int, n: int) -> np.ndarray:
    """Alive counts after each capture check for one sample block."""
    mass = config.atom.mass
    omegas = config.trap.variant.omegas(mass)[: config.n_axes]
    ens = sample_initial(config.atom, n, config.seed, omegas, config.n_axes, config.start_center(), block)
    x, v = ens.x, ens.v
    t_on, t_off = config.timing.t_on, config.timing.t_off
    exact = config.propagator == "exact" or (config.propagator == "auto" and _exact_ok(config.trap))
    counts = []
    center = config.start_center()
    for cycle in range(config.timing.n_blink):
        center = config.center(cycle)
        x, v = _propagate_on(x, v, config.trap, center, t_on, config.step, mass, exact)
        keep = _bound(x, v, config.trap, center, mass)
        x, v = x[keep], v[keep]
        counts.append(len(x))
        x = x + v * t_off
    # recapture after the final release
    keep = _bound(x, v, config.trap, center, mass)
    counts.append(int(keep.sum()))
    return np.asarray(counts, dtype=np.int64)


def _blocks(n: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK_SIZE, n - b * BLOCK_SIZE)) for b in range((n + BLOCK_SIZE - 1) // BLOCK_SIZE)]


def _run_block_args(args):
    return _run_block(*args)


def simulate_survival(config: SimConfig, workers: int = 1) -> SurvivalResult:
    """Fraction of atoms that survive every capture check, times (1 - lifetime_loss).

    stderr is the binomial standard error of the simulated fraction, scaled
    by the same lifetime factor.
    """
    tasks = [(config, b, n) for b, n in _blocks(config.n_samples)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block_args, tasks))
    else:
        parts = [_run_block(*t) for t in tasks]
    history = np.sum(parts, axis=0)
    n = config.n_samples
    alive = int(history[-1])
    frac = alive / n
    factor = 1.0 - config.lifetime_loss
    stderr = factor * math.sqrt(frac * (1.0 - frac) / n)
    return SurvivalResult(frac * factor, stderr, n, alive, tuple(int(c) for c in history))


@dataclass(frozen=True)
class Heatmap:
    t_on_values: np.ndarray
    t_off_values: np.ndarray
    p: np.ndarray  # (len(t_on), len(t_off))
    stderr: np.ndarray

    def rows(self):
        """(t_on, t_off, P, stderr) in t_on-major order."""
        for i, t_on in enumerate(self.t_on_values):
            for j, t_off in enumerate(self.t_off_values):
                yield float(t_on), float(t_off), float(self.p[i, j]), float(self.stderr[i, j])


def cell_config(base: SimConfig, i: int, j: int, t_on: float, t_off: float) -> SimConfig:
    timing = replace(base.timing, t_on=float(t_on), t_off=float(t_off))
    dt = base.dt
    if dt is not None and dt > t_on / 20:
        dt = None
    return replace(base, timing=timing, dt=dt, seed=derive_seed(base.seed, i, j))


def _cell(args):
    base, i, j, t_on, t_off = args
    res = simulate_survival(cell_config(base, i, j, t_on, t_off))
    return res.p, res.stderr


def sweep_heatmap(
    base: SimConfig,
    t_on_values: Sequence[float],
    t_off_values: Sequence[float],
    workers: int = 1,
) -> Heatmap:
    """Survival over a (t_on, t_off) grid; cell (i, j) uses seed derived from (seed, i, j)."""
    t_on_values = np.asarray(t_on_values, dtype=float)
    t_off_values = np.asarray(t_off_values, dtype=float)
    if t_on_values.size == 0 or t_off_values.size == 0:
        raise ValueError("ranges must be non-empty")
    tasks = [
        (base, i, j, t_on, t_off)
        for i, t_on in enumerate(t_on_values)
        for j, t_off in enumerate(t_off_values)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_cell(t) for t in tasks]
    arr = np.asarray(results, dtype=float).reshape(len(t_on_values), len(t_off_values), 2)
    return Heatmap(t_on_values, t_off_values, arr[..., 0], arr[..., 1])
