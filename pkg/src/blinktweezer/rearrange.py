"""Compile atom-rearrangement scenarios into blinking-tweezer time-slot
schedules and AOD RF programs.

Every atom owns one slot of length t_on in each blinking period. Its trap
center jumps along its waypoint polyline by an equal arc-length step at the
start of each cycle and stays fixed during the slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .analytic import max_atoms
from .dynamics import BlinkTiming, SimConfig, SurvivalResult, derive_seed, simulate_survival

Point = tuple[float, float]


class ConstraintError(ValueError):
    """A scenario cannot be compiled under the requested timing."""


class CapacityError(ConstraintError):
    pass


class SpeedError(ConstraintError):
    def __init__(self, atom: int, speed: float, v_max: float, min_n_blink: int):
        self.atom = atom
        self.speed = speed
        self.v_max = v_max
        self.min_n_blink = min_n_blink
        super().__init__(
            f"atom {atom}: drag speed {speed:.4g} m/s exceeds v_max={v_max:.4g} m/s; "
            f"needs n_blink >= {min_n_blink}"
        )


class ScheduleError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations[:5]))


class RfRangeError(ValueError):
    pass


@dataclass(frozen=True)
class Move:
    atom: int
    waypoints: tuple[Point, ...]
    n_blink: int

    def __post_init__(self):
        if len(self.waypoints) < 1:
            raise ValueError("a move needs at least one waypoint")
        if self.n_blink < 1:
            raise ValueError("n_blink must be >= 1")

    @property
    def length(self) -> float:
        pts = np.asarray(self.waypoints, dtype=float)
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


@dataclass(frozen=True)
class Scenario:
    """Sites and initial occupancy; atom ids are the indices of occupied sites."""

    name: str
    sites: tuple[Point, ...]
    occupancy: tuple[bool, ...]
    moves: tuple[Move, ...] = ()
    lattice_constant: float | None = None

    def __post_init__(self):
        if len(self.sites) != len(self.occupancy):
            raise ValueError("sites and occupancy must have equal length")
        seen = set()
        for mv in self.moves:
            if mv.atom in seen:
                raise ValueError(f"atom {mv.atom} has more than one move")
            seen.add(mv.atom)
            if not (0 <= mv.atom < len(self.sites)) or not self.occupancy[mv.atom]:
                raise ValueError(f"move for atom {mv.atom} does not start at an occupied site")
            start = np.asarray(mv.waypoints[0]) - np.asarray(self.sites[mv.atom])
            scale = max(1e-6, float(np.abs(np.asarray(self.sites)).max()))
            if np.hypot(*start) > 1e-9 * scale:
                raise ValueError(f"waypoints of atom {mv.atom} must start at its site")

    @property
    def atoms(self) -> list[int]:
        return [i for i, occ in enumerate(self.occupancy) if occ]

    def move_for(self, atom: int) -> Move | None:
        for mv in self.moves:
            if mv.atom == atom:
                return mv
        return None

    def scaled(self, factor: float) -> Scenario:
        def sc(p):
            return (p[0] * factor, p[1] * factor)

        return Scenario(
            self.name,
            tuple(sc(p) for p in self.sites),
            self.occupancy,
            tuple(Move(m.atom, tuple(sc(p) for p in m.waypoints), m.n_blink) for m in self.moves),
            None if self.lattice_constant is None else self.lattice_constant * factor,
        )

    def to_json(self) -> dict:
        um = 1e6
        return {
            "name": self.name,
            "lattice_constant_um": None if self.lattice_constant is None else self.lattice_constant * um,
            "sites": [[x * um, y * um] for x, y in self.sites],
            "occupancy": [bool(o) for o in self.occupancy],
            "moves": [
                {"atom": m.atom, "waypoints": [[x * um, y * um] for x, y in m.waypoints], "n_blink": m.n_blink}
                for m in self.moves
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> Scenario:
        um = 1e-6
        try:
            lattice = doc.get("lattice_constant_um")
            return cls(
                name=str(doc["name"]),
                sites=tuple((float(x) * um, float(y) * um) for x, y in doc["sites"]),
                occupancy=tuple(bool(o) for o in doc["occupancy"]),
                moves=tuple(
                    Move(
                        int(m["atom"]),
                        tuple((float(x) * um, float(y) * um) for x, y in m["waypoints"]),
                        int(m["n_blink"]),
                    )
                    for m in doc.get("moves", [])
                ),
                lattice_constant=None if lattice is None else float(lattice) * um,
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed scenario: {exc!r}") from exc


@dataclass(frozen=True)
class Slot:
    slot_index: int
    atom: int | None
    active: bool
    center: Point | None
    start: float
    duration: float


@dataclass(frozen=True)
class Cycle:
    index: int
    start: float
    slots: tuple[Slot, ...]


@dataclass(frozen=True)
class Schedule:
    name: str
    t_on: float
    t_off: float
    n_slots: int
    initial_centers: dict[int, Point]
    cycles: tuple[Cycle, ...]
    step_lengths: dict[int, float]  # arc length advanced per cycle while moving

    @property
    def period(self) -> float:
        return self.t_on + self.t_off

    @property
    def atoms(self) -> list[int]:
        return sorted(self.initial_centers)

    def atom_path(self, atom: int) -> list[Point]:
        """Trap center of atom in every cycle."""
        out = []
        for cyc in self.cycles:
            for sl in cyc.slots:
                if sl.atom == atom:
                    out.append(sl.center)
                    break
        return out

    def to_json(self) -> dict:
        um, us = 1e6, 1e6
        return {
            "name": self.name,
            "t_on_us": self.t_on * us,
            "t_off_us": self.t_off * us,
            "n_slots": self.n_slots,
            "initial_centers_um": {str(a): [c[0] * um, c[1] * um] for a, c in sorted(self.initial_centers.items())},
            "step_lengths_um": {str(a): s * um for a, s in sorted(self.step_lengths.items())},
            "cycles": [
                {
                    "index": c.index,
                    "start_us": c.start * us,
                    "slots": [
                        {
                            "slot": s.slot_index,
                            "atom": s.atom,
                            "active": s.active,
                            "center_um": None if s.center is None else [s.center[0] * um, s.center[1] * um],
                            "start_us": s.start * us,
                            "duration_us": s.duration * us,
                        }
                        for s in c.slots
                    ],
                }
                for c in self.cycles
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> Schedule:
        um, us = 1e-6, 1e-6
        cycles = tuple(
            Cycle(
                int(c["index"]),
                float(c["start_us"]) * us,
                tuple(
                    Slot(
                        int(s["slot"]),
                        None if s["atom"] is None else int(s["atom"]),
                        bool(s["active"]),
                        None if s["center_um"] is None else (s["center_um"][0] * um, s["center_um"][1] * um),
                        float(s["start_us"]) * us,
                        float(s["duration_us"]) * us,
                    )
                    for s in c["slots"]
                ),
            )
            for c in doc["cycles"]
        )
        return cls(
            name=doc["name"],
            t_on=float(doc["t_on_us"]) * us,
            t_off=float(doc["t_off_us"]) * us,
            n_slots=int(doc["n_slots"]),
            initial_centers={int(a): (c[0] * um, c[1] * um) for a, c in doc["initial_centers_um"].items()},
            cycles=cycles,
            step_lengths={int(a): float(s) * um for a, s in doc.get("step_lengths_um", {}).items()},
        )


@dataclass(frozen=True)
class Violation:
    kind: str  # off_time | speed | proximity | rise_time
    cycle: int | None
    atoms: tuple[int, ...]
    detail: str

    def __str__(self) -> str:
        where = "" if self.cycle is None else f" cycle {self.cycle}"
        return f"{self.kind}{where} atoms {list(self.atoms)}: {self.detail}"


def assign_slots(occupancy: Sequence[bool], M: int | None = None) -> list[int]:
    """Order slots so active ones are spread evenly among the empty ones.

    Returns order with order[p] the original slot placed at position p.
    Active slots land at positions floor(j*M/a); ties go to the lowest index.
    """
    occ = [bool(o) for o in occupancy]
    if M is None:
        M = len(occ)
    if len(occ) != M:
        raise ValueError(f"occupancy has {len(occ)} entries, expected {M}")
    active = [i for i, o in enumerate(occ) if o]
    empty = [i for i, o in enumerate(occ) if not o]
    a = len(active)
    if a == 0 or a == M:
        return list(range(M))
    active_pos = {(j * M) // a for j in range(a)}
    order = []
    ai, ei = iter(active), iter(empty)
    for p in range(M):
        order.append(next(ai) if p in active_pos else next(ei))
    return order


def _polyline_points(waypoints, n_steps: int, n_cycles: int) -> tuple[list[Point], float]:
    """Centers for cycles 0..n_cycles-1 advancing by length/n_steps per cycle."""
    pts = np.asarray(waypoints, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    length = float(cum[-1])
    step = length / n_steps
    out = []
    for c in range(n_cycles):
        k = min(c + 1, n_steps)
        if k == n_steps or length == 0.0:
            out.append((float(pts[-1, 0]), float(pts[-1, 1])))
            continue
        s = k * step
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        frac = (s - cum[i]) / seg[i] if seg[i] > 0 else 0.0
        p = pts[i] + frac * (pts[i + 1] - pts[i])
        out.append((float(p[0]), float(p[1])))
    return out, step


def compile_scenario(scenario: Scenario, timing: BlinkTiming, v_max: float) -> Schedule:
    """Build the per-cycle slot schedule for a scenario.

    The schedule runs max(timing.n_blink, longest move) cycles; atoms that
    finish early hold their final position.
    """
    atoms = scenario.atoms
    capacity = max_atoms(timing.t_on, timing.t_off)
    if len(atoms) > capacity:
        raise CapacityError(
            f"{len(atoms)} atoms exceed the capacity M={capacity} of t_on={timing.t_on:.3g} s, "
            f"t_off={timing.t_off:.3g} s"
        )
    limit = v_max * timing.t_on
    for mv in scenario.moves:
        step = mv.length / mv.n_blink
        if step > limit * (1 + 1e-9):
            raise SpeedError(mv.atom, step / timing.t_on, v_max, math.ceil(mv.length / limit - 1e-9))
    n_cycles = max([timing.n_blink] + [mv.n_blink for mv in scenario.moves])
    paths: dict[int, list[Point]] = {}
    steps: dict[int, float] = {}
    for a in atoms:
        mv = scenario.move_for(a)
        if mv is None:
            paths[a] = [tuple(scenario.sites[a])] * n_cycles
            steps[a] = 0.0
        else:
            paths[a], steps[a] = _polyline_points(mv.waypoints, mv.n_blink, n_cycles)

    M = max(timing.n_slots, len(atoms))
    order = assign_slots([True] * len(atoms) + [False] * (M - len(atoms)), M)
    slot_atoms = [atoms[i] if i < len(atoms) else None for i in order]
    tau = timing.period
    cycles = []
    for c in range(n_cycles):
        start = c * tau
        slots = tuple(
            Slot(
                p,
                a,
                a is not None,
                None if a is None else paths[a][c],
                start + p * timing.t_on,
                timing.t_on,
            )
            for p, a in enumerate(slot_atoms)
        )
        cycles.append(Cycle(c, start, slots))
    return Schedule(
        scenario.name,
        timing.t_on,
        timing.t_off,
        M,
        {a: tuple(scenario.sites[a]) for a in atoms},
        tuple(cycles),
        steps,
    )


def validate_schedule(
    schedule: Schedule,
    timing: BlinkTiming,
    v_max: float,
    min_site_separation: float,
    rise_time: float = 0.0,
) -> list[Violation]:
    """Collect timing, speed, proximity and rise-time violations."""
    out: list[Violation] = []
    M = schedule.n_slots
    need_off = (M - 1) * timing.t_on
    tol = 1e-9
    if timing.t_off < need_off * (1 - tol):
        out.append(Violation("off_time", None, (), f"t_off={timing.t_off:.4g} s < (M-1)*t_on={need_off:.4g} s"))
    tau = timing.period
    last: dict[int, Slot] = {}
    for cyc in schedule.cycles:
        total = sum(s.duration for s in cyc.slots)
        if total > tau * (1 + tol):
            out.append(Violation("off_time", cyc.index, (), f"slot durations {total:.4g} s exceed period {tau:.4g} s"))
        for s in cyc.slots:
            if not s.active:
                continue
            if s.duration < rise_time * (1 - tol):
                out.append(Violation("rise_time", cyc.index, (s.atom,), f"slot {s.duration:.3g} s < rise {rise_time:.3g} s"))
            prev = last.get(s.atom)
            if prev is not None:
                off = s.start - (prev.start + prev.duration)
                if off < need_off * (1 - tol):
                    out.append(Violation("off_time", cyc.index, (s.atom,), f"off-time {off:.4g} s < {need_off:.4g} s"))
            last[s.atom] = s

    limit = v_max * timing.t_on
    for a in schedule.atoms:
        pts = np.asarray([schedule.initial_centers[a]] + schedule.atom_path(a), dtype=float)
        jumps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        for c in np.flatnonzero(jumps > limit * (1 + tol)):
            out.append(
                Violation("speed", int(c), (a,), f"drag speed {jumps[c] / timing.t_on:.4g} m/s > {v_max:.4g} m/s")
            )

    for cyc in schedule.cycles:
        act = [s for s in cyc.slots if s.active]
        if len(act) < 2:
            continue
        pts = np.asarray([s.center for s in act], dtype=float)
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        ii, jj = np.nonzero(np.triu(dist < min_site_separation * (1 - tol), k=1))
        for i, j in zip(ii, jj):
            out.append(
                Violation("proximity", cyc.index, (act[i].atom, act[j].atom), f"separation {dist[i, j]:.4g} m")
            )
    return out


@dataclass(frozen=True)
class AodCalibration:
    """Linear RF-frequency to trap-position map per AOD axis."""

    origin_freq_x: float = 100e6
    origin_freq_y: float = 100e6
    slope_x: float = 0.5e12  # Hz/m
    slope_y: float = 0.5e12
    band: tuple[float, float] | None = (50e6, 150e6)

    def __post_init__(self):
        if self.slope_x == 0 or self.slope_y == 0:
            raise ValueError("AOD slopes must be nonzero")


@dataclass(frozen=True)
class RfEvent:
    start_time: float
    frequency: float
    amplitude: float


@dataclass(frozen=True)
class RfProgram:
    x: tuple[RfEvent, ...]
    y: tuple[RfEvent, ...]
    x_axis_shift: float

    def csv_rows(self) -> Iterable[tuple[str, float, float, float]]:
        for axis, events in (("x", self.x), ("y", self.y)):
            for e in events:
                yield axis, e.start_time * 1e6, e.frequency * 1e-6, e.amplitude


def schedule_to_rf(schedule: Schedule, cal: AodCalibration, x_axis_shift: float = 1.5e-6) -> RfProgram:
    """One tone per slot and axis; inactive slots and idle tails are silent."""
    xs, ys = [], []
    tau = schedule.period
    for cyc in schedule.cycles:
        for s in cyc.slots:
            if s.active:
                fx = cal.origin_freq_x + cal.slope_x * s.center[0]
                fy = cal.origin_freq_y + cal.slope_y * s.center[1]
                if cal.band is not None:
                    lo, hi = cal.band
                    for f, ax in ((fx, "x"), (fy, "y")):
                        if not lo <= f <= hi:
                            raise RfRangeError(
                                f"cycle {cyc.index} atom {s.atom}: {ax} frequency {f / 1e6:.4f} MHz "
                                f"outside AOD band [{lo / 1e6:g}, {hi / 1e6:g}] MHz"
                            )
                amp = 1.0
            else:
                fx, fy, amp = cal.origin_freq_x, cal.origin_freq_y, 0.0
            xs.append(RfEvent(s.start + x_axis_shift, fx, amp))
            ys.append(RfEvent(s.start, fy, amp))
        busy = sum(s.duration for s in cyc.slots)
        if busy < tau * (1 - 1e-12):
            t_idle = cyc.start + busy
            xs.append(RfEvent(t_idle + x_axis_shift, cal.origin_freq_x, 0.0))
            ys.append(RfEvent(t_idle, cal.origin_freq_y, 0.0))
    return RfProgram(tuple(xs), tuple(ys), x_axis_shift)


@dataclass(frozen=True)
class RearrangementResult:
    per_atom: dict[int, SurvivalResult]

    @property
    def mean(self) -> float:
        return float(np.mean([r.p for r in self.per_atom.values()])) if self.per_atom else 0.0


def atom_sim_config(schedule: Schedule, atom: int, sim: SimConfig) -> SimConfig:
    """SimConfig that replays one atom's slot centers through every cycle."""
    timing = BlinkTiming(schedule.t_on, schedule.t_off, len(schedule.cycles))
    return replace(
        sim,
        timing=timing,
        trap_center_path=tuple(schedule.atom_path(atom)),
        initial_center=schedule.initial_centers[atom],
        seed=derive_seed(sim.seed, atom),
    )


def simulate_rearrangement(
    scenario: Scenario,
    timing: BlinkTiming,
    sim: SimConfig,
    v_max: float = 0.13,
    min_site_separation: float = 7.5e-6,
    rise_time: float = 0.0,
    workers: int = 1,
) -> RearrangementResult:
    """Per-atom survival through a compiled scenario; atoms do not interact."""
    schedule = compile_scenario(scenario, timing, v_max)
    violations = validate_schedule(schedule, timing, v_max, min_site_separation, rise_time)
    if violations:
        raise ScheduleError(violations)
    return RearrangementResult(
        {a: simulate_survival(atom_sim_config(schedule, a, sim), workers) for a in schedule.atoms}
    )


def _lattice(a: float) -> list[Point]:
    # 3x3, index = row*3 + col, centered on the origin
    return [((col - 1) * a, (row - 1) * a) for row in range(3) for col in range(3)]


def _occ(indices) -> tuple[bool, ...]:
    indices = set(indices)
    return tuple(i in indices for i in range(9))


def _hop_path(sites, order) -> tuple[Point, ...]:
    return tuple(sites[i] for i in order)


def builtin_scenarios(lattice_constant: float = 20e-6, cycles_per_hop: int = 200, rotation_cycles: int = 900) -> list[Scenario]:
    """rotation, vacancy, worm and fall scenarios on a 3x3 lattice."""
    if not lattice_constant > 0:
        raise ValueError("lattice_constant must be positive")
    a = lattice_constant
    sites = tuple(_lattice(a))
    out = []

    corners = (0, 2, 6, 8)
    moves = []
    for i in corners:
        x, y = sites[i]
        r, phi = math.hypot(x, y), math.atan2(y, x)
        ang = phi + math.pi * np.arange(rotation_cycles + 1) / rotation_cycles
        pts = tuple((float(r * math.cos(t)), float(r * math.sin(t))) for t in ang)
        moves.append(Move(i, (sites[i],) + pts[1:], rotation_cycles))
    out.append(Scenario("rotation", sites, _occ(corners), tuple(moves), a))

    # fill the 2x2 block {0, 1, 3, 4} with two diagonal moves
    out.append(
        Scenario(
            "vacancy",
            sites,
            _occ((0, 4, 5, 7)),
            (Move(5, (sites[5], sites[1]), cycles_per_hop), Move(7, (sites[7], sites[3]), cycles_per_hop)),
            a,
        )
    )

    # snake through the lattice; atoms slide to the far end, keeping order
    snake = [0, 1, 2, 5, 4, 3, 6, 7, 8]
    filled = [0, 1, 3, 6, 7]  # positions along the snake
    moves = []
    for rank, pos in enumerate(sorted(filled, reverse=True)):
        target = len(snake) - 1 - rank
        if target > pos:
            moves.append(Move(snake[pos], _hop_path(sites, snake[pos : target + 1]), cycles_per_hop * (target - pos)))
    out.append(Scenario("worm", sites, _occ(snake[p] for p in filled), tuple(moves), a))

    occupied = (0, 3, 5, 7)
    moves = []
    for row in range(3):
        cols = [c for c in range(3) if row * 3 + c in occupied]
        for rank, col in enumerate(sorted(cols, reverse=True)):
            target = 2 - rank
            if target > col:
                idx = [row * 3 + c for c in range(col, target + 1)]
                moves.append(Move(row * 3 + col, _hop_path(sites, idx), cycles_per_hop * (target - col)))
    out.append(Scenario("fall", sites, _occ(occupied), tuple(moves), a))
    return out


def builtin_scenario(name: str, lattice_constant: float = 20e-6) -> Scenario:
    for sc in builtin_scenarios(lattice_constant):
        if sc.name == name:
            return sc
    raise ValueError(f"unknown scenario {name!r}; choose from rotation, vacancy, worm, fall")
