"""Timing conditions under which a blinking trap returns the phase-space
distribution to itself (up to a rotation).

Angles use the convention theta = -omega * t_on, s = omega * t_off. The k-th
branch of solutions sits at omega * t_on in (k*pi, k*pi + width); only k >= 0
is exposed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .phasespace import SymplecticMap, rotation_map, shear_map


class SingularInputError(ValueError):
    """The closed form diverges for these inputs; use find_resonances instead."""


@dataclass(frozen=True)
class ResonanceQuery:
    omega: float
    t_off: float
    k: int = 0
    n_p: int = 1

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.t_off < 0:
            raise ValueError(f"t_off must be non-negative, got {self.t_off}")
        if self.k < 0:
            raise ValueError("only k >= 0 branches are supported")
        if self.n_p < 1:
            raise ValueError(f"n_p must be >= 1, got {self.n_p}")


@dataclass(frozen=True)
class BandInterval:
    """Open interval (t_on_min, t_on_max) in seconds."""

    t_on_min: float
    t_on_max: float

    def __contains__(self, t_on: float) -> bool:
        return self.t_on_min < t_on < self.t_on_max

    @property
    def width(self) -> float:
        return self.t_on_max - self.t_on_min


def band_width_angle(s: float) -> float:
    """Width in omega*t_on of each admissible branch for shear s."""
    return math.pi - 2.0 * math.acos(2.0 / math.sqrt(4.0 + s * s))


def admissible_band(query: ResonanceQuery) -> BandInterval | None:
    """k-th interval of t_on in which bounded periodic motion is possible.

    Returns None when the branch is empty (zero width).
    """
    omega = query.omega
    width = band_width_angle(omega * query.t_off)
    if width <= 0.0:
        return None
    lo = query.k * math.pi / omega
    return BandInterval(lo, lo + width / omega)


def in_any_band(omega: float, t_on: float, t_off: float) -> bool:
    """True if omega*t_on lies inside some admissible branch (mod pi)."""
    phase = math.fmod(omega * t_on, math.pi)
    return 0.0 < phase < band_width_angle(omega * t_off)


def resonant_ton_np1(omega: float, t_off: float, k: int = 0) -> float:
    """t_on at which one shear-rotate-shear sequence is a pure rotation."""
    ResonanceQuery(omega, t_off, k)
    s = omega * t_off
    return (math.atan2(2.0, s) + k * math.pi) / omega


def resonant_ton_np2(omega: float, t_off: float) -> tuple[float, float]:
    """Both k=0 solutions of T R T R T = rotation, larger root first.

    Raises SingularInputError at omega*t_off == 1.
    """
    ResonanceQuery(omega, t_off)
    s = omega * t_off
    denom = s * s - 1.0
    if abs(denom) < 1e-12:
        raise SingularInputError("omega*t_off = 1 makes the n_p=2 closed form singular")
    root = math.sqrt(s * s + 3.0)
    out = []
    for sign in (1.0, -1.0):
        angle = math.atan((2.0 * s + sign * root) / denom)
        if angle < 0.0:
            angle += math.pi
        out.append(angle / omega)
    return out[0], out[1]


def periodic_product(omega: float, t_on: float, t_off: float, n_p: int) -> SymplecticMap:
    """T (R T)^n_p for the given timing."""
    r = rotation_map(-omega * t_on)
    t = shear_map(omega * t_off)
    return t @ (r @ t) ** n_p


def is_periodic(
    omega: float, t_on: float, t_off: float, n_p: int = 1, tol: float = 1e-9
) -> tuple[bool, float]:
    """Check whether T (R T)^n_p is a rotation.

    Returns (passed, residual) with residual the Frobenius distance to the
    rotation whose angle is read off the first column.
    """
    if n_p < 1:
        raise ValueError(f"n_p must be >= 1, got {n_p}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = periodic_product(omega, t_on, t_off, n_p)
    theta = math.atan2(m.c, m.a)
    c, s = math.cos(theta), math.sin(theta)
    residual = math.sqrt((m.a - c) ** 2 + (m.b + s) ** 2 + (m.c - s) ** 2 + (m.d - c) ** 2)
    return residual < tol, residual


def _signed_residual(omega: float, t_on: float, t_off: float, n_p: int) -> float:
    # T(RT)^n is palindromic, so M11 == M22 and det == 1 hold identically;
    # the product is a rotation exactly when M12 + M21 vanishes.
    m = periodic_product(omega, t_on, t_off, n_p)
    return m.b + m.c


def find_resonances(
    omega: float,
    t_off: float,
    n_p: int,
    k: int = 0,
    n_scan: int = 2000,
    xtol: float = 1e-14,
) -> list[float]:
    """All t_on in the k-th band where T (R T)^n_p is a rotation.

    Scans the signed residual for sign changes and refines each bracket with
    Brent's method; xtol is in units of omega*t_on. With t_off == 0 every t_on
    is periodic, so the question is ill-posed and ValueError is raised.
    """
    if omega * t_off == 0.0:
        raise ValueError("with t_off = 0 every t_on is periodic")
    band = admissible_band(ResonanceQuery(omega, t_off, k, n_p))
    if band is None:
        return []
    grid = np.linspace(band.t_on_min, band.t_on_max, n_scan + 1)[1:-1] * omega
    f = lambda x: _signed_residual(1.0, x, omega * t_off, n_p)  # noqa: E731
    vals = [f(x) for x in grid]
    roots = []
    for i in range(len(grid) - 1):
        f0, f1 = vals[i], vals[i + 1]
        if f0 == 0.0:
            roots.append(float(grid[i]) / omega)
        elif f0 * f1 < 0.0:
            x = brentq(f, grid[i], grid[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps)
            roots.append(x / omega)
    return roots
