"""2x2 symplectic algebra for one transverse axis of a blinking trap.

All maps act on column vectors (q, v) with q = omega * x, so a trap-on phase is
a rotation and a trap-off phase is a shear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SymplecticMap:
    """Real 2x2 matrix [[a, b], [c, d]] stored row-major."""

    a: float
    b: float
    c: float
    d: float

    @classmethod
    def identity(cls) -> SymplecticMap:
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_array(cls, m) -> SymplecticMap:
        m = np.asarray(m, dtype=float)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    @property
    def trace(self) -> float:
        return self.a + self.d

    def __matmul__(self, other: SymplecticMap) -> SymplecticMap:
        if not isinstance(other, SymplecticMap):
            return NotImplemented
        return SymplecticMap(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def __pow__(self, n: int) -> SymplecticMap:
        if n < 0:
            return self.inverse() ** (-n)
        result = SymplecticMap.identity()
        base = self
        while n:
            if n & 1:
                result = result @ base
            base = base @ base
            n >>= 1
        return result

    def inverse(self) -> SymplecticMap:
        det = self.det
        return SymplecticMap(self.d / det, -self.b / det, -self.c / det, self.a / det)

    def transpose(self) -> SymplecticMap:
        return SymplecticMap(self.a, self.c, self.b, self.d)

    def apply(self, vec):
        """Apply to a (2,) vector or to an (n, 2) array of row vectors."""
        arr = np.asarray(vec, dtype=float)
        q, v = arr[..., 0], arr[..., 1]
        return np.stack([self.a * q + self.b * v, self.c * q + self.d * v], axis=-1)

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])


@dataclass(frozen=True)
class GaussianState:
    """Gaussian phase-space density with mean (q, v) and 2x2 covariance."""

    mean: tuple[float, float]
    cov: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self):
        c = np.asarray(self.cov, dtype=float)
        if c.shape != (2, 2):
            raise ValueError("cov must be 2x2")
        if abs(c[0, 1] - c[1, 0]) > 1e-12 * max(1.0, abs(c).max()):
            raise ValueError("cov must be symmetric")
        if c[0, 0] <= 0 or np.linalg.det(c) <= 0:
            raise ValueError("cov must be positive definite")

    @classmethod
    def isotropic(cls, sigma: float, mean=(0.0, 0.0)) -> GaussianState:
        var = sigma * sigma
        return cls((float(mean[0]), float(mean[1])), ((var, 0.0), (0.0, var)))

    @property
    def det_cov(self) -> float:
        (p, r), (_, t) = self.cov
        return p * t - r * r


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    return value


def rotation_map(theta: float) -> SymplecticMap:
    theta = _check_finite("theta", theta)
    c, s = math.cos(theta), math.sin(theta)
    return SymplecticMap(c, -s, s, c)


def shear_map(s: float) -> SymplecticMap:
    s = _check_finite("s", s)
    return SymplecticMap(1.0, s, 0.0, 1.0)


def cycle_map(omega: float, t_on: float, t_off: float) -> SymplecticMap:
    """One blinking period: rotate by -omega*t_on, then shear by omega*t_off."""
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if t_on < 0 or t_off < 0:
        raise ValueError("t_on and t_off must be non-negative")
    return shear_map(omega * t_off) @ rotation_map(-omega * t_on)


def spectral_norm(m: SymplecticMap) -> float:
    """Largest singular value, from the trace and determinant of M^T M."""
    g11 = m.a * m.a + m.c * m.c
    g22 = m.b * m.b + m.d * m.d
    tr = g11 + g22
    det = m.det**2
    disc = max(tr * tr - 4.0 * det, 0.0)
    return math.sqrt((tr + math.sqrt(disc)) / 2.0)


def shear_norm(s: float) -> float:
    """Closed-form spectral norm of shear_map(s)."""
    u = 2.0 + s * s
    return math.sqrt((u + math.sqrt(max(u * u - 4.0, 0.0))) / 2.0)


def evolve_gaussian(state: GaussianState, m: SymplecticMap) -> GaussianState:
    mean = m.apply(np.asarray(state.mean))
    mat = m.as_array()
    cov = mat @ np.asarray(state.cov) @ mat.T
    off = 0.5 * (cov[0, 1] + cov[1, 0])
    return GaussianState(
        (float(mean[0]), float(mean[1])),
        ((float(cov[0, 0]), float(off)), (float(off), float(cov[1, 1]))),
    )
