"""Closed-form predictions: thermal widths, trap frequency, array scale and
long-run survival of a blinking trap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal

from scipy import integrate, special

from .phasespace import shear_norm
from .resonance import resonant_ton_np1

K_B = 1.380649e-23  # J/K, exact SI
RB87_MASS = 1.44316e-25  # kg

Convention = Literal["gauss", "erf"]


@dataclass(frozen=True)
class AtomSpec:
    mass: float = RB87_MASS
    temperature: float = 0.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be non-negative, got {self.temperature}")

    @property
    def sigma(self) -> float:
        return sigma_from_temperature(self)


@dataclass(frozen=True)
class AnalyticTrap:
    """Harmonic trap with a hard energy cutoff at radius cutoff_d.

    alpha rescales the cutoff radius to absorb anharmonicity and technical
    imperfections. depth_U0, when given, must agree with omega and cutoff_d
    for the atom mass passed to check_depth.
    """

    omega: float
    cutoff_d: float
    depth_U0: float | None = None
    alpha: float = 1.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if not self.cutoff_d > 0:
            raise ValueError("cutoff_d must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    @classmethod
    def from_depth(cls, depth_U0: float, cutoff_d: float, mass: float = RB87_MASS, alpha: float = 1.0):
        return cls(omega_from_trap(depth_U0, cutoff_d, mass), cutoff_d, depth_U0, alpha)

    def check_depth(self, mass: float, rtol: float = 1e-6) -> None:
        if self.depth_U0 is None:
            return
        expected = omega_from_trap(self.depth_U0, self.cutoff_d, mass)
        if abs(expected - self.omega) > rtol * self.omega:
            raise ValueError(
                f"depth {self.depth_U0:.4g} J and cutoff {self.cutoff_d:.4g} m imply "
                f"omega={expected:.6g} rad/s, not {self.omega:.6g}"
            )


@dataclass(frozen=True)
class ScalingReport:
    M: int
    P_worst: float
    M_eff: float
    M_eff_star: int
    lifetime_factor: float


@dataclass(frozen=True)
class ScalingPoint:
    t_off: float
    t_on: float
    M: int
    P_worst: float
    M_eff: float
    M_eff_star: int
    accessible: bool


def sigma_from_temperature(atom: AtomSpec) -> float:
    return math.sqrt(K_B * atom.temperature / atom.mass)


def omega_from_trap(depth_U0: float, cutoff_d: float, mass: float) -> float:
    """Frequency of the harmonic well whose energy reaches zero at radius d."""
    if depth_U0 <= 0 or cutoff_d <= 0 or mass <= 0:
        raise ValueError("depth, cutoff and mass must all be positive")
    return math.sqrt(2.0 * depth_U0 / (mass * cutoff_d**2))


def gaussian_mass(x: float, convention: Convention = "gauss") -> float:
    """Probability mass of a 1D Gaussian tail cut at x.

    "gauss" is the mass within +-x standard deviations, erf(x/sqrt(2));
    "erf" is the bare erf(x).
    """
    if convention == "gauss":
        return float(special.erf(x / math.sqrt(2.0)))
    if convention == "erf":
        return float(special.erf(x))
    raise ValueError(f"unknown convention {convention!r}")


def max_atoms(t_on: float, t_off: float) -> int:
    if not t_on > 0:
        raise ValueError(f"t_on must be positive, got {t_on}")
    if t_off < 0:
        raise ValueError(f"t_off must be non-negative, got {t_off}")
    # guard against (a+b)/a landing a hair below an integer
    return int(math.floor((t_on + t_off) / t_on * (1.0 + 1e-12)))


def worst_survival(
    trap: AnalyticTrap,
    atom: AtomSpec,
    t_off: float,
    n_p: int = 1,
    convention: Convention = "gauss",
    lifetime_loss: float = 0.0,
) -> float:
    """Long-run survival bound after the accumulated shear of n_p periods."""
    if n_p < 1:
        raise ValueError("n_p must be >= 1")
    if not 0 <= lifetime_loss <= 1:
        raise ValueError("lifetime_loss must lie in [0, 1]")
    sigma = atom.sigma
    lifetime_factor = 1.0 - lifetime_loss
    if sigma == 0.0 or math.isinf(trap.cutoff_d):
        return lifetime_factor
    n_b = (n_p + 1) / 2.0
    norm = shear_norm(n_b * trap.omega * t_off)
    if math.isinf(norm):
        return 0.0
    x = trap.alpha * trap.omega * trap.cutoff_d / (sigma * norm)
    return gaussian_mass(x, convention) * lifetime_factor


def release_recapture_survival(s: float, cutoff_over_sigma: float, n_axes: int = 1) -> float:
    """Exact capture probability of an isotropic Gaussian after a shear s.

    An atom survives when |T(s) u| < c in phase-space units of sigma, where
    u is standard normal per axis and c = omega*d/sigma. With n_axes=2 both
    transverse axes share one radial cutoff.
    """
    c2 = cutoff_over_sigma**2
    norm = shear_norm(s)
    lam1, lam2 = norm**2, norm**-2
    if n_axes == 1:
        # integrate over the minor-axis coordinate z2, closed form along z1
        zmax = math.sqrt(c2 / lam2)

        def integrand(z2):
            rem = max(c2 - lam2 * z2 * z2, 0.0)
            return special.erf(math.sqrt(rem / lam1 / 2.0)) * math.exp(-z2 * z2 / 2.0)

        val, _ = integrate.quad(integrand, 0.0, min(zmax, 40.0), limit=200, epsabs=1e-13)
        return min(val * 2.0 / math.sqrt(2.0 * math.pi), 1.0)
    if n_axes == 2:
        # A = z1^2+z3^2 and B = z2^2+z4^2 are chi^2_2; P(lam1*A + lam2*B < c^2)
        b_max = c2 / lam2
        kappa = 0.5 * (1.0 - lam2 / lam1)
        tail = b_max if kappa == 0.0 else -math.expm1(-kappa * b_max) / kappa
        return float(-math.expm1(-b_max / 2.0) - 0.5 * math.exp(-c2 / (2.0 * lam1)) * tail)
    raise ValueError("n_axes must be 1 or 2")


def effective_scaling(
    trap: AnalyticTrap,
    atom: AtomSpec,
    t_on: float,
    t_off: float,
    n_p: int = 1,
    convention: Convention = "gauss",
    lifetime_loss: float = 0.0,
    m_override: int | None = None,
) -> ScalingReport:
    """Array scale discounted by long-run survival.

    m_override replaces the maximal scale with a demonstrated array size,
    which must not exceed it.
    """
    m_max = max_atoms(t_on, t_off)
    if m_override is None:
        m = m_max
    else:
        if not 1 <= m_override <= m_max:
            raise ValueError(f"m_override={m_override} outside [1, {m_max}]")
        m = m_override
    p = worst_survival(trap, atom, t_off, n_p, convention, lifetime_loss)
    m_eff = m * p
    return ScalingReport(m, p, m_eff, int(math.floor(m_eff + 1e-12)), 1.0 - lifetime_loss)


def scaling_curve(
    trap: AnalyticTrap,
    atom: AtomSpec,
    t_off_values: Iterable[float],
    t_rise: float = 0.0,
    n_p: int = 1,
    convention: Convention = "gauss",
    lifetime_loss: float = 0.0,
) -> list[ScalingPoint]:
    """Scale and survival along the k=0, n_p=1 resonance line.

    Points whose resonant t_on is shorter than t_rise are flagged inaccessible.
    """
    rows = []
    for t_off in t_off_values:
        t_on = resonant_ton_np1(trap.omega, t_off, 0)
        rep = effective_scaling(trap, atom, t_on, t_off, n_p, convention, lifetime_loss)
        rows.append(
            ScalingPoint(t_off, t_on, rep.M, rep.P_worst, rep.M_eff, rep.M_eff_star, t_on >= t_rise)
        )
    if not rows:
        raise ValueError("t_off_values must be non-empty")
    return rows
