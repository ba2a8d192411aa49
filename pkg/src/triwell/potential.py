"""Three-well potentials and the classical quantities derived from them.

Two families are provided: the smooth sextic

    V(q) = (q^2 - a^2)^2 (q^2 - b^2),      b < a,

with lateral minima at q = +-a and a deeper central minimum at q = 0, and a
piecewise-constant analogue with hard walls at |q| = c.  Mass is fixed to one
everywhere; hbar enters only through the quantization helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Union

import numpy as np
from scipy import integrate, optimize


@dataclass(frozen=True)
class PolynomialPotential:
    a: float = 1.5
    b: float = 0.6

    def __post_init__(self):
        if not (0.0 < self.b < self.a):
            raise ValueError(
                f"need 0 < b < a for a three-well shape, got a={self.a}, b={self.b}"
            )

    def __call__(self, q):
        q2 = np.multiply(q, q)
        return (q2 - self.a**2) ** 2 * (q2 - self.b**2)

    def derivative(self, q):
        q = np.asarray(q, dtype=float)
        a2, b2 = self.a**2, self.b**2
        return 2.0 * q * (q * q - a2) * (3.0 * q * q - a2 - 2.0 * b2)

    def second_derivative(self, q):
        q = np.asarray(q, dtype=float)
        a2, b2 = self.a**2, self.b**2
        # d/dq of 6 q^5 - 4(2a^2+b^2) q^3 + 2(a^4+2a^2 b^2) q
        return 30.0 * q**4 - 12.0 * (2 * a2 + b2) * q**2 + 2.0 * (a2 * a2 + 2 * a2 * b2)

    def coefficients(self):
        """Monomial coefficients, highest degree first (numpy.roots order)."""
        a2, b2 = self.a**2, self.b**2
        return np.array(
            [1.0, 0.0, -(2 * a2 + b2), 0.0, a2 * a2 + 2 * a2 * b2, 0.0, -a2 * a2 * b2]
        )


@dataclass(frozen=True)
class SquareWellSpec:
    """Piecewise-constant three-well potential.

    Hard walls at |q| = c, barriers of height ``v_max`` on a < |q| < b, a floor
    ``v_min`` on |q| < a and zero potential on b < |q| < c.
    """

    a: float = 0.55
    b: float = 1.25
    c: float = 1.75
    v_max: float = 1.0
    v_min: float = -1.82

    def __post_init__(self):
        if not (0.0 < self.a < self.b < self.c):
            raise ValueError(f"need 0 < a < b < c, got {self.a}, {self.b}, {self.c}")
        if not self.v_max > 0.0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if not self.v_min < 0.0:
            raise ValueError(f"v_min must be negative, got {self.v_min}")

    def __call__(self, q):
        x = np.abs(np.asarray(q, dtype=float))
        return np.select(
            [x < self.a, x < self.b, x < self.c],
            [self.v_min, self.v_max, 0.0],
            default=np.inf,
        )

    @property
    def barrier_width(self) -> float:
        return self.b - self.a

    @property
    def lateral_width(self) -> float:
        return self.c - self.b


@dataclass(frozen=True)
class WellGeometry:
    q_lateral: float
    q_central: float
    v_min_central: float
    q_barrier_top: float
    v_barrier_top: float
    omega_l: float
    omega_c: float


@dataclass(frozen=True)
class BarrierAction:
    value: float
    energy: float
    turning_points: tuple[float, float]


def eval_potential(pot: PolynomialPotential, q):
    return pot(q)


def well_analysis(pot: PolynomialPotential) -> WellGeometry:
    a, b = pot.a, pot.b
    # V' = 2q(q^2-a^2)(3q^2-a^2-2b^2) changes sign exactly once on (b, a);
    # V'(a) = 0 as well, so the bracket stops short of the lateral minimum
    hi = a - 1e-9 * (a - b)
    q_top = optimize.bisect(
        lambda q: float(pot.derivative(q)), b, hi, xtol=1e-15, rtol=1e-13
    )
    return WellGeometry(
        q_lateral=a,
        q_central=0.0,
        v_min_central=-(a**4) * b**2,
        q_barrier_top=q_top,
        v_barrier_top=float(pot(q_top)),
        omega_l=math.sqrt(8.0 * a * a * (a * a - b * b)),
        omega_c=math.sqrt(4.0 * a * a * b * b + 2.0 * a**4),
    )


def _cos_map(f, lo: float, hi: float, epsrel: float) -> float:
    """Integrate f over [lo, hi] through q = mid - half*cos(t).

    The Jacobian half*sin(t) cancels the square-root behaviour of the
    integrand at simple turning points, leaving a smooth integrand in t.
    """
    if hi <= lo:
        return 0.0
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)

    def g(t):
        return f(mid - half * math.cos(t)) * half * math.sin(t)

    val, _ = integrate.quad(g, 0.0, math.pi, epsabs=0.0, epsrel=epsrel, limit=200)
    return val


def _level_crossing(pot, energy: float, lo: float, hi: float) -> float:
    """Root of V(q) = energy on [lo, hi]; endpoints allowed to be roots."""
    flo = float(pot(lo)) - energy
    fhi = float(pot(hi)) - energy
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    return optimize.brentq(lambda q: float(pot(q)) - energy, lo, hi, xtol=1e-15, rtol=1e-15)


def barrier_turning_points(pot: PolynomialPotential, energy: float) -> tuple[float, float]:
    """Turning points bracketing the right barrier at the given energy."""
    geo = well_analysis(pot)
    if energy >= geo.v_barrier_top:
        return geo.q_barrier_top, geo.q_barrier_top
    inner = _level_crossing(pot, energy, pot.b, geo.q_barrier_top)
    outer = _level_crossing(pot, energy, geo.q_barrier_top, pot.a)
    return inner, outer


def barrier_action(
    potential: Union[PolynomialPotential, SquareWellSpec], energy: float
) -> BarrierAction:
    """Imaginary action under the right barrier, integral of sqrt(2(V - E)).

    Valid between the lateral-well floor (0) and the barrier top; the value
    vanishes at the top.
    """
    if isinstance(potential, SquareWellSpec):
        if not (0.0 <= energy <= potential.v_max):
            raise ValueError(f"energy {energy} outside [0, v_max={potential.v_max}]")
        value = math.sqrt(2.0 * (potential.v_max - energy)) * potential.barrier_width
        return BarrierAction(value, energy, (potential.a, potential.b))

    geo = well_analysis(potential)
    if not (0.0 <= energy <= geo.v_barrier_top):
        raise ValueError(
            f"energy {energy} outside [0, barrier top={geo.v_barrier_top}]"
        )
    qr, qr2 = barrier_turning_points(potential, energy)

    def integrand(q):
        return math.sqrt(max(2.0 * (float(potential(q)) - energy), 0.0))

    value = _cos_map(integrand, qr, qr2, epsrel=1e-11)
    return BarrierAction(value, energy, (qr, qr2))


def _well_turning_points(pot: PolynomialPotential, energy: float, well: str):
    geo = well_analysis(pot)
    if well == "central":
        if energy <= geo.v_min_central:
            return None
        q = _level_crossing(pot, energy, 0.0, geo.q_barrier_top)
        return -q, q
    if well == "lateral":
        if energy <= 0.0:
            return None
        inner = _level_crossing(pot, energy, geo.q_barrier_top, pot.a)
        hi = pot.a + 1.0
        while float(pot(hi)) < energy:
            hi *= 2.0
        outer = _level_crossing(pot, energy, pot.a, hi)
        return inner, outer
    raise ValueError(f"well must be 'lateral' or 'central', got {well!r}")


def well_action(pot: PolynomialPotential, energy: float, well: str) -> float:
    """Closed-orbit action 2 * integral of sqrt(2(E - V)) across one well."""
    tp = _well_turning_points(pot, energy, well)
    if tp is None:
        return 0.0

    def integrand(q):
        return math.sqrt(max(2.0 * (energy - float(pot(q))), 0.0))

    return 2.0 * _cos_map(integrand, tp[0], tp[1], epsrel=1e-12)


def ebk_levels(
    pot: PolynomialPotential,
    hbar: float,
    well: Literal["lateral", "central"] = "lateral",
    n_max: int = 10,
) -> list[float]:
    """EBK energies below the barrier top for quantum numbers 0..n_max.

    Each level solves well_action(E) = 2 pi hbar (n + 1/2) by bracketed root
    finding; quantum numbers whose action exceeds the separatrix value are
    dropped, so the list may be shorter than n_max + 1 (or empty).
    """
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    geo = well_analysis(pot)
    floor = 0.0 if well == "lateral" else geo.v_min_central
    top = geo.v_barrier_top * (1.0 - 1e-12)
    s_top = well_action(pot, top, well)
    levels = []
    for n in range(n_max + 1):
        target = 2.0 * math.pi * hbar * (n + 0.5)
        if target >= s_top:
            break
        e = optimize.brentq(
            lambda e: well_action(pot, e, well) - target,
            floor, top, xtol=1e-14, rtol=1e-13,
        )
        levels.append(e)
    return levels
