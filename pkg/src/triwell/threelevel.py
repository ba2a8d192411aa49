"""Few-level quasi-mode models of tunnelling through a central well.

Two lateral quasi-modes of energy E, coupled to each other (two-level
model) or each to a central quasi-mode of energy E' (three-level model) by
a tunnelling amplitude delta.  In the three-level model the left and right
modes are not coupled directly, so the antisymmetric combination decouples
and keeps energy E exactly, while the symmetric one mixes with the central
mode.  Sweeping hbar moves E and E' at different rates; where they cross,
the doublet splitting jumps from order delta^2 to order delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

REGIME_FACTOR = 10.0


@dataclass(frozen=True)
class TwoLevel:
    e_plus: float
    e_minus: float
    splitting: float


def two_level(E0: float, delta: float) -> TwoLevel:
    """Eigenvalues of [[E0, delta], [delta, E0]].

    (phi_l + phi_r)/sqrt(2) has energy E0 + delta and (phi_l - phi_r)/sqrt(2)
    has E0 - delta.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    return TwoLevel(E0 + delta, E0 - delta, 2.0 * delta)


def two_level_matrix(E0: float, delta: float) -> np.ndarray:
    return np.array([[E0, delta], [delta, E0]], dtype=float)


@dataclass(frozen=True)
class TripletEigs:
    e1: float
    e2: float
    e3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e1, self.e2, self.e3])


def three_level_matrix(E: float, E_prime: float, delta: float) -> np.ndarray:
    """Basis (left, central, right); no direct left-right coupling."""
    return np.array([[E, delta, 0.0], [delta, E_prime, delta], [0.0, delta, E]], dtype=float)


def three_level_eigs(E: float, E_prime: float, delta: float) -> TripletEigs:
    """Closed-form eigenvalues of the three-level matrix.

    e2 = E; e1 and e3 are (E + E')/2 -+ sqrt((E - E')^2 + 8 delta^2)/2.  The
    root that would suffer cancellation is rewritten through the product
    (e1 - E)(e3 - E) = -2 delta^2, which keeps the small level shift
    2 delta^2 / |E - E'| accurate when delta is tiny.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    d = E_prime - E
    s = math.hypot(d, math.sqrt(8.0) * delta)
    if d >= 0:
        up = 0.5 * (d + s)  # e3 - E
        down = -2.0 * delta * delta / up if up > 0 else 0.0
    else:
        down = 0.5 * (d - s)  # e1 - E
        up = -2.0 * delta * delta / down
    return TripletEigs(E + down, E, E + up)


@dataclass(frozen=True)
class ThreeLevelParams:
    omega_l: float = 5.833
    omega_c: float = 3.656
    n: int = 0
    m: int = 5
    v0: float = -1.8225
    alpha: float = 0.197
    action: float = 0.34

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.action > 0:
            raise ValueError("action must be positive")

    def lateral_energy(self, hbar: float) -> float:
        return hbar * self.omega_l * (self.n + 0.5)

    def central_energy(self, hbar: float) -> float:
        return self.v0 + hbar * self.omega_c * (self.m + 0.5)

    def coupling(self, hbar: float) -> float:
        return self.alpha * hbar * math.exp(-self.action / hbar)


@dataclass(frozen=True)
class ThreeLevelRow:
    inv_hbar: float
    e1: float
    e2: float
    e3: float
    doublet_splitting: float
    regime: str  # "before", "resonant" or "after"


def crossing_inv_hbar(params: ThreeLevelParams) -> Optional[float]:
    """1/hbar at which E(hbar) = E'(hbar), from the linear equation in hbar."""
    rate = params.omega_l * (params.n + 0.5) - params.omega_c * (params.m + 0.5)
    if rate == 0 or params.v0 / rate <= 0:
        return None
    return rate / params.v0


def crossing_inv_hbar_numeric(
    params: ThreeLevelParams, bracket: tuple[float, float]
) -> float:
    """The same crossing found by Brent's method on E - E' over a 1/hbar bracket."""

    def detuning(x):
        h = 1.0 / x
        return params.lateral_energy(h) - params.central_energy(h)

    return optimize.brentq(detuning, *bracket, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def regime(E: float, E_prime: float, delta: float, factor: float = REGIME_FACTOR) -> str:
    """'resonant' within factor*delta of the crossing, else which side of it.

    'before' means the central level is still above the doublet (E' > E), as
    happens at small 1/hbar for the default parameters.
    """
    if abs(E - E_prime) <= factor * delta:
        return "resonant"
    return "before" if E_prime > E else "after"


def doublet_splitting(eigs: TripletEigs, E: float, E_prime: float) -> float:
    """e2 - e1 while the central level lies above the doublet, e3 - e2 once below.

    Exactly at E = E' both differences equal sqrt(2) delta; the full
    resonant gap e3 - e1 = 2 sqrt(2) delta is reported there instead.
    """
    if E_prime > E:
        return eigs.e2 - eigs.e1
    if E_prime < E:
        return eigs.e3 - eigs.e2
    return eigs.e3 - eigs.e1


def sweep_three_level(
    params: ThreeLevelParams, inv_hbar_grid: Sequence[float]
) -> list[ThreeLevelRow]:
    grid = np.asarray(inv_hbar_grid, dtype=float)
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("1/hbar grid must be positive and strictly ascending")
    rows = []
    for x in grid:
        h = 1.0 / x
        E, Ep, d = params.lateral_energy(h), params.central_energy(h), params.coupling(h)
        eig = three_level_eigs(E, Ep, d)
        rows.append(
            ThreeLevelRow(
                float(x),
                float(eig.e1),
                float(eig.e2),
                float(eig.e3),
                float(doublet_splitting(eig, E, Ep)),
                regime(E, Ep, d),
            )
        )
    return rows
