"""Coherent states, Husimi phase-space maps and classical energy contours.

A coherent state of the unit-frequency oscillator at a given hbar is

    |alpha> = exp(-|alpha|^2/2) sum_n alpha^n / sqrt(n!) |n>,

and the Husimi density of a state psi at a phase-space point is
|<alpha(q, p)|psi>|^2.  Two labellings of phase space are supported:

``"qp"`` (default)
    alpha = (q + i p) / sqrt(2 hbar).  With q = sqrt(hbar/2)(a + a^dagger)
    this puts <q> = q and <p> = p, so a state centred at (q, p) really sits
    at position q.
``"pq"``
    alpha = (p + i q) / sqrt(2 hbar).  Kept for comparison with plots that
    use this labelling; with the operator conventions above it places the
    packet at position p and momentum q, i.e. the two labels trade places.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.stats import poisson

from .potential import PolynomialPotential

Convention = Literal["qp", "pq"]
TAIL_TOL = 1e-12
NORM_TOL = 0.02


class CoherentTailError(ValueError):
    """The coherent state has non-negligible weight beyond the truncated basis."""


class WindowTooSmallError(ValueError):
    """The Husimi window misses a noticeable part of the state's mass."""


def coherent_alpha(q, p, hbar: float, convention: Convention = "qp"):
    scale = 1.0 / math.sqrt(2.0 * hbar)
    if convention == "qp":
        return (np.asarray(q) + 1j * np.asarray(p)) * scale
    if convention == "pq":
        return (np.asarray(p) + 1j * np.asarray(q)) * scale
    raise ValueError(f"unknown convention {convention!r}")


def poisson_tail(mean: float, N: int) -> float:
    """Weight of a Poisson(mean) distribution at n >= N."""
    return float(poisson.sf(N - 1, mean)) if N > 0 else 1.0


def coherent_vector(alpha: complex, N: int, check_tail: bool = True) -> np.ndarray:
    """Coefficients exp(-|alpha|^2/2) alpha^n / sqrt(n!) for n < N.

    Built by the recursion c_n = c_{n-1} alpha / sqrt(n), which never forms
    alpha^n or n! separately and so cannot overflow.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    alpha = complex(alpha)
    mean = abs(alpha) ** 2
    if check_tail:
        tail = poisson_tail(mean, N)
        if tail > TAIL_TOL:
            raise CoherentTailError(
                f"coherent state |alpha|^2={mean:.4g} leaves tail mass {tail:.2e} beyond N={N}"
            )
    c = np.empty(N, dtype=complex)
    c[0] = math.exp(-0.5 * mean)
    for n in range(1, N):
        c[n] = c[n - 1] * alpha / math.sqrt(n)
    return c


def coherent_projections(states: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """<alpha_j|psi_k> for every alpha in ``alphas`` and every column of ``states``.

    The recursion is vectorised over alpha; the conjugate coefficients are
    accumulated basis state by basis state so memory stays O(len(alphas)).
    """
    states = np.asarray(states)
    single = states.ndim == 1
    if single:
        states = states[:, None]
    alphas = np.asarray(alphas, dtype=complex).ravel()
    N = states.shape[0]
    conj_a = np.conj(alphas)
    coeff = np.exp(-0.5 * np.abs(alphas) ** 2).astype(complex)
    out = np.outer(coeff, states[0])
    for n in range(1, N):
        coeff = coeff * conj_a / math.sqrt(n)
        out += np.outer(coeff, states[n])
    return out[:, 0] if single else out


@dataclass(frozen=True)
class HusimiGrid:
    q_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray = field(repr=False)  # shape (n_q, n_p)
    hbar: float
    level_index: int | None = None
    convention: str = "qp"

    @property
    def cell_area(self) -> float:
        return float((self.q_axis[1] - self.q_axis[0]) * (self.p_axis[1] - self.p_axis[0]))

    def normalization(self) -> float:
        """Cell-sum estimate of the phase-space integral divided by 2 pi hbar."""
        return float(self.values.sum() * self.cell_area / (2.0 * math.pi * self.hbar))

    def mass_where(self, mask_fn) -> float:
        """Normalised mass in the region where mask_fn(Q, P) is true."""
        Q, P = np.meshgrid(self.q_axis, self.p_axis, indexing="ij")
        sel = mask_fn(Q, P)
        return float(self.values[sel].sum() * self.cell_area / (2.0 * math.pi * self.hbar))


def husimi_map(
    state: np.ndarray,
    hbar: float,
    q_range: tuple[float, float] = (-2.2, 2.2),
    p_range: tuple[float, float] = (-3.2, 3.2),
    n_q: int = 256,
    n_p: int = 256,
    convention: Convention = "qp",
    level_index: int | None = None,
    norm_tol: float = NORM_TOL,
) -> HusimiGrid:
    """Husimi density of ``state`` on a uniform (q, p) grid.

    Raises WindowTooSmallError when the grid misses more than ``norm_tol`` of
    the state's phase-space mass.
    """
    state = np.asarray(state)
    norm = float(np.vdot(state, state).real)
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"state is not normalised (norm^2 = {norm})")
    q_axis = np.linspace(q_range[0], q_range[1], n_q)
    p_axis = np.linspace(p_range[0], p_range[1], n_p)
    Q, P = np.meshgrid(q_axis, p_axis, indexing="ij")
    alphas = coherent_alpha(Q, P, hbar, convention)
    amp = coherent_projections(state, alphas.ravel())
    values = (np.abs(amp) ** 2).reshape(n_q, n_p)
    grid = HusimiGrid(q_axis, p_axis, values, hbar, level_index, convention)
    mass = grid.normalization()
    if not (1.0 - norm_tol <= mass <= 1.0 + norm_tol):
        raise WindowTooSmallError(
            f"Husimi window captures {mass:.4f} of the state (tolerance {norm_tol})"
        )
    return grid


def _merge_close(roots: np.ndarray, tol: float) -> np.ndarray:
    out: list[float] = []
    for r in np.sort(roots):
        if out and r - out[-1] < tol:
            out[-1] = 0.5 * (out[-1] + r)
        else:
            out.append(float(r))
    return np.array(out)


def _allowed_intervals(pot: PolynomialPotential, energy: float) -> list[tuple[float, float]]:
    """Maximal q intervals with V(q) <= energy, from the real roots of V - E."""
    coeffs = pot.coefficients()
    coeffs[-1] -= energy
    roots = np.roots(coeffs)
    scale = max(1.0, pot.a)
    real = roots[np.abs(roots.imag) < 1e-6 * scale].real
    # tangencies (double roots) come back as close pairs, sometimes with tiny
    # imaginary parts; they are merged into one point
    pts = _merge_close(real, 1e-5 * scale)
    if pts.size == 0:
        return []
    intervals = []
    # the sextic is positive for large |q|, so allowed regions lie between roots
    edges = [-np.inf, *pts, np.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        if not (np.isfinite(lo) and np.isfinite(hi)):
            continue
        if float(pot(0.5 * (lo + hi))) <= energy:
            intervals.append((lo, hi))
    # isolated tangent points (E equal to a local minimum) are components too
    for r in pts:
        inside = any(lo <= r <= hi for lo, hi in intervals)
        if not inside and abs(float(pot(r)) - energy) <= 1e-9 * max(1.0, abs(energy)):
            intervals.append((r, r))
    # adjacent intervals sharing an endpoint (a barrier-top tangency) merge
    intervals.sort()
    merged: list[list[float]] = []
    for lo, hi in intervals:
        if merged and lo - merged[-1][1] < 1e-9 * scale:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(float(lo), float(hi)) for lo, hi in merged]


def classical_contours(
    pot: PolynomialPotential, energies, n_points: int = 400
) -> list[list[np.ndarray]]:
    """Closed level curves H(q, p) = E for each energy.

    Each curve is an (M, 2) array of (q, p) vertices traversed as the upper
    branch left to right, then the lower branch back; degenerate components
    (E at a well bottom) are returned as a single vertex.
    """
    out = []
    for energy in np.atleast_1d(energies):
        curves = []
        for lo, hi in _allowed_intervals(pot, float(energy)):
            if hi - lo <= 0.0:
                curves.append(np.array([[lo, 0.0]]))
                continue
            # cosine spacing puts more vertices near the turning points
            t = np.linspace(0.0, math.pi, n_points)
            q = 0.5 * (lo + hi) - 0.5 * (hi - lo) * np.cos(t)
            p = np.sqrt(np.maximum(2.0 * (energy - pot(q)), 0.0))
            upper = np.column_stack([q, p])
            lower = np.column_stack([q[::-1], -p[::-1]])
            curves.append(np.vstack([upper, lower[1:]]))
        out.append(curves)
    return out
