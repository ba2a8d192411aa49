"""Truncated harmonic-oscillator representation of q, p and the sextic Hamiltonian.

The basis is that of the unit-frequency oscillator at the current hbar, so

    q = sqrt(hbar/2) (a + a^dagger),   p = i sqrt(hbar/2) (a^dagger - a).

Truncation to N states corrupts only the last row/column of products, which
is why convergence is controlled by doubling N rather than trusting any
single size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .potential import PolynomialPotential

MIN_HAMILTONIAN_SIZE = 8
START_SIZE = 64
MAX_SIZE = 16384
ABS_FLOOR = 1e-12
ROUNDING_FACTOR = 16.0


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TruncatedOperators:
    size: int
    hbar: float
    q_matrix: np.ndarray
    p_factor: np.ndarray = field(repr=False)  # p = 1j * p_factor, p_factor real antisymmetric

    @property
    def p_matrix(self) -> np.ndarray:
        return 1j * self.p_factor

    def p_squared(self) -> np.ndarray:
        return -(self.p_factor @ self.p_factor)


@dataclass(frozen=True)
class TruncatedHamiltonian:
    size: int
    hbar: float
    matrix: np.ndarray = field(repr=False)
    potential: PolynomialPotential

    def block(self, parity: int) -> np.ndarray:
        """Even-index (parity=+1) or odd-index (parity=-1) sub-block."""
        start = 0 if parity > 0 else 1
        return self.matrix[start::2, start::2]


def canonical_matrices(N: int, hbar: float) -> TruncatedOperators:
    if N < 2:
        raise ValueError(f"need N >= 2, got {N}")
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    off = np.sqrt(0.5 * hbar * np.arange(1, N))
    q = np.diag(off, 1) + np.diag(off, -1)
    p_factor = np.diag(-off, 1) + np.diag(off, -1)
    return TruncatedOperators(N, hbar, q, p_factor)


def assemble_hamiltonian(pot: PolynomialPotential, N: int, hbar: float) -> TruncatedHamiltonian:
    if N < MIN_HAMILTONIAN_SIZE:
        raise ValueError(f"need N >= {MIN_HAMILTONIAN_SIZE} for a degree-6 potential, got {N}")
    ops = canonical_matrices(N, hbar)
    eye = np.eye(N)
    q2 = ops.q_matrix @ ops.q_matrix
    lat = q2 - pot.a**2 * eye
    pot_matrix = (lat @ lat) @ (q2 - pot.b**2 * eye)
    h = 0.5 * ops.p_squared() + pot_matrix
    h = 0.5 * (h + h.T)
    return TruncatedHamiltonian(N, hbar, h, pot)


def _lowest(h: TruncatedHamiltonian, count: int) -> np.ndarray:
    evals = []
    for parity in (1, -1):
        blk = h.block(parity)
        k = min(count, blk.shape[0]) - 1
        if k >= 0:
            evals.append(
                scipy.linalg.eigh(blk, eigvals_only=True, subset_by_index=(0, k))
            )
    return np.sort(np.concatenate(evals))[:count]


def converged_hamiltonian(
    pot: PolynomialPotential,
    hbar: float,
    n_levels: int,
    tol: float = 1e-9,
    start: int = START_SIZE,
    max_size: int = MAX_SIZE,
) -> TruncatedHamiltonian:
    """Smallest Hamiltonian in the doubling sequence whose low spectrum is stable.

    The lowest ``n_levels`` eigenvalues at N and 2N must agree within
    ``max(tol*|E|, 1e-12, 16*eps*max|H_2N|)``; the last term is the rounding
    floor of a dense symmetric eigensolver, below which successive sizes
    cannot agree however large N is.  The size-N matrix is returned.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = start
    if n_levels <= 0:
        return assemble_hamiltonian(pot, n, hbar)
    h = assemble_hamiltonian(pot, n, hbar)
    cur = _lowest(h, n_levels)
    while 2 * n <= max_size:
        h2 = assemble_hamiltonian(pot, 2 * n, hbar)
        nxt = _lowest(h2, n_levels)
        if len(cur) == n_levels:
            floor = max(ABS_FLOOR, ROUNDING_FACTOR * np.finfo(float).eps * np.abs(h2.matrix).max())
            bound = np.maximum(tol * np.abs(nxt), floor)
            if np.all(np.abs(nxt - cur) < bound):
                return h
        n, h, cur = 2 * n, h2, nxt
    raise ConvergenceError(
        f"lowest {n_levels} levels not converged to {tol} by N={max_size} (hbar={hbar})"
    )


def converged_size(
    pot: PolynomialPotential, hbar: float, n_levels: int, tol: float = 1e-9
) -> int:
    return converged_hamiltonian(pot, hbar, n_levels, tol).size
