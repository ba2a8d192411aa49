"""Labelled spectra, tunnelling doublets, 1/hbar sweeps and avoided crossings.

Eigenstates of the sextic Hamiltonian are labelled by parity (which index
sub-lattice of the oscillator basis they live on) and by their probability
overlap with coherent states sitting at the bottom of the right lateral well
and of the central well.  A tunnelling doublet is the pair of opposite-parity
states with the largest lateral overlap; its splitting is tracked as hbar
varies.  A plain finite-difference discretisation is provided as an
independent check on the basis method.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy import optimize

from .husimi import Convention, coherent_alpha, coherent_projections, poisson_tail
from .oscbasis import (
    ConvergenceError,
    TruncatedHamiltonian,
    converged_hamiltonian,
)
from .potential import PolynomialPotential, well_analysis

PARITY_RATIO = 1e6
RESIDUAL_FACTOR = 1e-10


class ParityError(RuntimeError):
    """An eigenvector mixes even and odd basis states."""


class DoubletError(ValueError):
    """Not enough sub-barrier levels of both parities to form the doublet."""


class BoxTooSmallError(RuntimeError):
    """Finite-difference levels move when the box is enlarged."""


@dataclass(frozen=True)
class LabeledSpectrum:
    hbar: float
    energies: np.ndarray
    vectors: np.ndarray = field(repr=False)  # columns, basis coefficients
    parity: np.ndarray
    lateral_overlap: np.ndarray
    central_overlap: np.ndarray
    barrier_top: float = math.inf

    def __len__(self) -> int:
        return len(self.energies)

    def of_parity(self, parity: int) -> np.ndarray:
        return np.flatnonzero(self.parity == parity)


@dataclass(frozen=True)
class DoubletRecord:
    hbar: float
    e_plus: float
    e_minus: float
    splitting: float
    n: int = 0
    index_plus: int = -1
    index_minus: int = -1

    @property
    def inv_hbar(self) -> float:
        return 1.0 / self.hbar

    @property
    def tunnelling_time(self) -> float:
        """hbar / dE, the time scale of left-right oscillation."""
        return self.hbar / self.splitting if self.splitting > 0 else math.inf


def coherent_overlaps(
    spec: LabeledSpectrum,
    center_q: float,
    center_p: float,
    convention: Convention = "qp",
) -> np.ndarray:
    """|<alpha0|psi_k>|^2 for every stored level, alpha0 placed at (center_q, center_p)."""
    if not (math.isfinite(center_q) and math.isfinite(center_p)):
        raise ValueError("coherent-state centre must be finite")
    alpha = complex(coherent_alpha(center_q, center_p, spec.hbar, convention))
    amp = coherent_projections(spec.vectors, np.array([alpha]))
    return np.abs(amp[0]) ** 2


def _probe_weights(vectors, hbar, q, p, convention):
    alpha = complex(coherent_alpha(q, p, hbar, convention))
    N = vectors.shape[0]
    tail = poisson_tail(abs(alpha) ** 2, N)
    if tail > 1e-10:
        warnings.warn(
            f"coherent probe at ({q}, {p}) has tail {tail:.1e} outside N={N}",
            RuntimeWarning,
            stacklevel=3,
        )
    return np.abs(coherent_projections(vectors, np.array([alpha]))[0]) ** 2


def diagonalize(
    H: TruncatedHamiltonian,
    keep: Optional[int] = None,
    lateral_center: Optional[tuple[float, float]] = None,
    central_center: tuple[float, float] = (0.0, 0.0),
    convention: Convention = "qp",
) -> LabeledSpectrum:
    """Eigen-decomposition of H with parity and well-character labels.

    The even-index and odd-index blocks are diagonalised separately after
    checking that H does not couple them; this is what makes parity labels
    exact even when two levels of opposite parity nearly coincide.  Only the
    lowest ``keep`` levels are retained (all by default).
    """
    M = H.matrix
    N = H.size
    hmax = float(np.abs(M).max())
    cross = float(np.abs(M[0::2, 1::2]).max()) if N > 1 else 0.0
    if cross > 1e-14 * hmax:
        raise ParityError(f"Hamiltonian couples opposite parities (max {cross:.2e})")

    energies, vectors, parity = [], [], []
    for par, start in ((1, 0), (-1, 1)):
        blk = M[start::2, start::2]
        count = blk.shape[0] if keep is None else min(keep, blk.shape[0])
        if count == 0:
            continue
        w, v = scipy.linalg.eigh(blk, subset_by_index=(0, count - 1))
        full = np.zeros((N, count))
        full[start::2] = v
        energies.append(w)
        vectors.append(full)
        parity.append(np.full(count, par))
    energies = np.concatenate(energies)
    vectors = np.hstack(vectors)
    parity = np.concatenate(parity)
    # stable sort keeps even before odd on exact ties, i.e. index order
    order = np.argsort(energies, kind="stable")
    if keep is not None:
        order = order[:keep]
    energies, vectors, parity = energies[order], vectors[:, order], parity[order]

    _check_parity_purity(vectors, parity)
    resid = np.linalg.norm(M @ vectors - vectors * energies, axis=0)
    bound = RESIDUAL_FACTOR * hmax * N
    if np.any(resid > bound):
        raise np.linalg.LinAlgError(
            f"eigen-residual {resid.max():.2e} above {bound:.2e}"
        )

    if lateral_center is None:
        lateral_center = (H.potential.a, 0.0)
    lat = _probe_weights(vectors, H.hbar, *lateral_center, convention)
    cen = _probe_weights(vectors, H.hbar, *central_center, convention)
    top = well_analysis(H.potential).v_barrier_top
    return LabeledSpectrum(H.hbar, energies, vectors, parity, lat, cen, top)


def _check_parity_purity(vectors: np.ndarray, parity: np.ndarray) -> None:
    even = np.sum(vectors[0::2] ** 2, axis=0)
    odd = np.sum(vectors[1::2] ** 2, axis=0)
    major = np.where(parity > 0, even, odd)
    minor = np.where(parity > 0, odd, even)
    if np.any(minor * PARITY_RATIO > major):
        raise ParityError("eigenvector without a dominant parity sub-lattice")


def labeled_from_matrix(
    matrix: np.ndarray,
    reflection: np.ndarray,
    lateral_probe: np.ndarray,
    central_probe: Optional[np.ndarray] = None,
    hbar: float = math.nan,
) -> LabeledSpectrum:
    """Labelled spectrum of an arbitrary small symmetric model.

    ``reflection`` is the parity operator in the model basis and the probes
    are normalised vectors playing the role of the coherent states.  Useful
    for running few-level models through the same doublet and crossing logic
    as the full Hamiltonian.
    """
    matrix = np.asarray(matrix, dtype=float)
    R = np.asarray(reflection, dtype=float)
    if np.abs(matrix @ R - R @ matrix).max() > 1e-12 * max(1.0, np.abs(matrix).max()):
        raise ParityError("matrix does not commute with the reflection")
    # diagonalise inside each reflection eigenspace so parity is exact
    rw, rv = np.linalg.eigh(R)
    energies, vectors, parity = [], [], []
    for par in (1, -1):
        basis = rv[:, np.abs(rw - par) < 1e-8]
        if basis.shape[1] == 0:
            continue
        w, v = np.linalg.eigh(basis.T @ matrix @ basis)
        energies.append(w)
        vectors.append(basis @ v)
        parity.append(np.full(len(w), par))
    energies = np.concatenate(energies)
    vectors = np.hstack(vectors)
    parity = np.concatenate(parity)
    order = np.argsort(energies, kind="stable")
    energies, vectors, parity = energies[order], vectors[:, order], parity[order]
    lat = (np.asarray(lateral_probe) @ vectors) ** 2
    cen = (
        (np.asarray(central_probe) @ vectors) ** 2
        if central_probe is not None
        else np.zeros_like(lat)
    )
    return LabeledSpectrum(hbar, energies, vectors, parity, lat, cen)


def _ranked(spec: LabeledSpectrum, parity: int) -> np.ndarray:
    idx = spec.of_parity(parity)
    idx = idx[spec.energies[idx] < spec.barrier_top]
    # lexsort: primary key descending overlap, then ascending energy
    order = np.lexsort((spec.energies[idx], -spec.lateral_overlap[idx]))
    return idx[order]


def select_doublet(spec: LabeledSpectrum, n: int = 0) -> DoubletRecord:
    """The n-th tunnelling doublet by the maximal lateral-overlap rule.

    For each parity the sub-barrier levels are ranked by their overlap with
    the lateral coherent state; the level of rank n is taken, ties going to
    the lower energy.
    """
    if n < 0:
        raise ValueError("doublet index must be non-negative")
    plus = _ranked(spec, 1)
    minus = _ranked(spec, -1)
    if len(plus) <= n or len(minus) <= n:
        raise DoubletError(
            f"doublet {n} needs {n + 1} sub-barrier levels of each parity, "
            f"have {len(plus)} even and {len(minus)} odd"
        )
    ip, im = int(plus[n]), int(minus[n])
    ep, em = float(spec.energies[ip]), float(spec.energies[im])
    return DoubletRecord(spec.hbar, ep, em, abs(ep - em), n, ip, im)


def same_parity_gap(spec: LabeledSpectrum, parity: int, n: int = 0) -> float:
    """Distance from the parity member of doublet n to its nearest same-parity level.

    Through an avoided crossing the selected member hops from one branch to
    the other, but this distance is always the gap of the interacting pair,
    so it is continuous and has its minimum at the crossing.
    """
    d = select_doublet(spec, n)
    k = d.index_plus if parity > 0 else d.index_minus
    e = spec.energies[spec.of_parity(parity)]
    others = np.abs(e - spec.energies[k])
    others = others[others > 0]
    if others.size == 0:
        return math.inf
    return float(others.min())


@dataclass
class SweepPoint:
    inv_hbar: float
    hbar: float
    spectrum: Optional[LabeledSpectrum]
    doublet: Optional[DoubletRecord]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class Sweep:
    potential: PolynomialPotential
    n_levels: int
    tol: float
    doublet_index: int
    points: list[SweepPoint]

    @property
    def inv_hbar(self) -> np.ndarray:
        return np.array([pt.inv_hbar for pt in self.points])

    def splittings(self) -> np.ndarray:
        return np.array([pt.doublet.splitting if pt.ok else np.nan for pt in self.points])

    def spectrum_at(self, inv_hbar: float) -> LabeledSpectrum:
        return _spectrum_at(self.potential, inv_hbar, self.n_levels, self.tol)

    def __iter__(self):
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.points)


def _spectrum_at(pot, inv_hbar, n_levels, tol) -> LabeledSpectrum:
    hbar = 1.0 / inv_hbar
    H = converged_hamiltonian(pot, hbar, n_levels, tol)
    return diagonalize(H, keep=max(n_levels, 1))


def _sweep_point(pot, x, n_levels, tol, n) -> SweepPoint:
    try:
        spec = _spectrum_at(pot, x, n_levels, tol)
        return SweepPoint(x, 1.0 / x, spec, select_doublet(spec, n))
    except (ConvergenceError, DoubletError, ParityError, np.linalg.LinAlgError) as exc:
        return SweepPoint(x, 1.0 / x, None, None, f"{type(exc).__name__}: {exc}")


def sweep_hbar(
    pot: PolynomialPotential,
    inv_hbar_grid: Sequence[float],
    n_levels: int = 20,
    tol: float = 1e-9,
    n: int = 0,
    threads: Optional[int] = None,
) -> Sweep:
    """Labelled spectrum and doublet n at each 1/hbar of an ascending grid.

    Failures at individual points are recorded on the point rather than
    raised.  Output order is the grid order whatever the thread count.
    """
    grid = np.asarray(inv_hbar_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("need a non-empty 1-D grid")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("1/hbar grid must be positive and strictly ascending")
    task = lambda x: _sweep_point(pot, float(x), n_levels, tol, n)  # noqa: E731
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(task, grid))
    else:
        points = [task(x) for x in grid]
    return Sweep(pot, n_levels, tol, n, points)


@dataclass(frozen=True)
class AvoidedCrossing:
    inv_hbar_star: float
    min_gap: float
    parity: int


class NoCrossingError(ValueError):
    pass


def _golden_minimum(gap: Callable[[float], float], lo, mid, hi, xtol) -> tuple[float, float]:
    res = optimize.minimize_scalar(gap, bracket=(lo, mid, hi), method="golden", tol=xtol)
    return float(res.x), float(res.fun)


def find_avoided_crossing(
    sweep_or_gap,
    parity: int,
    window: tuple[float, float],
    samples: int = 21,
    xtol: float = 1e-8,
) -> AvoidedCrossing:
    """Minimum same-parity gap in a 1/hbar window, refined by golden section.

    ``sweep_or_gap`` is either a Sweep (the gap is recomputed from fresh
    diagonalisations at trial points) or any callable x -> gap, which lets
    analytic models go through the same detector.
    """
    lo, hi = window
    if not lo < hi:
        raise ValueError("window must be an increasing interval")
    if isinstance(sweep_or_gap, Sweep):
        sw = sweep_or_gap
        xs = sw.inv_hbar
        if lo < xs[0] - 1e-12 or hi > xs[-1] + 1e-12:
            raise ValueError(f"window {window} outside sweep range [{xs[0]}, {xs[-1]}]")
        gap = lambda x: same_parity_gap(sw.spectrum_at(x), parity, sw.doublet_index)  # noqa: E731
    else:
        gap = sweep_or_gap
    xs = np.linspace(lo, hi, samples)
    g = np.array([gap(x) for x in xs])
    i = int(np.argmin(g))
    if i == 0 or i == samples - 1:
        raise NoCrossingError(f"gap has no interior minimum in {window}")
    x, val = _golden_minimum(gap, xs[i - 1], xs[i], xs[i + 1], xtol)
    if not xs[i - 1] <= x <= xs[i + 1]:
        x, val = float(xs[i]), float(g[i])
    return AvoidedCrossing(x, val, parity)


def detect_avoided_crossings(sweep: Sweep, refine: bool = True) -> list[AvoidedCrossing]:
    """All interior local minima of the same-parity gaps along a sweep."""
    xs = sweep.inv_hbar
    found = []
    for parity in (1, -1):
        g = np.array(
            [
                same_parity_gap(pt.spectrum, parity, sweep.doublet_index) if pt.ok else np.nan
                for pt in sweep.points
            ]
        )
        for i in range(1, len(xs) - 1):
            if g[i] < g[i - 1] and g[i] <= g[i + 1]:
                if refine:
                    gap = lambda x: same_parity_gap(  # noqa: E731
                        sweep.spectrum_at(x), parity, sweep.doublet_index
                    )
                    x, val = _golden_minimum(gap, xs[i - 1], xs[i], xs[i + 1], 1e-6)
                    if not xs[i - 1] <= x <= xs[i + 1]:
                        x, val = float(xs[i]), float(g[i])
                else:
                    x, val = float(xs[i]), float(g[i])
                found.append(AvoidedCrossing(x, val, parity))
    return sorted(found, key=lambda c: c.inv_hbar_star)


@dataclass(frozen=True)
class Spike:
    inv_hbar: float
    index: int
    log_excess: float  # ln(splitting / trend)


def valley_indices(log_values: np.ndarray) -> np.ndarray:
    v = log_values
    return np.array(
        [i for i in range(1, len(v) - 1) if v[i] < v[i - 1] and v[i] <= v[i + 1]], dtype=int
    )


def exponential_trend(xs: np.ndarray, log_values: np.ndarray) -> np.ndarray:
    """Local exponential background of a splitting curve.

    The background is the log-linear interpolation between neighbouring
    valley floors (local minima of ln dE); beyond the outermost valleys the
    straight-line fit through all valley floors is used.
    """
    xs = np.asarray(xs)
    v = np.asarray(log_values)
    vi = valley_indices(v)
    if len(vi) == 0:
        slope, icpt = np.polyfit(xs, v, 1)
        return slope * xs + icpt
    if len(vi) == 1:
        slope, icpt = np.polyfit(xs, v, 1)
        return v[vi[0]] + slope * (xs - xs[vi[0]])
    slope, icpt = np.polyfit(xs[vi], v[vi], 1)
    trend = np.interp(xs, xs[vi], v[vi])
    outside = (xs < xs[vi[0]]) | (xs > xs[vi[-1]])
    trend[outside] = slope * xs[outside] + icpt
    return trend


def detect_spikes(xs, splittings, factor: float = 10.0) -> list[Spike]:
    """Local maxima of the splitting exceeding ``factor`` times the trend."""
    xs = np.asarray(xs, dtype=float)
    lv = np.log(np.asarray(splittings, dtype=float))
    trend = exponential_trend(xs, lv)
    out = []
    for i in range(len(xs)):
        left = i == 0 or lv[i] > lv[i - 1]
        right = i == len(xs) - 1 or lv[i] >= lv[i + 1]
        if left and right and lv[i] - trend[i] > math.log(factor):
            out.append(Spike(float(xs[i]), i, float(lv[i] - trend[i])))
    return out


def fd_oracle_spectrum(
    pot: PolynomialPotential,
    hbar: float,
    q_min: Optional[float] = None,
    q_max: Optional[float] = None,
    points: int = 8000,
    n_levels: int = 20,
    richardson: bool = False,
    check_box: bool = False,
    box_tol: float = 1e-9,
) -> np.ndarray:
    """Lowest levels of the three-point finite-difference Hamiltonian.

    Hard walls at q_min and q_max (default +-(a + 2)) with ``points`` interior
    nodes.  With ``richardson`` the O(dq^2) error is removed by combining the
    result with a run at half the node count.  With ``check_box`` the run is
    repeated in a box 20% larger at the same spacing and BoxTooSmallError is
    raised if any level moves by more than box_tol (relative).
    """
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    if q_min is None:
        q_min = -(pot.a + 2.0)
    if q_max is None:
        q_max = pot.a + 2.0
    if points < 3 or not q_min < q_max:
        raise ValueError("need at least 3 interior points and q_min < q_max")

    def levels(lo, hi, m):
        q = np.linspace(lo, hi, m + 2)[1:-1]
        dq = (hi - lo) / (m + 1)
        diag = hbar * hbar / (dq * dq) + pot(q)
        off = np.full(m - 1, -0.5 * hbar * hbar / (dq * dq))
        return scipy.linalg.eigh_tridiagonal(
            diag, off, eigvals_only=True, select="i", select_range=(0, n_levels - 1)
        )

    def solve(lo, hi, m):
        e = levels(lo, hi, m)
        if not richardson:
            return e
        m2 = m // 2
        e2 = levels(lo, hi, m2)
        r = ((m + 1) / (m2 + 1)) ** 2  # (dq_coarse / dq_fine)^2
        return (r * e - e2) / (r - 1.0)

    e = solve(q_min, q_max, points)
    if check_box:
        grow = 0.1 * (q_max - q_min)
        dq = (q_max - q_min) / (points + 1)
        extra = int(round(grow / dq))
        wide = solve(q_min - extra * dq, q_max + extra * dq, points + 2 * extra)
        shift = np.abs(wide - e) / np.maximum(np.abs(e), 1e-12)
        if shift.max() > box_tol:
            raise BoxTooSmallError(
                f"levels shift by {shift.max():.2e} when the box grows 20%"
            )
    return e
