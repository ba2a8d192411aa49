"""Exact and semiclassical levels of the piecewise-constant three-well potential.

Inside each constant region the wavefunction is a pair of plane waves
(allowed regions, wavenumber k0 or k_min) or growing/decaying exponentials
(barriers, k_max).  Continuity of psi and psi' at a boundary gives a 2x2
transfer matrix built from three elementary pieces u, v and w.  For states of
definite parity the two hard walls and the matching at the barriers reduce
to one real function of energy per parity,

    D+(E) = F_e F_m+ + G_e G_m+ exp(-2 k_max (b - a)),
    D-(E) = F_e F_m- - G_e G_m- exp(-2 k_max (b - a)),

whose zeros are the exact levels.  F_e = 0 quantises a single lateral well,
F_m+- = 0 the isolated central well; the exponentially small cross term
splits the lateral levels into doublets and mixes them with central levels
at resonances.

Every scalar routine accepts ``dps``: when given, the evaluation runs in
mpmath at that many decimal digits, which is needed once the splitting drops
below double-precision resolution of the level energies (1/hbar beyond ~20).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from types import SimpleNamespace
from typing import Optional, Sequence

import mpmath
import numpy as np
from scipy import optimize

from .potential import SquareWellSpec

_NP = SimpleNamespace(sqrt=np.sqrt, cos=np.cos, sin=np.sin, exp=np.exp, mpf=float)
_MP = SimpleNamespace(
    sqrt=mpmath.sqrt, cos=mpmath.cos, sin=mpmath.sin, exp=mpmath.exp, mpf=mpmath.mpf
)

STRUCTURE_TOL = 1e-12
ROUTE_TOL = 1e-10
ROOT_XTOL = 1e-16
SCAN_FACTOR = 0.02


class StructureError(RuntimeError):
    """A transfer matrix lost the T22 = conj(T11), T21 = conj(T12) form."""


class RouteMismatchError(RuntimeError):
    """Explicit and transfer-matrix evaluations of D disagree."""


class CloseRootsWarning(RuntimeWarning):
    """Two roots of a quantisation function fell within a few scan steps."""


def _check_energy(spec: SquareWellSpec, E) -> None:
    if not (0.0 < E < spec.v_max):
        raise ValueError(f"energy {E} outside (0, v_max={spec.v_max})")


@dataclass(frozen=True)
class Wavenumbers:
    k0: float
    k_min: float
    k_max: float
    energy: float
    hbar: float


def wavenumbers(spec: SquareWellSpec, E, hbar, dps: Optional[int] = None) -> Wavenumbers:
    _check_energy(spec, float(E))
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    lib = _NP if dps is None else _MP
    with _precision(dps):
        E_, h = lib.mpf(E), lib.mpf(hbar)
        return Wavenumbers(
            k0=lib.sqrt(2 * E_) / h,
            k_min=lib.sqrt(2 * (E_ - lib.mpf(spec.v_min))) / h,
            k_max=lib.sqrt(2 * (lib.mpf(spec.v_max) - E_)) / h,
            energy=E,
            hbar=hbar,
        )


class _precision:
    """mpmath working precision when dps is set, no-op otherwise."""

    def __init__(self, dps: Optional[int]):
        self._ctx = mpmath.workdps(dps) if dps is not None else None

    def __enter__(self):
        if self._ctx is not None:
            self._ctx.__enter__()
        return self

    def __exit__(self, *exc):
        if self._ctx is not None:
            return self._ctx.__exit__(*exc)
        return False


# --- elementary matrices -----------------------------------------------------


def u_matrix(alpha: float, k: float) -> np.ndarray:
    """Free propagation by alpha in an allowed region."""
    return np.diag([np.exp(1j * k * alpha), np.exp(-1j * k * alpha)])


def v_matrix(alpha: float, k: float) -> np.ndarray:
    """Exponential growth/decay over alpha under a barrier."""
    return np.diag([np.exp(-k * alpha), np.exp(k * alpha)]).astype(complex)


def w_matrix(k: float, k_tilde: float) -> np.ndarray:
    """Matching of psi and psi' between an evanescent (k) and oscillating (k_tilde) side."""
    if k_tilde == 0:
        raise ZeroDivisionError("w(k, 0): energy sits at a band edge")
    r = 1j * k / k_tilde
    return 0.5 * np.array([[1 - r, 1 + r], [1 + r, 1 - r]])


def elementary_matrices(kind: str, *args: float) -> np.ndarray:
    try:
        builder = {"u": u_matrix, "v": v_matrix, "w": w_matrix}[kind]
    except KeyError:
        raise ValueError(f"kind must be 'u', 'v' or 'w', got {kind!r}") from None
    return builder(*args)


@dataclass(frozen=True)
class Transfer2x2:
    matrix: np.ndarray

    def __matmul__(self, other: "Transfer2x2") -> "Transfer2x2":
        return Transfer2x2(self.matrix @ other.matrix)

    def __getitem__(self, idx):
        return self.matrix[idx]

    @property
    def det(self) -> complex:
        return complex(np.linalg.det(self.matrix))

    def structure_defect(self) -> float:
        """Relative violation of T22 = conj(T11) and T21 = conj(T12)."""
        m = self.matrix
        scale = np.abs(m).max()
        if scale == 0:
            return 0.0
        return float(
            max(abs(m[1, 1] - np.conj(m[0, 0])), abs(m[1, 0] - np.conj(m[0, 1]))) / scale
        )


def barrier_chain(a: float, b: float, ks: Wavenumbers) -> np.ndarray:
    """u_b(k0) w(k_max, k0) v_b(k_max) [u_a(k_min) w(k_max, k_min) v_a(k_max)]^-1."""
    k0, km, kx = ks.k0, ks.k_min, ks.k_max
    t23 = u_matrix(b, k0) @ w_matrix(kx, k0) @ v_matrix(b, kx)
    # [u_a(k_min) w(k_max, k_min) v_a(k_max)]^-1 written out with
    # u_a^-1 = u_-a, v_a^-1 = v_-a and w(k, k')^-1 = conj(w(k', k))
    t34 = v_matrix(-a, kx) @ np.conj(w_matrix(km, kx)) @ u_matrix(-a, km)
    return t23 @ t34


def transfer_T24(spec: SquareWellSpec, E: float, hbar: float, check: bool = True) -> Transfer2x2:
    """Transfer matrix from the central region to the left lateral well."""
    ks = wavenumbers(spec, E, hbar)
    T = Transfer2x2(barrier_chain(spec.a, spec.b, ks))
    if check and T.structure_defect() > STRUCTURE_TOL:
        raise StructureError(f"T(2,4) structure defect {T.structure_defect():.2e} at E={E}")
    return T


def transfer_T64(spec: SquareWellSpec, E: float, hbar: float) -> Transfer2x2:
    """Central region to the right lateral well: the T(2,4) chain with a, b mirrored."""
    ks = wavenumbers(spec, E, hbar)
    return Transfer2x2(barrier_chain(-spec.a, -spec.b, ks))


# --- quantisation functions ---------------------------------------------------


@dataclass(frozen=True)
class _Combo:
    """f(E) = A cos(theta) + B sin(theta) with first and second E-derivatives."""

    f: object
    d1: object
    d2: object


def _combo(lib, A, dA, ddA, B, dB, ddB, th, dth, ddth) -> _Combo:
    c, s = lib.cos(th), lib.sin(th)
    f = A * c + B * s
    d1 = (dA + B * dth) * c + (dB - A * dth) * s
    d2 = (
        (ddA + 2 * dB * dth + B * ddth - A * dth * dth) * c
        + (ddB - 2 * dA * dth - A * ddth - B * dth * dth) * s
    )
    return _Combo(f, d1, d2)


@dataclass(frozen=True)
class QuantizationFunctions:
    """Factor functions and their first two energy derivatives at one (E, hbar)."""

    energy: object
    hbar: object
    F_e: _Combo
    G_e: _Combo
    F_m_plus: _Combo
    G_m_plus: _Combo
    F_m_minus: _Combo
    G_m_minus: _Combo
    k_max: object
    damping: object  # exp(-2 k_max (b - a))

    def F(self, parity: int):
        return self.F_e.f * self.F_m(parity).f

    def G(self, parity: int):
        return self.G_e.f * self.G_m(parity).f

    def F_m(self, parity: int) -> _Combo:
        return self.F_m_plus if parity > 0 else self.F_m_minus

    def G_m(self, parity: int) -> _Combo:
        return self.G_m_plus if parity > 0 else self.G_m_minus

    def F_prime(self, parity: int):
        fm = self.F_m(parity)
        return self.F_e.d1 * fm.f + self.F_e.f * fm.d1

    def F_second(self, parity: int):
        fm = self.F_m(parity)
        return self.F_e.d2 * fm.f + 2 * self.F_e.d1 * fm.d1 + self.F_e.f * fm.d2

    def D(self, parity: int):
        sign = 1 if parity > 0 else -1
        return self.F(parity) + sign * self.G(parity) * self.damping

    @property
    def D_plus(self):
        return self.D(1)

    @property
    def D_minus(self):
        return self.D(-1)


def quantization_functions(
    spec: SquareWellSpec, E, hbar, dps: Optional[int] = None
) -> QuantizationFunctions:
    """All factor functions at energy E; E may be a numpy array when dps is None."""
    lib = _NP if dps is None else _MP
    with _precision(dps):
        E_ = np.asarray(E, dtype=float) if dps is None else mpmath.mpf(E)
        h = lib.mpf(hbar)
        vmax, vmin = lib.mpf(spec.v_max), lib.mpf(spec.v_min)
        a, b, c = lib.mpf(spec.a), lib.mpf(spec.b), lib.mpf(spec.c)
        h2 = h * h
        k0 = lib.sqrt(2 * E_) / h
        km = lib.sqrt(2 * (E_ - vmin)) / h
        kx = lib.sqrt(2 * (vmax - E_)) / h
        dk0, dkm, dkx = 1 / (h2 * k0), 1 / (h2 * km), -1 / (h2 * kx)
        ddk0, ddkm, ddkx = -dk0 * dk0 / k0, -dkm * dkm / km, -dkx * dkx / kx
        L = c - b
        lat = (k0 * L, dk0 * L, ddk0 * L)
        cen = (km * a, dkm * a, ddkm * a)
        k0t, kmt, kxt = (k0, dk0, ddk0), (km, dkm, ddkm), (kx, dkx, ddkx)

        def neg(t):
            return tuple(-x for x in t)

        F_e = _combo(lib, *k0t, *kxt, *lat)
        G_e = _combo(lib, *k0t, *neg(kxt), *lat)
        F_mp = _combo(lib, *kxt, *neg(kmt), *cen)
        G_mp = _combo(lib, *kxt, *kmt, *cen)
        F_mm = _combo(lib, *kmt, *kxt, *cen)
        G_mm = _combo(lib, *kmt, *neg(kxt), *cen)
        damping = lib.exp(-2 * kx * (b - a))
        return QuantizationFunctions(E_, h, F_e, G_e, F_mp, G_mp, F_mm, G_mm, kx, damping)


def _D_transfer(spec: SquareWellSpec, E: float, hbar: float, parity: int) -> float:
    ks = wavenumbers(spec, E, hbar)
    T = transfer_T24(spec, E, hbar).matrix
    phase = np.exp(-1j * ks.k0 * spec.c)
    scale = 2.0 * ks.k0 * ks.k_max * np.exp(-ks.k_max * (spec.b - spec.a))
    if parity > 0:
        return float(np.real((T[0, 0] + T[0, 1]) * phase) * scale)
    return float(-np.imag((T[0, 0] - T[0, 1]) * phase) * scale)


def quantization_D(
    spec: SquareWellSpec,
    E: float,
    hbar: float,
    parity: int,
    route: str = "explicit",
    tol: float = ROUTE_TOL,
) -> float:
    """D_parity(E) by the explicit factor formulas, the transfer matrix, or both.

    With ``route="both"`` the two evaluations must agree to ``tol`` relative
    to the size of the terms F and G exp(-2 k_max (b-a)) that make up D;
    the explicit value is returned.
    """
    _check_energy(spec, E)
    if route == "transfer":
        return _D_transfer(spec, E, hbar, parity)
    qf = quantization_functions(spec, E, hbar)
    d = float(qf.D(parity))
    if route == "explicit":
        return d
    if route != "both":
        raise ValueError(f"route must be explicit, transfer or both, got {route!r}")
    dt = _D_transfer(spec, E, hbar, parity)
    if route_deviation(qf, parity, dt) > tol:
        raise RouteMismatchError(
            f"D{'+' if parity > 0 else '-'}({E}) explicit {d!r} vs transfer {dt!r}"
        )
    return d


def route_deviation(qf: QuantizationFunctions, parity: int, d_transfer: float) -> float:
    scale = abs(float(qf.F(parity))) + abs(float(qf.G(parity) * qf.damping))
    return abs(float(qf.D(parity)) - d_transfer) / scale


# --- root finding -------------------------------------------------------------


def scan_step(spec: SquareWellSpec, hbar: float) -> float:
    return float(hbar) * SCAN_FACTOR * math.sqrt(2.0 * spec.v_max)


def _clip_range(spec, E_range):
    lo, hi = (0.0, spec.v_max) if E_range is None else E_range
    eps = 1e-12 * spec.v_max
    return max(lo, eps), min(hi, spec.v_max - eps)


def _uniform_nodes(lo, hi, step):
    n = max(int(math.ceil((hi - lo) / step)), 1)
    return np.linspace(lo, hi, n + 1)


def _sign_brackets(f, nodes):
    vals = f(nodes)
    s = np.sign(vals)
    out = []
    for i in range(len(nodes) - 1):
        if s[i] == 0:
            out.append((nodes[i], nodes[i]))
        elif s[i] * s[i + 1] < 0:
            out.append((nodes[i], nodes[i + 1]))
    if len(nodes) and s[-1] == 0:
        out.append((nodes[-1], nodes[-1]))
    return out


def _float_roots(f, lo, hi, step, extra_nodes=(), limit=None):
    nodes = _uniform_nodes(lo, hi, step)
    if len(extra_nodes):
        extra = np.asarray(extra_nodes, dtype=float)
        nodes = np.union1d(nodes, extra[(extra > lo) & (extra < hi)])
    roots = []
    for x0, x1 in _sign_brackets(f, nodes)[:limit]:
        if x0 == x1:
            roots.append(float(x0))
        else:
            roots.append(optimize.brentq(f, x0, x1, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps))
    return sorted(set(roots))


def _mp_refine(f_mp, lo, hi, max_iter: int = 1000):
    """Root of f_mp in [lo, hi] (sign change assumed) at the working precision.

    Illinois false position, with a bisection step whenever an iteration fails
    to halve the bracket; roots sitting almost on a bracket end (common for D
    next to a factor root) are reached without stalling.
    """
    a, b = mpmath.mpf(lo), mpmath.mpf(hi)
    fa, fb = f_mp(a), f_mp(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    if fa * fb > 0:
        raise ValueError("bracket does not straddle a sign change")
    tol = mpmath.mpf(10) ** (-(mpmath.mp.dps - 3)) * max(abs(a), abs(b), mpmath.mpf(1e-300))
    side = 0
    for _ in range(max_iter):
        width = b - a
        if width <= tol:
            break
        c = (a * fb - b * fa) / (fb - fa)
        if not a < c < b:
            c = (a + b) / 2
        fc = f_mp(c)
        if fc == 0:
            return c
        if fa * fc < 0:
            b, fb = c, fc
            if side == -1:
                fa /= 2
            side = -1
        else:
            a, fa = c, fc
            if side == 1:
                fb /= 2
            side = 1
        if b - a > width / 2:
            m = (a + b) / 2
            fm = f_mp(m)
            if fm == 0:
                return m
            if fa * fm < 0:
                b, fb = m, fm
            else:
                a, fa = m, fm
            side = 0
    return a if abs(fa) < abs(fb) else b


def _factor(spec, hbar, which: str, dps=None):
    def f(E):
        qf = quantization_functions(spec, E, hbar, dps)
        return {"e": qf.F_e.f, "m+": qf.F_m_plus.f, "m-": qf.F_m_minus.f}[which]

    return f


def factor_roots(
    spec: SquareWellSpec,
    hbar: float,
    which: str,
    E_range: Optional[tuple[float, float]] = None,
    dps: Optional[int] = None,
    max_count: Optional[int] = None,
) -> list:
    """Roots of F_e ("e"), F_m+ ("m+") or F_m- ("m-") in (0, v_max).

    ``max_count`` keeps only the lowest roots, skipping the refinement of
    the rest.
    """
    lo, hi = _clip_range(spec, E_range)
    if not lo < hi:
        return []
    f = _factor(spec, hbar, which)
    step = scan_step(spec, hbar)
    roots = _float_roots(f, lo, hi, step, limit=max_count)
    if dps is None:
        return roots
    with mpmath.workdps(dps):
        fmp = _factor(spec, hbar, which, dps)
        w = 1e-12
        out = []
        for r in roots:
            a_, b_ = max(lo, r - w), min(hi, r + w)
            out.append(_mp_refine(fmp, a_, b_) if fmp(a_) * fmp(b_) < 0 else mpmath.mpf(r))
        return out


@dataclass(frozen=True)
class SemiclassicalLevels:
    doublet_centers: list
    central_even: list
    central_odd: list


def semiclassical_levels(
    spec: SquareWellSpec,
    hbar: float,
    E_range: Optional[tuple[float, float]] = None,
    dps: Optional[int] = None,
) -> SemiclassicalLevels:
    """Doublet centres e_n (F_e = 0) and isolated central-well levels (F_m+- = 0)."""
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    return SemiclassicalLevels(
        factor_roots(spec, hbar, "e", E_range, dps),
        factor_roots(spec, hbar, "m+", E_range, dps),
        factor_roots(spec, hbar, "m-", E_range, dps),
    )


def _midpoints(points):
    p = np.sort(np.asarray(points, dtype=float))
    return 0.5 * (p[1:] + p[:-1])


def _D_callable(spec, hbar, parity, dps=None):
    def D(E):
        return quantization_functions(spec, E, hbar, dps).D(parity)

    return D


def exact_levels(
    spec: SquareWellSpec,
    hbar: float,
    parity: int,
    E_range: Optional[tuple[float, float]] = None,
    dps: Optional[int] = None,
) -> list:
    """Zeros of D_parity in E_range (default all of (0, v_max)), ascending.

    Sign changes are bracketed on a uniform grid of step
    hbar * 0.02 * sqrt(2 v_max), augmented by the roots of the two factors
    of F_parity and the midpoints between consecutive factor roots: near a
    resonance the two zeros of D straddle such a midpoint, so the pair
    cannot hide inside one grid cell.  Roots closer than five grid steps
    trigger a CloseRootsWarning and a 10x finer rescan of their
    neighbourhood.  With ``dps`` each bracket is refined in mpmath.
    """
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    if E_range is not None and E_range[0] >= E_range[1]:
        return []
    lo, hi = _clip_range(spec, E_range)
    if not lo < hi:
        return []
    step = scan_step(spec, hbar)
    m_kind = "m+" if parity > 0 else "m-"
    fac = factor_roots(spec, hbar, "e", (lo, hi)) + factor_roots(spec, hbar, m_kind, (lo, hi))
    fac = sorted(float(r) for r in fac)
    extra = np.concatenate([fac, _midpoints(fac)]) if fac else np.array([])

    if dps is None:
        D = _D_callable(spec, hbar, parity)
        roots = _float_roots(D, lo, hi, step, extra)
        close = [i for i in range(len(roots) - 1) if roots[i + 1] - roots[i] < 5 * step]
        if close:
            warnings.warn(
                f"{len(close)} pair(s) of parity {parity:+d} levels closer than 5 scan steps "
                f"at hbar={hbar}; rescanning 10x finer",
                CloseRootsWarning,
                stacklevel=2,
            )
            for i in close:
                a_, b_ = max(lo, roots[i] - 5 * step), min(hi, roots[i + 1] + 5 * step)
                roots.extend(_float_roots(D, a_, b_, step / 10, extra))
            roots = _dedupe(sorted(roots), 1e-14)
        return roots
    return _mp_levels(spec, hbar, parity, lo, hi, step, m_kind, dps)


def _dedupe(roots, tol):
    out = []
    for r in roots:
        if not out or r - out[-1] > tol:
            out.append(r)
    return out


def _mp_levels(spec, hbar, parity, lo, hi, step, m_kind, dps):
    with mpmath.workdps(dps):
        fac = factor_roots(spec, hbar, "e", (lo, hi), dps) + factor_roots(
            spec, hbar, m_kind, (lo, hi), dps
        )
        fac = sorted(fac)
        mids = [(x + y) / 2 for x, y in zip(fac[:-1], fac[1:])]
        grid = [mpmath.mpf(float(x)) for x in _uniform_nodes(lo, hi, step)]
        # grid nodes within a hair of a factor root would shadow it
        keep = [g for g in grid if all(abs(g - r) > step / 4 for r in fac)]
        nodes = sorted(set(keep) | set(fac) | set(mids))
        D = _D_callable(spec, hbar, parity, dps)
        vals = [D(x) for x in nodes]
        roots = []
        for i in range(len(nodes) - 1):
            if vals[i] == 0:
                roots.append(nodes[i])
            elif vals[i] * vals[i + 1] < 0:
                roots.append(_mp_refine(D, nodes[i], nodes[i + 1]))
        return roots


def _nearest(values, target):
    """Entry of ``values`` closest to target; the lower one on a tie."""
    best = None
    for v in values:
        d = abs(v - target)
        if best is None or d < best[0]:
            best = (d, v)
    return None if best is None else best[1]


@dataclass(frozen=True)
class ExactDoublet:
    hbar: float
    e_n: object
    e_plus: object
    e_minus: object
    splitting: object
    n: int


def _doublet_window(spec, hbar, n, dps):
    centres = factor_roots(spec, hbar, "e", None, dps, max_count=n + 2)
    if len(centres) <= n:
        raise ValueError(f"no doublet {n} below v_max at hbar={hbar}")
    e_n = centres[n]
    lo = 0.0 if n == 0 else float((centres[n - 1] + e_n) / 2)
    hi = spec.v_max if n + 1 >= len(centres) else float((centres[n + 1] + e_n) / 2)
    return e_n, (lo, hi)


def exact_splitting(
    spec: SquareWellSpec, hbar: float, n: int = 0, dps: Optional[int] = None
) -> ExactDoublet:
    """Exact doublet n: the even and odd levels nearest the centre e_n."""
    e_n, window = _doublet_window(spec, hbar, n, dps)
    with warnings.catch_warnings():
        # a near-coincident pair is expected here at a resonance, and the
        # factor-root midpoints already keep the two roots in separate brackets
        warnings.simplefilter("ignore", CloseRootsWarning)
        plus = exact_levels(spec, hbar, 1, window, dps)
        minus = exact_levels(spec, hbar, -1, window, dps)
    if not plus or not minus:
        raise ValueError(f"doublet {n} incomplete at hbar={hbar}")
    ep, em = _nearest(plus, e_n), _nearest(minus, e_n)
    return ExactDoublet(hbar, e_n, ep, em, abs(ep - em), n)


# --- semiclassical splitting and resonance peaks --------------------------------


@dataclass(frozen=True)
class SemiclassicalSplitting:
    hbar: float
    e_n: float
    first_order: float
    peak_bound: float
    intruder_parity: int
    used_formula: str  # "first_order" or "peak"
    value: float

    @property
    def flagged(self) -> bool:
        return self.used_formula == "peak"


def _as_float(x) -> float:
    return float(x)


def semiclassical_splitting(
    spec: SquareWellSpec, hbar: float, n: int = 0, dps: Optional[int] = None
) -> SemiclassicalSplitting:
    """First-order tunnelling splitting of doublet n, with the resonance cap.

    Off resonance, dE = |G-/F'- + G+/F'+| exp(-2 k_max (b-a)) at e_n, with
    F'+- = F_e' F_m+- there (F_e(e_n) = 0).  Each parity term diverges as a
    central level approaches e_n; when a term exceeds the corresponding peak
    height sqrt(|2 G/F''|) exp(-k_max (b-a)) the peak value is used instead.
    """
    centres = factor_roots(spec, hbar, "e", None, dps, max_count=n + 1)
    if len(centres) <= n:
        raise ValueError(f"no doublet {n} below v_max at hbar={hbar}")
    e_n = centres[n]
    qf = quantization_functions(spec, e_n, hbar, dps)
    eps = qf.damping
    terms, bounds = {}, {}
    for s in (1, -1):
        fp = qf.F_e.d1 * qf.F_m(s).f
        terms[s] = qf.G(s) / fp
        # F'' at e_n; F_e(e_n) = 0 removes the F_e F_m'' term
        fpp = qf.F_e.d2 * qf.F_m(s).f + 2 * qf.F_e.d1 * qf.F_m(s).d1
        bounds[s] = abs(2 * qf.G(s) / fpp) ** 0.5 * (eps**0.5)
    first_order = abs(terms[1] + terms[-1]) * eps
    intruder = 1 if abs(qf.F_m(1).f) / abs(qf.F_m(1).d1) < abs(qf.F_m(-1).f) / abs(
        qf.F_m(-1).d1
    ) else -1
    flagged = abs(terms[intruder]) * eps > bounds[intruder]
    value = bounds[intruder] if flagged else first_order
    return SemiclassicalSplitting(
        hbar=hbar,
        e_n=_as_float(e_n),
        first_order=_as_float(first_order),
        peak_bound=_as_float(bounds[intruder]),
        intruder_parity=intruder,
        used_formula="peak" if flagged else "first_order",
        value=_as_float(value),
    )


def log_semiclassical_splitting(spec, hbar, n=0, dps=30) -> float:
    """ln of the off-resonance formula, safe where the value underflows a double."""
    centres = factor_roots(spec, hbar, "e", None, dps, max_count=n + 1)
    with mpmath.workdps(dps):
        qf = quantization_functions(spec, centres[n], hbar, dps)
        t = sum(qf.G(s) / (qf.F_e.d1 * qf.F_m(s).f) for s in (1, -1))
        return float(mpmath.log(abs(t)) - 2 * qf.k_max * (spec.b - spec.a))


@dataclass(frozen=True)
class Resonance:
    inv_hbar: float
    parity: int  # parity of the intruding central level
    e_n: float
    n: int = 0


def _fm_at_centre(spec, x, n, parity):
    centres = factor_roots(spec, 1.0 / x, "e", max_count=n + 1)
    if len(centres) <= n:
        return math.nan
    return float(quantization_functions(spec, centres[n], 1.0 / x).F_m(parity).f)


def locate_resonances(
    spec: SquareWellSpec,
    inv_hbar_range: tuple[float, float],
    n: int = 0,
    step: float = 0.01,
) -> list[Resonance]:
    """Values of 1/hbar where a central level meets e_n, i.e. F_m+-(e_n) = 0."""
    lo, hi = inv_hbar_range
    xs = _uniform_nodes(lo, hi, step)
    found = []
    for parity in (1, -1):
        f = lambda x: _fm_at_centre(spec, x, n, parity)  # noqa: E731
        vals = np.array([f(x) for x in xs])
        for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
            x = optimize.brentq(f, xs[i], xs[i + 1], xtol=1e-13)
            e_n = factor_roots(spec, 1.0 / x, "e", max_count=n + 1)[n]
            found.append(Resonance(float(x), parity, float(e_n), n))
    return sorted(found, key=lambda r: r.inv_hbar)


def resonance_peak_height(
    spec: SquareWellSpec,
    hbar_star: float,
    n: int = 0,
    parity_of_intruder: int = 1,
    dps: Optional[int] = None,
    resonance_tol: float = 1e-6,
):
    """Splitting at an exact resonance from the second-order expansion of D.

    dE = sqrt(-+2 G(e_n) / F''(e_n)) exp(-k_max (b-a)) with
    F'' = 2 F_e'(e_n) F_m'(e_n); the upper sign is for an even intruder.
    """
    s = 1 if parity_of_intruder > 0 else -1
    centres = factor_roots(spec, hbar_star, "e", None, dps, max_count=n + 1)
    if len(centres) <= n:
        raise ValueError(f"no doublet {n} below v_max at hbar={hbar_star}")
    qf = quantization_functions(spec, centres[n], hbar_star, dps)
    fm = qf.F_m(s)
    # relative distance of e_n from the central level, in energy units
    offset = abs(fm.f / fm.d1)
    if offset > resonance_tol:
        raise ValueError(
            f"not at a resonance: central level is {float(offset):.2e} from e_n"
        )
    fpp = 2 * qf.F_e.d1 * fm.d1
    radicand = -s * 2 * qf.G(s) / fpp
    if radicand < 0:
        raise ValueError(
            f"negative radicand {float(radicand):.3e}: intruder parity {s:+d} is wrong"
        )
    lib = _NP if dps is None else _MP
    with _precision(dps):
        return lib.sqrt(radicand) * lib.exp(-qf.k_max * (lib.mpf(spec.b) - lib.mpf(spec.a)))


def _centre_mismatch(spec, x, n, parity, dps):
    """F_m,parity at the doublet centre e_n, as a function of 1/hbar (mpmath)."""
    hbar = 1 / mpmath.mpf(x)
    e_n = factor_roots(spec, hbar, "e", None, dps, max_count=n + 1)[n]
    return quantization_functions(spec, e_n, hbar, dps).F_m(parity).f


def refine_resonance(spec: SquareWellSpec, inv_hbar: float, n: int, parity: int, dps: int):
    """Resonance position 1/hbar* to ``dps`` digits, starting from a float estimate."""
    with mpmath.workdps(dps):
        x0 = mpmath.mpf(inv_hbar)
        f = lambda x: _centre_mismatch(spec, x, n, parity, dps)  # noqa: E731
        step = x0 * mpmath.mpf(1e-9)
        lo, hi = x0 - step, x0 + step
        while f(lo) * f(hi) > 0:
            step *= 4
            lo, hi = x0 - step, x0 + step
        return _mp_refine(f, lo, hi)


def exact_peak(
    spec: SquareWellSpec,
    inv_hbar_bracket: tuple[float, float],
    n: int = 0,
    dps: Optional[int] = None,
    xatol: float = 1e-7,
) -> tuple[float, float]:
    """Location and height of the exact splitting maximum inside a 1/hbar bracket.

    In double precision the maximum is searched directly in 1/hbar.  With
    ``dps`` the resonance is first pinned down in mpmath and the search runs
    over a window a few peak widths wide around it: beyond 1/hbar ~ 20 the
    peak is narrower than the spacing of doubles near 1/hbar.
    """
    if dps is None:

        def neg_log(x):
            return -math.log(exact_splitting(spec, 1.0 / x, n).splitting)

        res = optimize.minimize_scalar(
            neg_log, bounds=inv_hbar_bracket, method="bounded", options={"xatol": xatol}
        )
        return float(res.x), math.exp(-res.fun)

    found = locate_resonances(spec, inv_hbar_bracket, n)
    if len(found) != 1:
        raise ValueError(f"expected one resonance in {inv_hbar_bracket}, found {len(found)}")
    r = found[0]
    with mpmath.workdps(dps):
        xs = refine_resonance(spec, r.inv_hbar, n, r.parity, dps)
        peak = resonance_peak_height(spec, 1 / xs, n, r.parity, dps)
        # rate at which the doublet centre and the central level detune, in energy per 1/hbar
        dx = xs * mpmath.mpf(10) ** (-dps // 3)
        slope = (
            _centre_mismatch(spec, xs + dx, n, r.parity, dps)
            - _centre_mismatch(spec, xs - dx, n, r.parity, dps)
        ) / (2 * dx)
        e_n = factor_roots(spec, 1 / xs, "e", None, dps, max_count=n + 1)[n]
        fm_d1 = quantization_functions(spec, e_n, 1 / xs, dps).F_m(r.parity).d1
        width = 20 * peak / abs(slope / fm_d1)

        def neg_log_t(t):
            x = xs + mpmath.mpf(t) * width
            return -float(mpmath.log(exact_splitting(spec, 1 / x, n, dps).splitting))

        res = optimize.minimize_scalar(
            neg_log_t, bounds=(-1.0, 1.0), method="bounded", options={"xatol": 1e-6}
        )
        return float(xs + mpmath.mpf(res.x) * width), float(mpmath.exp(-res.fun))


def exact_splitting_sweep(
    spec: SquareWellSpec, inv_hbar_grid: Sequence[float], n: int = 0, dps=None
) -> list[ExactDoublet]:
    return [exact_splitting(spec, 1.0 / x, n, dps) for x in inv_hbar_grid]
