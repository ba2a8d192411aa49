"""Fast self-checks of every module, run by ``triwell verify``.

Each check is small enough that the whole table finishes in a few seconds;
the test suite runs the same properties more thoroughly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check_wells():
    from .potential import PolynomialPotential, well_analysis

    g = well_analysis(PolynomialPotential(1.5, 0.6))
    ok = abs(g.omega_l - 5.833) < 1e-3 and abs(g.omega_c - 3.656) < 1e-3
    return ok, f"omega_l={g.omega_l:.5f} omega_c={g.omega_c:.5f}"


def _check_basis_vs_fd():
    from .oscbasis import converged_hamiltonian
    from .potential import PolynomialPotential
    from .spectral import diagonalize, fd_oracle_spectrum

    pot = PolynomialPotential(1.5, 0.6)
    hbar = 1.0 / 6.0
    spec = diagonalize(converged_hamiltonian(pot, hbar, 10, 1e-10), keep=10)
    fd = fd_oracle_spectrum(pot, hbar, -3.5, 3.5, points=3000, n_levels=10, richardson=True)
    rel = float(np.max(np.abs(spec.energies[:10] - fd) / np.maximum(np.abs(fd), 1e-12)))
    return rel < 1e-5, f"max relative deviation {rel:.2e}"


def _check_doublet():
    from .oscbasis import converged_hamiltonian
    from .potential import PolynomialPotential
    from .spectral import diagonalize, select_doublet

    pot = PolynomialPotential(1.5, 0.6)
    spec = diagonalize(converged_hamiltonian(pot, 0.1, 20, 1e-9), keep=20)
    d = select_doublet(spec, 0)
    sorted_ok = bool(np.all(np.diff(spec.energies) >= 0))
    ok = sorted_ok and d.splitting > 0 and set(spec.parity[[d.index_plus, d.index_minus]]) == {1, -1}
    return ok, f"splitting at 1/hbar=10: {d.splitting:.4e}"


def _check_husimi():
    from .husimi import husimi_map
    from .oscbasis import converged_hamiltonian
    from .potential import PolynomialPotential
    from .spectral import diagonalize

    pot = PolynomialPotential(1.5, 0.6)
    hbar = 1.0 / 8.0
    spec = diagonalize(converged_hamiltonian(pot, hbar, 4, 1e-9), keep=4)
    worst_sym, worst_norm, min_val = 0.0, 0.0, math.inf
    for k in range(2):
        g = husimi_map(spec.vectors[:, k], hbar, n_q=65, n_p=65)
        v = g.values
        scale = v.max()
        worst_sym = max(worst_sym, np.abs(v - v[::-1, :]).max() / scale, np.abs(v - v[:, ::-1]).max() / scale)
        worst_norm = max(worst_norm, abs(g.normalization() - 1.0))
        min_val = min(min_val, v.min())
    ok = min_val >= 0 and worst_norm < 0.02 and worst_sym < 1e-10
    return ok, f"min={min_val:.1e} norm error={worst_norm:.1e} mirror defect={worst_sym:.1e}"


def _check_transfer():
    from .potential import SquareWellSpec
    from .transfer import (
        _D_transfer,
        quantization_functions,
        route_deviation,
        transfer_T24,
        u_matrix,
        v_matrix,
        w_matrix,
    )

    spec = SquareWellSpec()
    rng = np.random.default_rng(7)
    worst_route, worst_struct = 0.0, 0.0
    for _ in range(10):
        E = rng.uniform(0.02, 0.98) * spec.v_max
        hbar = 1.0 / rng.uniform(6.0, 16.0)
        qf = quantization_functions(spec, E, hbar)
        for parity in (1, -1):
            worst_route = max(worst_route, route_deviation(qf, parity, _D_transfer(spec, E, hbar, parity)))
        worst_struct = max(worst_struct, transfer_T24(spec, E, hbar, check=False).structure_defect())
    k, kt, al = 1.7, 2.3, 0.4
    ident = max(
        np.abs(u_matrix(al, kt) @ u_matrix(-al, kt) - np.eye(2)).max(),
        np.abs(v_matrix(al, k) @ v_matrix(-al, k) - np.eye(2)).max(),
        np.abs(w_matrix(k, kt) @ np.conj(w_matrix(kt, k)) - np.eye(2)).max(),
    )
    ok = worst_route < 1e-10 and worst_struct < 1e-12 and ident < 1e-14
    return ok, f"route {worst_route:.1e} structure {worst_struct:.1e} identities {ident:.1e}"


def _check_square_splitting():
    from .potential import SquareWellSpec
    from .transfer import exact_splitting, semiclassical_splitting

    spec = SquareWellSpec()
    hbar = 1.0 / 12.0
    ex = exact_splitting(spec, hbar, 0)
    sc = semiclassical_splitting(spec, hbar, 0)
    r = abs(math.log(float(sc.value) / float(ex.splitting)))
    return ex.splitting > 0 and r < 0.2, f"|ln(semiclassical/exact)| at 1/hbar=12: {r:.2e}"


def _check_three_level():
    from .threelevel import (
        ThreeLevelParams,
        crossing_inv_hbar,
        crossing_inv_hbar_numeric,
        three_level_eigs,
        three_level_matrix,
    )

    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(500):
        E, Ep = rng.uniform(-2, 2, 2)
        d = 10 ** rng.uniform(-8, 0)
        ref = np.linalg.eigvalsh(three_level_matrix(E, Ep, d))
        worst = max(worst, np.abs(three_level_eigs(E, Ep, d).as_array() - ref).max())
    eig = three_level_eigs(0.3, 0.3, 0.01)
    resonant = abs((eig.e3 - eig.e1) - 2 * math.sqrt(2) * 0.01)
    p = ThreeLevelParams()
    x = crossing_inv_hbar(p)
    cross = abs(x - crossing_inv_hbar_numeric(p, (x - 1, x + 1)))
    ok = worst < 1e-13 and resonant < 1e-15 and cross < 1e-10
    return ok, f"eigs {worst:.1e} resonant gap {resonant:.1e} crossing {cross:.1e}"


CHECKS: list[tuple[str, Callable]] = [
    ("potential.well_frequencies", _check_wells),
    ("oscbasis.finite_difference_oracle", _check_basis_vs_fd),
    ("spectral.doublet_labels", _check_doublet),
    ("husimi.positivity_norm_mirror", _check_husimi),
    ("transfer.routes_structure_identities", _check_transfer),
    ("transfer.semiclassical_vs_exact", _check_square_splitting),
    ("threelevel.closed_form", _check_three_level),
]


def run_checks() -> list[CheckResult]:
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # noqa: BLE001 - a crash is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
