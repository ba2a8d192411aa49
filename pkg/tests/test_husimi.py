import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from triwell.husimi import (
    CoherentTailError,
    WindowTooSmallError,
    classical_contours,
    coherent_alpha,
    coherent_projections,
    coherent_vector,
    husimi_map,
    poisson_tail,
)
from triwell.oscbasis import canonical_matrices, converged_hamiltonian
from triwell.spectral import diagonalize, select_doublet


def states_at(pot, inv_hbar, keep=12):
    hbar = 1.0 / inv_hbar
    return diagonalize(converged_hamiltonian(pot, hbar, 20, 1e-10), keep=keep)


def q_mask(lo, hi):
    return lambda Q, P: (np.abs(Q) >= lo) & (np.abs(Q) < hi)


CENTRAL = q_mask(0.0, 0.8)
LATERAL = q_mask(1.0, np.inf)


class TestCoherentVector:
    def test_vacuum(self):
        v = coherent_vector(0.0, 10)
        assert np.array_equal(v, np.eye(10)[0])

    def test_norm_equals_one_minus_tail(self):
        v = coherent_vector(2.0, 64)  # |alpha|^2 = 4
        tail = poisson_tail(4.0, 64)
        assert tail < 1e-12
        assert np.vdot(v, v).real == pytest.approx(1 - tail, abs=1e-14)

    @given(st.floats(0, 4), st.floats(0, 2 * math.pi))
    def test_matches_closed_form(self, r, phi):
        alpha = r * np.exp(1j * phi)
        v = coherent_vector(alpha, 80)
        n = np.arange(80)
        log_fact = np.array([math.lgamma(k + 1) for k in n])
        ref = np.exp(-0.5 * r * r + n * np.log(r + 1e-300) - 0.5 * log_fact) * np.exp(1j * n * phi)
        ref[0] = math.exp(-0.5 * r * r)
        assert np.allclose(v, ref, rtol=1e-10, atol=1e-15)

    def test_tail_check(self):
        with pytest.raises(CoherentTailError):
            coherent_vector(5.0, 30)
        assert coherent_vector(5.0, 30, check_tail=False).shape == (30,)

    def test_rejects_empty_basis(self):
        with pytest.raises(ValueError):
            coherent_vector(0.1, 0)

    @pytest.mark.parametrize("q,p", [(1.2, -0.4), (-0.7, 2.0)])
    def test_expectation_values_for_qp_labels(self, q, p):
        hbar = 0.3
        N = 120
        v = coherent_vector(coherent_alpha(q, p, hbar), N)
        ops = canonical_matrices(N, hbar)
        assert np.vdot(v, ops.q_matrix @ v).real == pytest.approx(q, abs=1e-10)
        assert np.vdot(v, ops.p_matrix @ v).real == pytest.approx(p, abs=1e-10)

    def test_pq_labels_rotate_phase_space(self):
        hbar, N = 0.3, 120
        v = coherent_vector(coherent_alpha(1.2, -0.4, hbar, "pq"), N)
        ops = canonical_matrices(N, hbar)
        # alpha = (p + i q)/sqrt(2 hbar): the packet sits at position p, momentum q
        assert np.vdot(v, ops.q_matrix @ v).real == pytest.approx(-0.4, abs=1e-10)
        assert np.vdot(v, ops.p_matrix @ v).real == pytest.approx(1.2, abs=1e-10)

    def test_unknown_convention(self):
        with pytest.raises(ValueError):
            coherent_alpha(0, 0, 1.0, "xy")


class TestProjections:
    def test_against_explicit_dot_products(self):
        rng = np.random.default_rng(3)
        states = np.linalg.qr(rng.normal(size=(40, 3)))[0]
        alphas = rng.normal(size=5) + 1j * rng.normal(size=5)
        got = coherent_projections(states, alphas)
        ref = np.array([[np.vdot(coherent_vector(a, 40, check_tail=False), states[:, k]) for k in range(3)] for a in alphas])
        assert np.allclose(got, ref, atol=1e-14)

    def test_single_state(self):
        e0 = np.eye(20)[0]
        got = coherent_projections(e0, np.array([0.5 + 0.5j]))
        assert got.shape == (1,)
        assert got[0] == pytest.approx(math.exp(-0.25))


class TestHusimiMap:
    def test_oscillator_ground_state(self):
        g = husimi_map(np.eye(30)[0], 1.0, (-3, 3), (-3, 3), 61, 61)
        i, j = np.unravel_index(np.argmax(g.values), g.values.shape)
        assert (g.q_axis[i], g.p_axis[j]) == (0.0, 0.0)
        Q, P = np.meshgrid(g.q_axis, g.p_axis, indexing="ij")
        assert np.allclose(g.values, np.exp(-(Q**2 + P**2) / 2), atol=1e-14)

    def test_window_too_small(self):
        with pytest.raises(WindowTooSmallError):
            husimi_map(np.eye(30)[0], 1.0, (-0.5, 0.5), (-0.5, 0.5), 21, 21)

    def test_rejects_unnormalised(self):
        with pytest.raises(ValueError):
            husimi_map(2 * np.eye(30)[0], 1.0)

    @pytest.mark.parametrize("inv_hbar", [8.14, 8.184, 8.24])
    def test_positive_normalised_symmetric(self, poly, inv_hbar):
        spec = states_at(poly, inv_hbar, keep=8)
        for k in range(8):
            g = husimi_map(spec.vectors[:, k], spec.hbar, n_q=129, n_p=129, level_index=k)
            v = g.values
            assert v.min() >= 0
            assert 0.98 <= g.normalization() <= 1.0 + 1e-9
            assert np.abs(v - v[::-1, ::-1]).max() <= 1e-10 * v.max()
            # real eigenstates are also time-reversal symmetric
            assert np.abs(v - v[:, ::-1]).max() <= 1e-10 * v.max()

    def test_metadata(self, poly):
        spec = states_at(poly, 7.0, keep=2)
        g = husimi_map(spec.vectors[:, 1], spec.hbar, n_q=33, n_p=17, level_index=1)
        assert g.values.shape == (33, 17) and g.level_index == 1 and g.convention == "qp"
        assert g.cell_area == pytest.approx((4.4 / 32) * (6.4 / 16))

    def test_even_doublet_member_is_lateral(self, poly):
        spec = states_at(poly, 8.14)
        d = select_doublet(spec)
        g = husimi_map(spec.vectors[:, d.index_plus], spec.hbar)
        assert g.mass_where(CENTRAL) < 0.10
        assert g.mass_where(LATERAL) > 0.85
        i, j = np.unravel_index(np.argmax(g.values), g.values.shape)
        assert abs(abs(g.q_axis[i]) - 1.5) < 0.1 and abs(g.p_axis[j]) < 0.1

    def test_odd_states_intertwined_at_crossing(self, poly):
        spec = states_at(poly, 8.184)
        odd = [k for k in np.flatnonzero(spec.parity == -1) if 0.3 < spec.energies[k] < 0.4]
        assert len(odd) == 2
        for k in odd:
            g = husimi_map(spec.vectors[:, k], spec.hbar)
            assert g.mass_where(CENTRAL) > 0.25
            assert g.mass_where(LATERAL) > 0.25

    def test_localisation_exchange(self, poly):
        # the lower odd level of the triplet starts lateral and ends central;
        # the upper one does the reverse
        lower, upper = [], []
        for x in (8.14, 8.16, 8.184, 8.21, 8.24):
            spec = states_at(poly, x)
            odd = [k for k in np.flatnonzero(spec.parity == -1) if 0.3 < spec.energies[k] < 0.4]
            masses = [husimi_map(spec.vectors[:, k], spec.hbar, n_q=129, n_p=129).mass_where(CENTRAL) for k in odd]
            lower.append(masses[0])
            upper.append(masses[1])
        assert np.all(np.diff(lower) > 0)
        assert np.all(np.diff(upper) < 0)


class TestClassicalContours:
    def test_below_minimum_is_empty(self, poly):
        assert classical_contours(poly, [-2.0]) == [[]]

    def test_central_minimum_is_a_point(self, poly):
        (curves,) = classical_contours(poly, [-1.8225])
        assert len(curves) == 1
        assert curves[0].shape == (1, 2)
        assert np.allclose(curves[0][0], [0.0, 0.0], atol=1e-6)

    def test_zero_energy(self, poly):
        (curves,) = classical_contours(poly, [0.0])
        points = [c for c in curves if len(c) == 1]
        assert len(points) == 2
        assert sorted(float(c[0, 0]) for c in points) == pytest.approx([-1.5, 1.5], abs=1e-5)
        central = [c for c in curves if len(c) > 1]
        assert len(central) == 1
        assert central[0][:, 0].min() == pytest.approx(-0.6, abs=1e-9)
        assert central[0][:, 0].max() == pytest.approx(0.6, abs=1e-9)

    def test_three_closed_curves_below_top(self, poly):
        (curves,) = classical_contours(poly, [0.99])
        assert len(curves) == 3
        for c in curves:
            assert np.allclose(c[0], c[-1], atol=1e-9)  # closed
            H = 0.5 * c[:, 1] ** 2 + poly(c[:, 0])
            assert np.abs(H - 0.99).max() < 1e-9
        spans = sorted((c[:, 0].min(), c[:, 0].max()) for c in curves)
        assert spans[0][1] < spans[1][0] and spans[1][1] < spans[2][0]

    def test_single_curve_above_top(self, poly):
        (curves,) = classical_contours(poly, [1.2])
        assert len(curves) == 1
