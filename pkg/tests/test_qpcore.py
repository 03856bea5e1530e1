"""Branch square root, vertical wavenumbers, mode classification, DtN symbols."""
import math

import numpy as np
import pytest

import qpscat as q

K_EX = np.pi / (2 * np.sqrt(2))
ALPHA_EX = (1 - np.pi * np.sqrt(3) / 4, 0.0)


def rotated_principal_sqrt(z):
    """Independent oracle: sqrt via r^(1/2) e^(i phi/2) with arg in (-pi/2, 3pi/2]."""
    z = complex(z)
    phi = math.atan2(z.imag, z.real)
    if phi <= -np.pi / 2:
        phi += 2 * np.pi
    return np.sqrt(abs(z)) * np.exp(0.5j * phi)


class TestBranchSqrt:
    def test_positive_real(self):
        assert q.branch_sqrt(4.0) == pytest.approx(2.0)

    def test_negative_real_maps_to_positive_imaginary(self):
        assert q.branch_sqrt(-4.0) == pytest.approx(2.0j)

    def test_continuity_below_negative_real_axis(self):
        # continuous across the negative real axis from below
        val = q.branch_sqrt(-4 - 0.01j)
        oracle = rotated_principal_sqrt(-4 - 0.01j)
        assert val == pytest.approx(oracle, rel=1e-13)
        assert val.real == pytest.approx(-0.0025, abs=1e-6)
        assert val.imag == pytest.approx(2.0, abs=1e-5)

    def test_square_property_random(self):
        rng = np.random.default_rng(42)
        count = 0
        while count < 10_000:
            z = complex(*rng.uniform(-10, 10, 2))
            if z.real <= 0 and abs(z.real) < 1e-3 * abs(z) and z.imag < 0:
                continue  # stay off the cut
            r = q.branch_sqrt(z)
            assert abs(r * r - z) <= 1e-13 * abs(z)
            assert -np.pi / 4 < np.angle(r) <= 3 * np.pi / 4 or r == 0
            count += 1

    def test_continuity_across_negative_axis(self):
        r = 3.7
        gaps = [abs(q.branch_sqrt(-r + 1j * d) - q.branch_sqrt(-r - 1j * d))
                for d in (1e-3, 1e-6, 1e-9)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-9

    def test_cut_raises(self):
        with pytest.raises(q.CutProximity):
            q.branch_sqrt(-1j)
        with pytest.raises(q.CutProximity):
            q.branch_sqrt(-3.7e5j)

    def test_zero_allowed(self):
        assert q.branch_sqrt(0.0) == 0.0


class TestIncidenceSpec:
    def test_alpha_from_angles(self):
        inc = q.IncidenceSpec.from_angles(2.0, 0.3, 1.1, 1.0)
        expected = 2.0 * np.sin(0.3) * np.array([np.cos(1.1), np.sin(1.1)])
        assert np.allclose(inc.alpha_vec, expected, rtol=0, atol=1e-15)
        assert np.linalg.norm(inc.alpha_vec) <= 2.0

    def test_rejects_bad_wavenumber(self):
        with pytest.raises(ValueError):
            q.IncidenceSpec.from_angles(-1.0, 0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            q.IncidenceSpec.from_alpha(2.0 - 0.1j, (0, 0), 1.0)

    def test_direct_alpha_complex_k_uses_fixed_tilde_theta(self):
        inc = q.IncidenceSpec.from_alpha(2.0, (0.5, -0.2), 1.0)
        inc_e = inc.with_k(2.0 + 0.01j)
        assert np.allclose(inc_e.tilde_theta, inc.tilde_theta)


class TestBeta:
    def test_normal_incidence_zero_order(self):
        inc = q.IncidenceSpec.from_angles(2.0, 0.0, 0.0, 1.0)
        assert q.beta((0, 0), inc) == pytest.approx(2.0)

    def test_guided_mode_order_value(self):
        # k = pi/(2 sqrt 2), alpha = (1 - pi sqrt3/4, 0): order (-1,0) gives i pi/4
        inc = q.IncidenceSpec.from_alpha(K_EX, ALPHA_EX, 1.0)
        assert q.beta((-1, 0), inc) == pytest.approx(1j * np.pi / 4, abs=1e-14)

    def test_evanescent_value(self):
        inc = q.IncidenceSpec.from_angles(2.0, 0.0, 0.0, 1.0)
        assert q.beta((3, 0), inc) == pytest.approx(1j * np.sqrt(5.0))

    def test_real_k_dichotomy_matches_classification(self):
        inc = q.IncidenceSpec.from_angles(1.7, 0.4, 0.9, 1.0)
        cls = q.classify_modes(inc, 4)
        for n in cls.propagating:
            b = q.beta(n, inc)
            assert b.imag == pytest.approx(0.0, abs=1e-12) and b.real > 0
        for n in cls.evanescent:
            b = q.beta(n, inc)
            assert b.real == pytest.approx(0.0, abs=1e-12) and b.imag > 0

    def test_large_order_asymptotics(self):
        # beta_n / (i |n|) -> 1
        inc = q.IncidenceSpec.from_angles(1.7, 0.4, 0.9, 1.0)
        n = (1000, 0)
        assert q.beta(n, inc) / (1j * 1000) == pytest.approx(1.0, rel=1e-2)


class TestMinImBeta:
    def test_positive_on_sample(self):
        inc = q.IncidenceSpec.from_angles(1 + 0.1j, np.pi / 4, 0.0, 1.0)
        assert q.min_im_beta(inc, 20) > 0

    def test_single_mode_value(self):
        # N=0, k=2+i: Im sqrt((2+i)^2) = 1
        inc = q.IncidenceSpec.from_angles(2 + 1j, 0.0, 0.0, 1.0)
        assert q.min_im_beta(inc, 0) == pytest.approx(1.0)

    def test_matches_direct_enumeration(self):
        inc = q.IncidenceSpec.from_alpha(K_EX + 0.01j, ALPHA_EX, 1.0)
        val = q.min_im_beta(inc, 8)
        assert val > 0
        per_mode = [q.beta(n, inc).imag for n in q.mode_range(8)]
        assert val == pytest.approx(min(per_mode))
        assert all(val <= im + 1e-15 for im in per_mode)

    def test_randomized_positivity_grid(self):
        # property of the shifted wavenumber: strictly positive everywhere
        rng = np.random.default_rng(7)
        for _ in range(200):
            k = rng.uniform(0.2, 5.0)
            eps = 10.0 ** rng.uniform(-6, 0)
            t1 = rng.uniform(-1.5, 1.5)
            t2 = rng.uniform(0, 2 * np.pi)
            N = int(rng.integers(0, 21))
            inc = q.IncidenceSpec.from_angles(k + 1j * eps, t1, t2, 1.0)
            assert q.min_im_beta(inc, N) > 0


class TestBetaTable:
    def test_cutoff_rejected(self):
        inc = q.IncidenceSpec.from_alpha(1.0, (0.0, 0.0), 1.0)
        with pytest.raises(q.CutoffViolation):
            q.beta_table(inc, 1)  # |(1,0)+0| = 1 = k exactly

    def test_entries_consistent(self):
        inc = q.IncidenceSpec.from_angles(1.3, 0.2, 0.4, 1.0)
        bt = q.beta_table(inc, 3)
        for n in q.mode_range(3):
            assert bt[n] == q.beta(n, inc)

    def test_complex_k_all_upper_half(self):
        inc = q.IncidenceSpec.from_angles(1.3 + 0.05j, 0.2, 0.4, 1.0)
        bt = q.beta_table(inc, 5)
        assert all(b.imag > 0 for b in bt.entries.values())


class TestClassifyModes:
    def test_guided_scenario_partition(self):
        inc = q.IncidenceSpec.from_alpha(K_EX, ALPHA_EX, 1.0)
        cls = q.classify_modes(inc, 2, tol=1e-9)
        assert sorted(cls.propagating) == [(-0, 0), (0, -1), (0, 1), (1, 0)] \
            or sorted(cls.propagating) == [(0, -1), (0, 0), (0, 1), (1, 0)]
        assert not cls.cutoff_flags

    def test_small_k_only_zero_order(self):
        inc = q.IncidenceSpec.from_alpha(1.0, (0.0, 0.0), 1.0)
        cls = q.classify_modes(inc, 1)
        assert cls.propagating == [(0, 0)]

    def test_exact_cutoff_flagged(self):
        inc = q.IncidenceSpec.from_alpha(1.0, (0.0, 0.0), 1.0)
        cls = q.classify_modes(inc, 1)
        assert (1, 0) in cls.cutoff_flags
        with pytest.raises(q.CutoffViolation):
            q.classify_modes(inc, 1, strict=True)


class TestRayleighEval:
    def test_phase_cancels_on_boundary(self):
        inc = q.IncidenceSpec.from_angles(2.0, 0.1, 0.0, 1.0)
        val = q.rayleigh_eval({(0, 0): 1.0}, "above", inc, (0.0, 0.0, 1.0))
        assert val == pytest.approx(1.0)

    def test_evanescent_decay_factor(self):
        inc = q.IncidenceSpec.from_angles(2.0, 0.0, 0.0, 1.0)
        n = (3, 0)
        b = q.beta(n, inc)
        v1 = q.rayleigh_eval({n: 1.0}, "above", inc, (0.0, 0.0, 1.0))
        v2 = q.rayleigh_eval({n: 1.0}, "above", inc, (0.0, 0.0, 2.0))
        assert abs(v2) / abs(v1) == pytest.approx(np.exp(-abs(b)), rel=1e-12)

    def test_matches_guided_mode_closed_form(self):
        # evanescent tail of the analytic slab mode at x3 = 2
        inc = q.IncidenceSpec.from_alpha(K_EX, ALPHA_EX, 1.0)
        n = (-1, 0)
        coeff = np.cos(np.pi / 4)
        xt = (0.33, -0.7)
        val = q.rayleigh_eval({n: coeff}, "above", inc, (*xt, 2.0))
        a_mode = np.array([ALPHA_EX[0] - 1, 0.0])
        closed = np.cos(np.pi / 4) * np.exp(-np.pi / 4) * np.exp(1j * (a_mode @ xt))
        assert val == pytest.approx(closed, rel=1e-13)

    def test_wrong_side(self):
        inc = q.IncidenceSpec.from_angles(2.0, 0.0, 0.0, 1.0)
        with pytest.raises(q.WrongSide):
            q.rayleigh_eval({(0, 0): 1.0}, "above", inc, (0.0, 0.0, 0.5))
        with pytest.raises(q.WrongSide):
            q.rayleigh_eval({(0, 0): 1.0}, "below", inc, (0.0, 0.0, 0.5))


class TestDtnSymbol:
    def test_zero_order_normal(self):
        inc = q.IncidenceSpec.from_angles(2.0, 0.0, 0.0, 1.0)
        assert q.dtn_symbol((0, 0), "+", inc) == pytest.approx(2j)

    def test_evanescent_symbol_is_real_negative(self):
        inc = q.IncidenceSpec.from_alpha(K_EX, ALPHA_EX, 1.0)
        # i * (i pi/4) = -pi/4
        assert q.dtn_symbol((-1, 0), "+", inc) == pytest.approx(-np.pi / 4, abs=1e-14)

    def test_lower_symbol_negates_upper(self):
        inc = q.IncidenceSpec.from_angles(1.7, 0.4, 0.9, 1.0)
        for n in q.mode_range(3):
            assert q.dtn_symbol(n, "-", inc) == -q.dtn_symbol(n, "+", inc)


def test_d_beta_d_eps_matches_finite_difference():
    inc = q.IncidenceSpec.from_angles(1.7, 0.4, 0.9, 1.0)
    for n in [(0, 0), (2, -1), (-3, 2)]:
        d = q.d_beta_d_eps(n, inc)
        errs = []
        for delta in (1e-5, 1e-6):
            fd = (q.beta(n, inc.with_k(inc.k + 1j * delta)) - q.beta(n, inc)) / delta
            errs.append(abs(fd - d))
        assert errs[1] <= errs[0] + 1e-14  # first-order one-sided difference
        assert errs[1] < 1e-4 * max(abs(d), 1.0)
