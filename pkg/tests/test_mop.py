"""Polynomial engine: orthogonality solves against an independent
monomial-basis oracle, recurrence extraction, second-kind chains, zero sets,
and the norm-ratio identity."""

import mpmath as mp
import pytest

from nikstar.counting import SystemShape, Z, condition_range
from nikstar.harness import cfg_a
from nikstar.measures import MeasureCache, SupportError
from nikstar.mop import (
    MonicPolynomial,
    MopSystem,
    ZeroCountError,
    _full_pivot_solve,
    cheb_eval,
    cheb_to_monomial,
    compute_Qd,
    export_polynomial,
    find_real_roots,
    interlace,
    k_norm_check,
    required_precision_bits,
)

SH2 = SystemShape(2)

# frozen from the independent 320-bit raw-monomial moment solve (the linear
# system assembled directly from power moments, full-pivot eliminated)
Q9_COEFFS = [
    "-3.1145870496078760147670298466887121955729317241638",
    "6.5509666840724437127543490184920630400240593103806",
    "-4.4836555613574812375847830061640210133413531034602",
    "1.0",
]
Q9_ROOTS = [
    "1.108965371708059412590947055223485699271",
    "1.490923747917910745032492060925864321097",
    "1.883766441731511079961343890014670992973",
]


class TestChebHelpers:
    def test_eval_matches_cos(self):
        with mp.workprec(300):
            coeffs = [mp.mpf(0)] * 8 + [mp.mpf(1)]
            u = mp.mpf("0.3")
            assert abs(cheb_eval(coeffs, u) - mp.cos(8 * mp.acos(u))) < mp.mpf(2) ** -280

    def test_to_monomial_round_trip(self):
        with mp.workprec(300):
            mid, half = mp.mpf("1.5"), mp.mpf("0.5")
            coeffs = [mp.mpf(c) for c in ("0.2", "-1.25", "0.5", "2")]
            mono = cheb_to_monomial(coeffs, mid, half)
            tau = mp.mpf("1.813")
            direct = cheb_eval(coeffs, (tau - mid) / half)
            horner = mp.mpf(0)
            for c in reversed(mono):
                horner = horner * tau + c
            assert abs(direct - horner) < mp.mpf(2) ** -280

    def test_full_pivot_solve(self):
        with mp.workprec(300):
            A = [[mp.mpf(v) for v in row] for row in ((2, 1, 0), (1, 3, 1), (0, 1, 4))]
            x_true = [mp.mpf(1), mp.mpf(-2), mp.mpf(3)]
            b = [mp.fsum(A[i][j] * x_true[j] for j in range(3)) for i in range(3)]
            x = _full_pivot_solve(A, b)
            assert all(abs(u - v) < mp.mpf(2) ** -280 for u, v in zip(x, x_true))


class TestRootFinder:
    def test_finds_all_roots(self):
        with mp.workprec(300):
            f = lambda x: (x - 1) * (x - mp.mpf("1.7")) * (x - mp.mpf("2.2"))
            roots = find_real_roots(f, mp.mpf("0.5"), mp.mpf("2.5"), 3, 256)
            assert len(roots) == 3
            assert abs(roots[0] - 1) < mp.mpf(10) ** -40

    def test_count_mismatch_raises(self):
        f = lambda x: x - 1
        with pytest.raises(ZeroCountError):
            find_real_roots(f, mp.mpf("0.5"), mp.mpf("1.5"), 2, 256)
        with pytest.raises(ZeroCountError):
            find_real_roots(f, mp.mpf("0.5"), mp.mpf("1.5"), 0, 256)


class TestOrthogonalitySolve:
    def test_trivial_degrees(self, sysA):
        for n in (0, 1, 2):
            q = sysA.Q(n)
            assert q.d == 0
            assert q.coeffs == (mp.mpf(1),)

    def test_q9_against_frozen_oracle(self, sysA):
        q9 = sysA.Q(9)
        assert q9.d == 3 and q9.ell == 0
        with mp.workprec(300):
            for got, want in zip(q9.coeffs, Q9_COEFFS):
                assert abs(got - mp.mpf(want)) < mp.mpf(10) ** -45
            for got, want in zip(sysA.q_roots(9), Q9_ROOTS):
                assert abs(got - mp.mpf(want)) < mp.mpf(10) ** -35

    def test_live_monomial_oracle(self, cfgA, sysA):
        # same system assembled in the raw monomial basis at higher precision
        n, d = 21, 7
        with mp.workprec(400):
            mc = MeasureCache(cfgA.with_overrides(precision_bits=400))
            rows, rhs = [], []
            for j in range(2):
                mu = mc.nested(0, j)
                moms = [mp.fsum(w * t**s for w, t in zip(mu.weights, mu.nodes))
                        for s in range(2 * d + 2)]
                for s in condition_range(n, j, SH2):
                    rows.append([moms[s + m] for m in range(d)])
                    rhs.append(-moms[s + d])
            oracle = _full_pivot_solve(rows, rhs) + [mp.mpf(1)]
        q = sysA.Q(n)
        assert q.d == d
        for got, want in zip(q.coeffs, oracle):
            assert abs(got - want) < mp.mpf(2) ** -150

    def test_degree_equals_counting_value(self, sysA):
        for n in range(26):
            assert sysA.Q(n).d == Z(n, 0, SH2)

    def test_roots_inside_and_interlacing(self, sysA):
        prev = None
        for n in range(18, 24):
            rr = sysA.q_roots(n)
            assert all(1 < r < 2 for r in rr)
            assert all(rr[i] < rr[i + 1] for i in range(len(rr) - 1))
            if prev is not None:
                assert interlace(prev, rr)
            prev = rr

    def test_orthogonality_residual(self, sysA):
        assert sysA.orthogonality_residual_Q(9) < mp.mpf(2) ** -64
        assert sysA.orthogonality_residual_Q(24) < mp.mpf(2) ** -64

    def test_compute_qd_wrapper(self, cfgA):
        q = compute_Qd(cfgA, 9)
        assert q.d == 3


class TestRecurrence:
    def test_initial_coefficient_exact(self, sysA):
        # tau * Q0 - Q3 = a_2 * Q0 in reduced form forces a_2 = mean of the
        # Lebesgue weight on [1, 2]
        assert abs(sysA.a(2) - mp.mpf(3) / 2) < mp.mpf(2) ** -200

    def test_a12_positive(self, sysA):
        assert sysA.a(12) > 0

    def test_residuals_below_gate(self, sysA):
        for n in (5, 12, 19, 23):
            assert sysA.recurrence_residual(n) < mp.mpf(2) ** -64

    def test_cauchy_sequence_along_periods(self, sysA):
        # convergence oracle: per residue class the tail is Cauchy
        rho = 0
        vals = [sysA.a(6 * lam + rho) for lam in range(2, 8)]
        incs = [abs(vals[i + 1] - vals[i]) for i in range(len(vals) - 1)]
        assert all(incs[i + 1] < incs[i] for i in range(len(incs) - 1))

    def test_star_recurrence_through_lift(self, sysA):
        # z Q_n(z) = Q_{n+1}(z) + a_n Q_{n-p}(z) at star-domain points
        with mp.workprec(sysA.work_bits):
            z = mp.mpc("0.83", "0.41")
            for n in (7, 12, 17):
                lhs = z * sysA.q_star(n, z)
                rhs = sysA.q_star(n + 1, z) + sysA.a(n) * sysA.q_star(n - 2, z)
                assert abs(lhs - rhs) < mp.mpf(2) ** -150 * abs(lhs)


class TestSecondKind:
    def test_base_case_is_polynomial(self, sysA):
        with mp.workprec(sysA.work_bits):
            x = mp.mpf("1.37")
            assert abs(sysA.psi(9, 0, x) - sysA.Q(9).eval_cheb(x)) < mp.mpf(2) ** -200

    def test_zero_count_level_one(self, sysA):
        zs = sysA.psi_zeros(9, 1)
        assert len(zs.zeros) == Z(9, 1, SH2) == 1
        assert -3 < zs.zeros[0] < -2

    def test_zero_sets_interlace(self, sysA):
        z9 = sysA.psi_zeros(9, 1).zeros
        z10 = sysA.psi_zeros(10, 1).zeros
        assert interlace(z9, z10)

    def test_empty_zero_set(self, sysA):
        assert sysA.psi_zeros(1, 1).zeros == ()

    def test_domain_violation(self, sysA):
        with pytest.raises(SupportError):
            sysA.psi(9, 1, mp.mpf("1.5"))

    def test_recurrence_identity_off_interval(self, sysA):
        # psi_n = psi_{n+1} + a_n psi_{n-p} when the residue is below p
        with mp.workprec(sysA.work_bits):
            pts = [mp.mpf("0.3"), mp.mpf(5), mp.mpf(-5), mp.mpc(1, 2),
                   mp.mpc("-2.5", "0.2"), mp.mpf("0.01")]
            n = 12
            a_n = sysA.a(n)
            for k in (1, 2):
                for x in pts:
                    r = sysA.psi(n, k, x) - sysA.psi(n + 1, k, x) - a_n * sysA.psi(n - 2, k, x)
                    assert abs(r) < mp.mpf(2) ** -120 * max(1, abs(sysA.psi(n, k, x)))

    def test_recurrence_identity_top_residue(self, sysA):
        # tau-weighted variant when the residue equals p
        with mp.workprec(sysA.work_bits):
            pts = [mp.mpf("0.3"), mp.mpf(5), mp.mpc(1, 2)]
            n = 11
            a_n = sysA.a(n)
            for k in (1, 2):
                for x in pts:
                    r = x * sysA.psi(n, k, x) - sysA.psi(n + 1, k, x) - a_n * sysA.psi(n - 2, k, x)
                    assert abs(r) < mp.mpf(2) ** -120 * max(1, abs(x * sysA.psi(n, k, x)))

    def test_orthogonality_residual_psi(self, sysA):
        assert sysA.orthogonality_residual_psi(9, 1) < mp.mpf(2) ** -64
        assert sysA.orthogonality_residual_psi(14, 1) < mp.mpf(2) ** -64

    def test_star_lift_identity(self, sysA):
        # z^(k-ell) Psi_{n,k}(z) = psi_{n,k}(z^{p+1}) is the definition of the
        # lift; validate the star recurrence built from it
        with mp.workprec(sysA.work_bits):
            z = mp.mpc("1.21", "0.33")
            n = 12
            a_n = sysA.a(n)
            for k in (1, 2):
                lhs = z * sysA.psi_star(n, k, z)
                rhs = sysA.psi_star(n + 1, k, z) + a_n * sysA.psi_star(n - 2, k, z)
                assert abs(lhs - rhs) < mp.mpf(2) ** -120 * abs(lhs)


class TestNormIdentity:
    def test_residuals(self, sysA):
        assert sysA.k_norm_residual(12, 0) < mp.mpf(10) ** -10
        assert sysA.k_norm_residual(13, 1) < mp.mpf(10) ** -10

    def test_wrapper_and_precondition(self, cfgA, sysA):
        with pytest.raises(ValueError):
            sysA.k_norm_residual(12, 1)
        assert k_norm_check(sysA, 12, 0) < mp.mpf(10) ** -10

    def test_precision_doubling_shrinks_residual(self, cfgA):
        lo = MopSystem(cfgA.with_overrides(precision_bits=256, quad_nodes=64))
        hi = MopSystem(cfgA.with_overrides(precision_bits=512, quad_nodes=64))
        r_lo = lo.k_norm_residual(8, 0)
        r_hi = hi.k_norm_residual(8, 0)
        assert r_hi < r_lo * mp.mpf(2) ** -32


def test_required_precision_policy():
    assert required_precision_bits(60, 2) == 64 + 12 * 20
    assert required_precision_bits(127, 2) == 64 + 12 * 42


def test_export_polynomial(sysA):
    doc = export_polynomial(sysA.Q(9), 256)
    assert doc["degree"] == 3 and doc["n"] == 9 and doc["ell"] == 0
    assert len(doc["coefficients"]) == 4
    assert doc["coefficients"][-1].strip() == "1.0"


def test_interlace_helper():
    assert interlace([1, 3], [2])
    assert interlace([1, 3, 5], [2, 4])
    assert not interlace([1, 2], [3])
    assert not interlace([1, 4], [2, 3])
    assert interlace([], [1])
