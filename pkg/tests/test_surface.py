"""Uniformization of the chain surface: solver certificates, branch
assignment, conformal families, and the gluing contracts."""

import dataclasses

import mpmath as mp
import pytest

from nikstar.counting import SystemShape, sign_phi_infinity
from nikstar.harness import cfg_a
from nikstar.measures import StarSystemConfig, WeightSpec
from nikstar.surface import (
    BranchAssignmentError,
    CombinatorialMismatchError,
    branch_points_check,
    laurent_fit_leading,
    normalize_family,
    preimage_on_sheet,
    preimages_complex,
    preimages_real,
    slit_gluing_mismatch,
    solve_uniformization,
    surface_export,
    walk_targets,
)


def mkcfg(p, ivs, prec=256):
    return StarSystemConfig(
        p=p,
        intervals=tuple((mp.mpf(str(a)), mp.mpf(str(b))) for a, b in ivs),
        weights=tuple(WeightSpec() for _ in ivs),
        precision_bits=prec,
        quad_nodes=32,
    )


@pytest.fixture(scope="module")
def sym2():
    """p=2 with symmetric intervals: the simplest nontrivial chain."""
    cfg = mkcfg(2, [(1, 2), (-2, -1)])
    U = solve_uniformization(cfg)
    fams = {l: normalize_family(U, l) for l in (1, 2)}
    return cfg, U, fams


def test_walk_targets_order():
    ivs = [(mp.mpf(1), mp.mpf(2)), (mp.mpf(-3), mp.mpf(-2)), (mp.mpf(3), mp.mpf(4))]
    assert walk_targets(ivs) == [
        mp.mpf(2), mp.mpf(-3), mp.mpf(4), mp.mpf(3), mp.mpf(-2), mp.mpf(1)
    ]


class TestSolver:
    def test_symmetric_p2(self, sym2):
        cfg, U, _ = sym2
        assert len(U.crit_points) == 4  # 2p critical points: genus-zero count
        vals = sorted(float(v) for v in U.crit_values)
        assert vals == [-2.0, -1.0, 1.0, 2.0]
        res = branch_points_check(U)
        assert res < mp.mpf(2) ** -32

    def test_newton_residual_certificate(self, sym2):
        _, U, _ = sym2
        assert U.newton_residual < mp.mpf(2) ** (-U.precision_bits // 8)

    def test_perturbed_pole_large_residual(self, sym2):
        # sensitivity probe: a 1e-3 pole shift lifts the residual about
        # eighty orders of magnitude above the certificate (to ~7e-5)
        _, U, _ = sym2
        bad = dataclasses.replace(U, poles=tuple(q + mp.mpf("1e-3") for q in U.poles))
        assert branch_points_check(bad) > mp.mpf(10) ** -5

    def test_swapped_residue_signs_mismatch(self, sym2):
        _, U, _ = sym2
        bad = dataclasses.replace(U, residues=tuple(-r for r in U.residues))
        with pytest.raises(CombinatorialMismatchError):
            branch_points_check(bad)

    def test_swapped_pole_order_mismatch(self):
        cfg = mkcfg(3, [(1, 2), (-3, -2), (3, 4)])
        U = solve_uniformization(cfg)
        bad = dataclasses.replace(
            U,
            poles=(U.poles[1], U.poles[0]),
            residues=(U.residues[1], U.residues[0]),
        )
        with pytest.raises(CombinatorialMismatchError):
            branch_points_check(bad)

    def test_origin_touching_interval(self):
        cfg = mkcfg(2, [(0, 1), (-3, -2)])
        U = solve_uniformization(cfg)
        assert branch_points_check(U) < mp.mpf(2) ** -32

    def test_overlapping_non_consecutive(self):
        cfg = mkcfg(3, [(0.5, 2), (-3, -2.5), (1, 4)])
        U = solve_uniformization(cfg)
        assert branch_points_check(U) < mp.mpf(2) ** -32


class TestPreimages:
    def test_round_trip_real(self, sym2):
        _, U, _ = sym2
        with mp.workprec(300):
            for z in (mp.mpf("0.3"), mp.mpf("4.7"), mp.mpf("-0.25"), mp.mpf(0)):
                got = preimages_real(U, z)
                assert set(got) == {0, 1, 2}
                for k, w in got.items():
                    assert abs(U.R(w) - z) < mp.mpf(2) ** -200 * (1 + abs(z))

    def test_round_trip_complex(self, sym2):
        _, U, _ = sym2
        with mp.workprec(300):
            for s in range(8):
                z = mp.mpc("0.4", "0.9") * mp.exp(mp.mpc(0, s) / 3) + mp.mpc(0, "0.2")
                got = preimages_complex(U, z)
                assert set(got) == {0, 1, 2}
                for w in got.values():
                    assert abs(U.R(w) - z) < mp.mpf(2) ** -200 * (1 + abs(z))

    def test_sheet_slit_exclusion(self, sym2):
        _, U, _ = sym2
        with pytest.raises(BranchAssignmentError):
            preimage_on_sheet(U, 0, mp.mpf("1.5"))  # on the sheet-0 slit
        # the same point is fine on sheet 2 (its slit is the negative one)
        with mp.workprec(300):
            w = preimage_on_sheet(U, 2, mp.mpf("1.5"))
            assert abs(U.R(w) - mp.mpf("1.5")) < mp.mpf(2) ** -200

    def test_conjugation_symmetry(self, sym2):
        _, U, fams = sym2
        with mp.workprec(300):
            z = mp.mpc("0.37", "1.2")
            up = preimages_complex(U, z)
            dn = preimages_complex(U, mp.conj(z))
            for k in (0, 1, 2):
                assert abs(dn[k] - mp.conj(up[k])) < mp.mpf(2) ** -200
                f = fams[1]
                assert abs(f.phi(k, mp.conj(z)) - mp.conj(f.phi(k, z))) < mp.mpf(2) ** -200

    def test_branch_point_shared_root(self):
        cfg = mkcfg(2, [(0, 1), (-3, -2)])
        U = solve_uniformization(cfg)
        got = preimages_real(U, mp.mpf(0))
        # the origin is a branch point joining sheets 0 and 1
        assert got[0] == got[1]
        assert abs(U.R(got[0])) < mp.mpf(2) ** -100


class TestFamilies:
    def test_normalization_positive_leading(self, sym2):
        _, _, fams = sym2
        for f in fams.values():
            assert f.omega > 0
            assert f.sign in (-1, 1)

    def test_divisor_laurent_behaviour(self, sym2):
        _, _, fams = sym2
        with mp.workprec(300):
            big = mp.mpf(10) ** 24
            for l, f in fams.items():
                assert abs(big * f.phi(0, big) - f.omega) < mp.mpf(10) ** -20
                assert abs(f.phi(l, big) / big - f.omega_j[l]) < mp.mpf(10) ** -20

    def test_branch_product_unimodular(self, sym2):
        _, U, fams = sym2
        with mp.workprec(300):
            for i in range(10):
                th = 2 * mp.pi * (i + mp.mpf("0.5")) / 10
                z = 3 * mp.exp(mp.mpc(0, th)) + mp.mpc(0, "0.1")
                for f in fams.values():
                    assert abs(f.branch_product(z) - f.sign) < mp.mpf(2) ** -200

    def test_sign_table(self, sym2):
        cfg, _, fams = sym2
        shape = SystemShape(cfg.p)
        for l, f in fams.items():
            for k in range(cfg.p + 1):
                assert int(mp.sign(f.omega_j[k])) == sign_phi_infinity(k, l, shape)

    def test_real_on_gaps(self, sym2):
        _, _, fams = sym2
        # branch values are real on the real line off the respective slits
        for k, x in ((0, mp.mpf("0.5")), (1, mp.mpf("0.5")), (2, mp.mpf("1.5"))):
            v = fams[1].phi(k, x)
            assert mp.im(v) == 0

    def test_laurent_fit_cross_check(self, sym2):
        _, _, fams = sym2
        for l, f in fams.items():
            for k in range(3):
                A, B, C = laurent_fit_leading(f, k)
                est = C if k == 0 else (A if k == l else B)
                assert abs(est - f.omega_j[k]) < abs(f.omega_j[k]) * mp.mpf(10) ** -20

    def test_laurent_fit_radius_doubling(self, sym2):
        _, U, fams = sym2
        f = fams[1]
        r0 = mp.mpf(10) ** 5 * U.scale()
        for k in range(3):
            a1 = laurent_fit_leading(f, k, radius=r0)
            a2 = laurent_fit_leading(f, k, radius=2 * r0)
            idx = 2 if k == 0 else (0 if k == 1 else 1)
            assert abs(a1[idx] - a2[idx]) < abs(a2[idx]) * mp.mpf(10) ** -8

    def test_slit_gluing(self, sym2):
        cfg, U, fams = sym2
        for ks in range(cfg.p):
            a, b = U.intervals[ks]
            for frac in ("0.25", "0.6"):
                x = a + (b - a) * mp.mpf(frac)
                for f in fams.values():
                    assert slit_gluing_mismatch(f, ks, x) < mp.mpf(2) ** -32

    def test_map_ratio_is_conformal(self, sym2):
        # phi^(1)/phi^(2) has exactly one simple zero and one simple pole on
        # the whole surface; count them by winding numbers on a large circle
        # per sheet (the marked points over infinity are the only candidates)
        _, U, fams = sym2
        with mp.workprec(300):
            R0 = 40 * U.scale()
            windings = {}
            for k in range(3):
                total = mp.mpf(0)
                prev = None
                m = 96
                for i in range(m + 1):
                    th = 2 * mp.pi * i / m
                    z = R0 * mp.exp(mp.mpc(0, th))
                    if mp.im(z) == 0:
                        z += mp.mpc(0, R0) * mp.mpf(10) ** -12
                    val = fams[1].phi(k, z) / fams[2].phi(k, z)
                    ang = mp.arg(val)
                    if prev is not None:
                        d = ang - prev
                        while d > mp.pi:
                            d -= 2 * mp.pi
                        while d < -mp.pi:
                            d += 2 * mp.pi
                        total += d
                    prev = ang
                windings[k] = int(mp.nint(total / (2 * mp.pi)))
            # pole over infinity on sheet 1, zero over infinity on sheet 2
            assert abs(windings[1]) == 1 and abs(windings[2]) == 1
            assert windings[1] == -windings[2]
            assert windings[0] == 0


def test_precision_doubling_stability():
    cfg = mkcfg(2, [(1, 2), (-3, -2)])
    U1 = solve_uniformization(cfg, precision_bits=256)
    U2 = solve_uniformization(cfg, precision_bits=512)
    with mp.workprec(560):
        for a, b in zip(U1.crit_points, U2.crit_points):
            assert abs(a - b) < abs(b) * mp.mpf(10) ** -40
        f1 = normalize_family(U1, 1)
        f2 = normalize_family(U2, 1)
        assert abs(f1.omega - f2.omega) < f2.omega * mp.mpf(10) ** -40


def test_export_document(sym2):
    cfg, U, fams = sym2
    doc = surface_export(U, fams)
    assert doc["p"] == 2
    assert len(doc["critical_points"]) == 4
    assert doc["pole_to_sheet"]["0"] == 0
    assert doc["pole_to_sheet"]["inf"] == 2
    assert set(doc["families"]) == {"1", "2"}
