"""Acceptance suite: every criterion at its stated tolerance, desk scale.

Each test prints one PASS/FAIL line (run with `pytest -s` to see them all).
The expensive artifacts (the deep coefficient sweep, the three certified
surfaces) are shared session fixtures.
"""

import time

import mpmath as mp
import pytest

from nikstar import counting
from nikstar.counting import SystemShape, Z
from nikstar.harness import run_convergence, run_crossval, run_ratio
from nikstar.limits import LimitTable
from nikstar.mop import MopSystem, interlace
from nikstar.surface import (
    normalize_family,
    preimages_complex,
    slit_gluing_mismatch,
    solve_uniformization,
)


def report(name: str, ok: bool, detail: str = ""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def deep_conv(sysA):
    return run_convergence(sysA, 20)


def test_criterion_1_counting_suite():
    t0 = time.time()
    failures = []
    for p in (2, 3, 4):
        shape = SystemShape(p)
        period = shape.period
        hi = 2 * period
        for n in range(hi + 1):
            if Z(n, 0, shape) != n // (p + 1):
                failures.append(("degree", p, n))
            for k in range(p + 1):
                lhs = Z(n + p + 1, k, shape) - Z(n, k, shape)
                if lhs != counting.lambda_closed_form(n, k, shape):
                    failures.append(("increment", p, n, k))
                d = Z(n + 1, k, shape) - Z(n, k, shape)
                if d not in (-1, 0, 1):
                    failures.append(("unit", p, n, k))
                if d != Z(n + 1 + period, k, shape) - Z(n + period, k, shape):
                    failures.append(("period", p, n, k))
        for rho in range(hi + 1):
            l = rho % p + 1
            for k in range(1, p + 1):
                prod = 1
                for j in range(p + 1):
                    prod *= counting.epsilon(rho - p + j, k, shape)
                if prod != counting.sign_phi_infinity(k, l, shape):
                    failures.append(("sign-window", p, rho, k))
                part = 1
                for j in range(1, k + 1):
                    part *= counting.epsilon(rho, j, shape)
                want = 1 if k % 2 == 1 else counting.epsilon(rho, k, shape)
                if part != want:
                    failures.append(("sign-partial", p, rho, k))
    elapsed = time.time() - t0
    report(
        "criterion 1: exhaustive counting suite, p in {2,3,4}",
        not failures and elapsed < 1.0,
        f"{elapsed:.3f}s, failures: {failures[:3]}",
    )


def test_criterion_2_mop_structural_suite(sysA):
    shape = sysA.shape
    a0, b0 = sysA.config.interval(0)
    tol = mp.mpf(2) ** -64
    ok = True
    detail = []
    prev = None
    worst_orth = mp.mpf(0)
    worst_rec = mp.mpf(0)
    for n in range(61):
        q = sysA.Q(n)  # squareness asserted inside the solve
        if q.d != Z(n, 0, shape):
            ok, detail = False, [f"degree mismatch at n={n}"]
        rr = sysA.q_roots(n)
        if any(not (a0 < r < b0) for r in rr):
            ok, detail = False, [f"root outside interval at n={n}"]
        if any(rr[i + 1] <= rr[i] for i in range(len(rr) - 1)):
            ok, detail = False, [f"roots not simple at n={n}"]
        if prev is not None and not interlace(prev, rr):
            ok, detail = False, [f"interlacing failed at n={n}"]
        prev = rr
        worst_orth = max(worst_orth, sysA.orthogonality_residual_Q(n))
    for n in range(2, 60):
        a_n = sysA.a(n)
        if not a_n > 0:
            ok, detail = False, [f"nonpositive coefficient at n={n}"]
        worst_rec = max(worst_rec, sysA.recurrence_residual(n))
    ok = ok and worst_orth <= tol and worst_rec <= tol
    report(
        "criterion 2: structural suite on the first configuration, n <= 60",
        ok,
        f"worst orthogonality {mp.nstr(worst_orth, 3)}, worst recurrence "
        f"{mp.nstr(worst_rec, 3)}" + ("; " + "; ".join(detail) if detail else ""),
    )


def test_criterion_3_surface_certificates(cfgA, cfgB, cfgC, tableA, tableB, tableC):
    tol = mp.mpf(2) ** -32
    ok = True
    details = []
    for name, cfg, table in (("A", cfgA, tableA), ("B", cfgB, tableB), ("C", cfgC, tableC)):
        U = table.U
        fams = table.families
        with mp.workprec(cfg.precision_bits + 32):
            if U.newton_residual > tol:
                ok = False
                details.append(f"{name}: newton residual {mp.nstr(U.newton_residual, 3)}")
            worst = mp.mpf(0)
            for i in range(100):
                th = 2 * mp.pi * (i + mp.mpf("0.5")) / 100
                z = 2 * U.scale() * mp.exp(mp.mpc(0, th)) + mp.mpc(0, "0.05")
                ws = preimages_complex(U, z)
                for f in fams.values():
                    prod = mp.mpf(1)
                    for w in ws.values():
                        prod = prod * f.moebius(w)
                    worst = max(worst, abs(prod - f.sign))
            if worst > tol:
                ok = False
                details.append(f"{name}: branch product {mp.nstr(worst, 3)}")
            glue = mp.mpf(0)
            for ks in range(cfg.p):
                a, b = U.intervals[ks]
                for frac in ("0.3", "0.62"):
                    x = a + (b - a) * mp.mpf(frac)
                    for f in fams.values():
                        glue = max(glue, slit_gluing_mismatch(f, ks, x))
            if glue > tol:
                ok = False
                details.append(f"{name}: gluing {mp.nstr(glue, 3)}")
            shape = SystemShape(cfg.p)
            for l, f in fams.items():
                for k in range(cfg.p + 1):
                    if int(mp.sign(f.omega_j[k])) != counting.sign_phi_infinity(k, l, shape):
                        ok = False
                        details.append(f"{name}: sign table at (k,l)=({k},{l})")
        # stability of every limit under doubling to 512 bits
        U2 = solve_uniformization(cfg, precision_bits=512)
        table2 = LimitTable(cfg.with_overrides(precision_bits=512), uniformization=U2)
        with mp.workprec(560):
            drift = mp.mpf(0)
            for r in range(table.period):
                drift = max(drift, abs(table.a_of(r) - table2.a_of(r)) / abs(table2.a_of(r)))
            for l in fams:
                f2 = normalize_family(U2, l)
                for k in range(cfg.p + 1):
                    drift = max(drift, abs(fams[l].omega_j[k] - f2.omega_j[k]) / abs(f2.omega_j[k]))
            if drift > mp.mpf(10) ** -10:
                ok = False
                details.append(f"{name}: doubling drift {mp.nstr(drift, 3)}")
    report(
        "criterion 3: surface certificates for the three desk configurations",
        ok, "; ".join(details) if details else "residuals within 2^-32, stable to 1e-10",
    )


def test_criterion_4_cross_validation(cfgA, sysA, tableA, deep_conv):
    cross = run_crossval(cfgA, 20, system=sysA, table=tableA, conv=deep_conv)
    ok = cross.passed
    details = []
    worst = max(cross.discrepancies.values())
    if not ok:
        details.append("crossval records failed")
    if not all(v > 0 for v in deep_conv.estimates.values()):
        ok = False
        details.append("nonpositive estimate")
    with mp.workprec(300):
        s_rec = abs(
            (deep_conv.estimates[0] + deep_conv.estimates[1])
            - (deep_conv.estimates[3] + deep_conv.estimates[4])
        )
        if s_rec > mp.mpf("1e-3"):
            ok = False
            details.append(f"recurrence sum rule {mp.nstr(s_rec, 3)}")
        if tableA.sum_rule_residual() > mp.mpf("1e-12"):
            ok = False
            details.append("surface sum rule")
        gap = tableA.distinctness_gap()
        if gap <= mp.mpf("1e-6"):
            ok = False
            details.append(f"distinctness gap {mp.nstr(gap, 3)}")
    report(
        "criterion 4: recurrence limits match surface predictions (lambda 20)",
        ok,
        f"worst discrepancy {mp.nstr(worst, 3)}, recurrence sum rule {mp.nstr(s_rec, 3)}"
        + ("; " + "; ".join(details) if details else ""),
    )


def test_criterion_5_origin_dichotomy(cfgB, sysB, tableA, tableB):
    ok = True
    details = []
    with mp.workprec(300):
        c1 = abs(tableB.a_of(0) - tableB.a_of(2))
        c2 = abs(tableB.a_of(3) - tableB.a_of(5))
        if c1 > mp.mpf("1e-12") or c2 > mp.mpf("1e-12"):
            ok = False
            details.append(f"collisions {mp.nstr(c1, 3)}, {mp.nstr(c2, 3)}")
        # consistent recurrence estimates for the origin-touching configuration
        cross = run_crossval(cfgB, 12, system=sysB, table=tableB)
        if not cross.passed:
            ok = False
            details.append("origin-touching crossval failed")
        # away from the origin all p+1 values are distinct with margin
        for rho in range(6):
            vals = [tableA.a_of(rho + 2 * m) for m in range(3)]
            gap = min(
                abs(vals[i] - vals[j]) for i in range(3) for j in range(i + 1, 3)
            )
            if gap <= mp.mpf("1e-6"):
                ok = False
                details.append(f"margin at rho={rho}")
    report(
        "criterion 5: equality when an interval touches the origin, distinctness otherwise",
        ok, "; ".join(details) if details else
        f"collision residuals {mp.nstr(c1, 3)}, {mp.nstr(c2, 3)}",
    )


def test_criterion_6_ratio_asymptotics(cfgA, sysA, tableA):
    ok = True
    details = []
    worst_overall = mp.mpf(0)
    for rho in (0, 2, 5):
        rr = run_ratio(cfgA, rho, 20, system=sysA, table=tableA, lambdas=[10, 15, 20])
        for k, dev in rr.sup_deviation.items():
            worst_overall = max(worst_overall, dev)
            if dev > mp.mpf("1e-2"):
                ok = False
                details.append(f"rho={rho}, k={k}: {mp.nstr(dev, 3)}")
        for k in (0, 1, 2):
            devs = [row[3] for row in rr.rows if row[2] == k]
            if not all(devs[i + 1] <= devs[i] for i in range(len(devs) - 1)):
                ok = False
                details.append(f"not decreasing at rho={rho}, k={k}")
    report(
        "criterion 6: ratio limits on the 20-point grid, decreasing in the period index",
        ok,
        f"sup deviation {mp.nstr(worst_overall, 3)}"
        + ("; " + "; ".join(details) if details else ""),
    )


def test_criterion_7_norm_identity(sysA):
    pairs = [(n, n % 2) for n in range(10, 16)]
    worst = mp.mpf(0)
    for n, k in pairs:
        worst = max(worst, sysA.k_norm_residual(n, k))
    report(
        "criterion 7: coefficient equals the weighted-norm ratio on 6 index pairs",
        worst <= mp.mpf("1e-10"),
        f"worst residual {mp.nstr(worst, 3)}",
    )


def test_criterion_8_boundary_constancy(tableA):
    ok = True
    details = []
    worst = mp.mpf(0)
    for rho in (0, 1, 2):
        for k in (0, 1):
            dev = tableA.boundary_constancy_check(rho, k)
            worst = max(worst, dev)
            if dev > mp.mpf("1e-8"):
                ok = False
                details.append(f"rho={rho}, k={k}: {mp.nstr(dev, 3)}")
    ctrl = tableA.boundary_constancy_check(0, 0, perturb_center=mp.mpf("1.01"))
    if ctrl <= mp.mpf("1e-3"):
        ok = False
        details.append(f"negative control too weak: {mp.nstr(ctrl, 3)}")
    report(
        "criterion 8: slit-modulus combinations constant, perturbation control detected",
        ok,
        f"max deviation {mp.nstr(worst, 3)}, control {mp.nstr(ctrl, 3)}"
        + ("; " + "; ".join(details) if details else ""),
    )
