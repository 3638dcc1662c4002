"""Reduced multiple orthogonal polynomials, recurrence coefficients, and
functions of the second kind.

The star polynomial of index n factors as z^ell Q_d(z^{p+1}) with
d = Z(n, 0), so everything here works in the reduced variable tau on the
first interval.  Q_d is the monic solution of the square linear system of
orthogonality conditions against the nested measures mu_{0,j}; the linear
algebra runs in a scaled Chebyshev basis of the interval (the raw monomial
Hankel system loses a multiple of d in bits, the Chebyshev one does not),
with a full-pivot solve and a mandatory a posteriori residual check.

The second-kind functions are evaluated through their recursive quadrature
form, caching values at the nodes of each interval, and their zeros are
located by sign scan plus bisection, with the zero count checked against
the exact combinatorial value Z(n, k).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import mpmath as mp

from .counting import SystemShape, Z, condition_range, count_Mj, residue_ell
from .measures import (
    DiscretizedMeasure,
    MeasureCache,
    StarSystemConfig,
    SupportError,
    working_prec,
)


class MopError(RuntimeError):
    pass


class SingularSystemError(MopError):
    """The orthogonality system could not be solved at working precision."""


class ResidualError(MopError):
    """An a posteriori residual exceeded its tolerance (precision exhausted)."""


class ZeroCountError(MopError):
    """The located zero set does not have the predicted cardinality."""


class NonpositiveCoefficientError(MopError):
    """A recurrence coefficient came out <= 0."""


# ---------------------------------------------------------------------------
# Chebyshev helpers on [a, b] through u = (2 tau - a - b) / (b - a)
# ---------------------------------------------------------------------------

def cheb_eval(coeffs, u):
    """Clenshaw evaluation of sum coeffs[m] T_m(u)."""
    b1 = b2 = mp.mpf(0)
    for c in reversed(coeffs[1:]):
        b1, b2 = 2 * u * b1 - b2 + c, b1
    return u * b1 - b2 + coeffs[0]


def cheb_mul_u(coeffs):
    """Coefficient vector of u * poly, via u T_m = (T_{m+1} + T_{|m-1|})/2."""
    n = len(coeffs)
    out = [mp.mpf(0)] * (n + 1)
    for m, c in enumerate(coeffs):
        if c == 0:
            continue
        out[m + 1] += c / 2
        out[abs(m - 1)] += c / 2
    return out


def cheb_mul_tau(coeffs, mid, half):
    """Coefficient vector of tau * poly with tau = mid + half*u."""
    shifted = cheb_mul_u(coeffs)
    out = [half * c for c in shifted]
    for m, c in enumerate(coeffs):
        out[m] += mid * c
    return out


def cheb_to_monomial(coeffs, mid, half):
    """Ascending monomial coefficients in tau of sum coeffs[m] T_m(u(tau))."""
    d = len(coeffs) - 1
    # power coefficients in u
    powers = [mp.mpf(0)] * (d + 1)
    t_prev = [mp.mpf(1)]
    t_cur = [mp.mpf(0), mp.mpf(1)]
    powers[0] += coeffs[0]
    if d >= 1:
        for i, c in enumerate(t_cur):
            powers[i] += coeffs[1] * c
    for m in range(2, d + 1):
        t_next = [mp.mpf(0)] + [2 * c for c in t_cur]
        for i, c in enumerate(t_prev):
            t_next[i] -= c
        for i, c in enumerate(t_next):
            powers[i] += coeffs[m] * c
        t_prev, t_cur = t_cur, t_next
    # substitute u = (tau - mid)/half, Horner on coefficient arrays
    out = [mp.mpf(0)]
    for c in reversed(powers):
        # out = out * (tau - mid)/half + c
        nxt = [mp.mpf(0)] * (len(out) + 1)
        for i, oc in enumerate(out):
            nxt[i + 1] += oc / half
            nxt[i] -= oc * mid / half
        nxt[0] += c
        out = nxt
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return out


def _full_pivot_solve(A, b):
    """Gaussian elimination with full pivoting; A is a list of mp rows."""
    n = len(A)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    perm = list(range(n))
    for col in range(n):
        piv_r, piv_c, piv_v = -1, -1, mp.mpf(0)
        for i in range(col, n):
            for j in range(col, n):
                v = abs(M[i][j])
                if v > piv_v:
                    piv_r, piv_c, piv_v = i, j, v
        if piv_v == 0:
            raise SingularSystemError(f"orthogonality system singular at step {col}")
        M[col], M[piv_r] = M[piv_r], M[col]
        if piv_c != col:
            for row in M:
                row[col], row[piv_c] = row[piv_c], row[col]
            perm[col], perm[piv_c] = perm[piv_c], perm[col]
        inv = 1 / M[col][col]
        for i in range(col + 1, n):
            f = M[i][col] * inv
            if f == 0:
                continue
            for j in range(col, n + 1):
                M[i][j] -= f * M[col][j]
    x = [mp.mpf(0)] * n
    for i in range(n - 1, -1, -1):
        acc = M[i][n]
        for j in range(i + 1, n):
            acc -= M[i][j] * x[j]
        x[i] = acc / M[i][i]
    out = [mp.mpf(0)] * n
    for i, pi in enumerate(perm):
        out[pi] = x[i]
    return out


# ---------------------------------------------------------------------------
# Root finding: sign scan + bisection + secant polish
# ---------------------------------------------------------------------------

def _scan_brackets(f, a, b, n_pts):
    xs = [a + (b - a) * i / n_pts for i in range(n_pts + 1)]
    vals = [f(x) for x in xs]
    brackets = []
    for i in range(n_pts):
        v0, v1 = vals[i], vals[i + 1]
        if v0 == 0:
            brackets.append((xs[i], xs[i]))
        elif v0 * v1 < 0:
            brackets.append((xs[i], xs[i + 1]))
    if vals[-1] == 0:
        brackets.append((xs[-1], xs[-1]))
    return brackets


def find_real_roots(f, a, b, expected, precision_bits, grid_per_root=8):
    """All roots of f in (a, b): sign scan on a grid of grid_per_root*(expected+1)
    points, bisection to 2^-(precision/6), then secant polish.  The count must
    equal `expected`; one retry with a 4x finer grid, then ZeroCountError."""
    if expected == 0:
        # nothing predicted; still scan coarsely to catch contract violations
        if _scan_brackets(f, a, b, 16):
            raise ZeroCountError("expected no zeros but sign changes found")
        return []
    for factor in (1, 4):
        n_pts = grid_per_root * (expected + 1) * factor
        brackets = _scan_brackets(f, a, b, n_pts)
        if len(brackets) == expected:
            break
    else:
        raise ZeroCountError(
            f"found {len(brackets)} sign changes, predicted {expected}"
        )
    tol = (b - a) * mp.mpf(2) ** (-(precision_bits // 6))
    roots = []
    for lo, hi in brackets:
        if lo == hi:
            roots.append(lo)
            continue
        flo = f(lo)
        while hi - lo > tol:
            mid = (lo + hi) / 2
            fm = f(mid)
            if fm == 0:
                lo = hi = mid
                break
            if flo * fm < 0:
                hi = mid
            else:
                lo, flo = mid, fm
        x0, x1 = lo, hi if hi > lo else lo + tol
        f0, f1 = f(x0), f(x1)
        for _ in range(4):
            if f1 == f0:
                break
            x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
            if not a < x2 < b:
                break
            x0, f0, x1, f1 = x1, f1, x2, f(x2)
        roots.append(x1)
    return sorted(roots)


# ---------------------------------------------------------------------------
# Polynomial container
# ---------------------------------------------------------------------------

@dataclass
class MonicPolynomial:
    """Monic reduced polynomial: index n on the star, residue ell, degree d.

    Evaluation runs at the precision the polynomial was built with: Clenshaw
    on the Chebyshev form near the interval, root products elsewhere.
    """

    n: int
    ell: int
    d: int
    interval: tuple
    coeffs: tuple          # ascending monomial coefficients in tau, monic
    cheb: tuple            # Chebyshev coefficients on the interval
    roots: tuple | None = None
    prec: int = 256

    def eval_cheb(self, x):
        with mp.workprec(self.prec + 32):
            a, b = self.interval
            u = (2 * x - a - b) / (b - a)
            return cheb_eval(list(self.cheb), u)

    def __call__(self, x):
        if self.roots is not None:
            with mp.workprec(self.prec + 32):
                acc = mp.mpf(1) if mp.im(x) == 0 else mp.mpc(1)
                for r in self.roots:
                    acc = acc * (x - r)
                return acc
        return self.eval_cheb(x)


@dataclass(frozen=True)
class ZeroSet:
    n: int
    k: int
    zeros: tuple

    def monic(self, interval, prec: int = 256) -> MonicPolynomial:
        cs = [mp.mpf(1)]
        for r in self.zeros:
            nxt = [mp.mpf(0)] * (len(cs) + 1)
            for i, c in enumerate(cs):
                nxt[i + 1] += c
                nxt[i] -= r * c
            cs = nxt
        return MonicPolynomial(
            n=self.n,
            ell=-1,
            d=len(self.zeros),
            interval=interval,
            coeffs=tuple(cs),
            cheb=(),
            roots=tuple(self.zeros),
            prec=prec,
        )


# ---------------------------------------------------------------------------
# The engine
# ---------------------------------------------------------------------------

def required_precision_bits(n_max: int, p: int) -> int:
    """Working-precision floor for degrees up to floor(n_max/(p+1)).

    The stacked moment systems of multiple orthogonality are intrinsically
    exponentially ill-conditioned; 12 bits per degree plus a 64-bit base
    keeps the residual gates reachable (validated by the doubling suite).
    """
    d_max = n_max // (p + 1)
    return 64 + 12 * d_max


class MopSystem:
    """Caches everything derived from one configuration: nested measures,
    Chebyshev moment tables, polynomials, recurrence coefficients, and
    second-kind node values.

    Residual gates are keyed to the configuration's nominal precision; the
    internal working precision is raised to the policy floor for the
    anticipated depth (n_hint), since deep solves at nominal precision would
    trip their own residual checks.
    """

    def __init__(self, config: StarSystemConfig, n_hint: int | None = None):
        self.config = config
        self.gate_bits = config.precision_bits
        work = config.precision_bits
        if n_hint is not None:
            work = max(work, required_precision_bits(n_hint, config.p) + 32)
        self.work_bits = work
        self.shape = SystemShape(config.p)
        cfg_work = config if work == config.precision_bits else config.with_overrides(
            precision_bits=work
        )
        self._cfg_work = cfg_work
        self.measures = MeasureCache(cfg_work)
        a, b = config.interval(0)
        self._mid = (a + b) / 2
        self._half = (b - a) / 2
        self._cheb_tables: dict = {}   # (j, sigma) -> list of moments
        self._q: dict = {}
        self._a: dict = {}
        self._psi_nodes: dict = {}     # (n, k) -> tuple of values at base nodes
        self._zeros: dict = {}

    # -- moment tables ------------------------------------------------------

    def _cheb_moments(self, j: int, sigma: int, r_max: int):
        """[integral tau^sigma T_r(u(tau)) dmu_{0,j}]_{r=0..r_max}, cached."""
        key = (j, sigma)
        table = self._cheb_tables.get(key)
        if table is not None and len(table) > r_max:
            return table
        with working_prec(self.work_bits):
            mu = self.measures.nested(0, j)
            us = [(2 * t - 2 * self._mid) / (2 * self._half) for t in mu.nodes]
            wts = [
                w * (t**sigma if sigma else 1)
                for w, t in zip(mu.weights, mu.nodes)
            ]
            t_prev = [mp.mpf(1)] * len(us)
            t_cur = list(us)
            table = [mp.fsum(wts)]
            if r_max >= 1:
                table.append(mp.fsum(w * t for w, t in zip(wts, t_cur)))
            for r in range(2, r_max + 1):
                t_next = [2 * u * tc - tp for u, tc, tp in zip(us, t_cur, t_prev)]
                table.append(mp.fsum(w * t for w, t in zip(wts, t_next)))
                t_prev, t_cur = t_cur, t_next
        self._cheb_tables[key] = table
        return table

    # -- the orthogonality solve --------------------------------------------

    def Q(self, n: int) -> MonicPolynomial:
        """Monic reduced polynomial of star index n (degree Z(n,0))."""
        if n in self._q:
            return self._q[n]
        cfg = self.config
        p = cfg.p
        with working_prec(self.work_bits):
            ell = residue_ell(n, self.shape)
            d = Z(n, 0, self.shape)
            lead = self._half**d * mp.mpf(2) ** (1 - d) if d >= 1 else mp.mpf(1)
            if d == 0:
                poly = MonicPolynomial(
                    n=n, ell=ell, d=0, interval=cfg.interval(0),
                    coeffs=(mp.mpf(1),), cheb=(mp.mpf(1),), roots=(),
                    prec=self.work_bits,
                )
                self._q[n] = poly
                return poly
            rows = []
            rhs = []
            row_meta = []
            for j in range(p):
                rng = condition_range(n, j, self.shape)
                mj = count_Mj(n, j, self.shape)
                if mj == 0:
                    continue
                sigma = rng.start
                if sigma not in (0, 1):
                    raise MopError(f"unexpected condition offset {sigma}")
                table = self._cheb_moments(j, sigma, 2 * d + 2)
                for mprime in range(mj):
                    row = [
                        (table[mprime + m] + table[abs(mprime - m)]) / 2
                        for m in range(d)
                    ]
                    rows.append(row)
                    rhs.append(-lead * (table[mprime + d] + table[d - mprime]) / 2)
                    row_meta.append((j, sigma, mprime))
            if len(rows) != d:
                raise MopError(
                    f"orthogonality system is not square: {len(rows)} rows for degree {d}"
                )
            sol = _full_pivot_solve(rows, rhs)
            g = sol + [lead]
            # mandatory residual recomputation; the gate stays at nominal precision
            tol = mp.mpf(2) ** (-(self.gate_bits // 4))
            gmax = max(abs(c) for c in g)
            for row, b0, meta in zip(rows, rhs, row_meta):
                resid = mp.fsum(r * c for r, c in zip(row, g[:-1])) - b0
                scale = max(abs(r) for r in row + [b0 / lead if lead else b0]) * gmax
                if scale > 0 and abs(resid) > tol * scale:
                    raise ResidualError(
                        f"orthogonality residual {mp.nstr(abs(resid) / scale, 5)} "
                        f"exceeds {mp.nstr(tol, 5)} for n={n}, row {meta}"
                    )
            mono = cheb_to_monomial(g, self._mid, self._half)
            lead_mono = mono[-1]
            if abs(lead_mono - 1) > mp.mpf(2) ** (-(self.gate_bits // 8)):
                raise ResidualError(
                    f"monic normalization drifted: leading coefficient {mp.nstr(lead_mono, 8)}"
                )
            mono = [c / lead_mono for c in mono]
            poly = MonicPolynomial(
                n=n, ell=ell, d=d, interval=cfg.interval(0),
                coeffs=tuple(mono), cheb=tuple(g), roots=None,
                prec=self.work_bits,
            )
            self._q[n] = poly
            return poly

    def q_roots(self, n: int) -> tuple:
        """Roots of the reduced polynomial, all in the open first interval."""
        poly = self.Q(n)
        if poly.roots is not None:
            return poly.roots
        cfg = self.config
        a, b = cfg.interval(0)
        with working_prec(self.work_bits):
            roots = find_real_roots(
                poly.eval_cheb, a, b, poly.d, self.gate_bits
            )
        poly.roots = tuple(roots)
        return poly.roots

    def orthogonality_residual_Q(self, n: int) -> mp.mpf:
        """Max relative residual of the defining conditions in raw monomial
        form, integral Q tau^s dmu_{0,j}, recomputed from scratch."""
        cfg = self.config
        poly = self.Q(n)
        worst = mp.mpf(0)
        with working_prec(self.work_bits):
            for j in range(cfg.p):
                mu = self.measures.nested(0, j)
                qv = [poly.eval_cheb(t) for t in mu.nodes]
                for s in condition_range(n, j, self.shape):
                    terms = [
                        w * q * t**s for w, q, t in zip(mu.weights, qv, mu.nodes)
                    ]
                    num = abs(mp.fsum(terms))
                    den = mp.fsum(abs(t) for t in terms)
                    if den > 0:
                        worst = max(worst, num / den)
        return worst

    # -- recurrence ----------------------------------------------------------

    def a(self, n: int) -> mp.mpf:
        """Recurrence coefficient a_n > 0, extracted by matching the top
        Chebyshev coefficient of the reduced identity and validated by the
        full coefficient-vector residual."""
        if n in self._a:
            return self._a[n]
        if n < self.config.p:
            raise ValueError(f"recurrence starts at n=p={self.config.p}, got {n}")
        cfg = self.config
        with working_prec(self.work_bits):
            ell = residue_ell(n, self.shape)
            qn = self.Q(n)
            qn1 = self.Q(n + 1)
            qnp = self.Q(n - self.config.p)
            if ell < cfg.p:
                lhs = list(qn.cheb)
            else:
                lhs = cheb_mul_tau(list(qn.cheb), self._mid, self._half)
            rhs = list(qn1.cheb)
            m = max(len(lhs), len(rhs))
            lhs += [mp.mpf(0)] * (m - len(lhs))
            rhs += [mp.mpf(0)] * (m - len(rhs))
            diff = [x - y for x, y in zip(lhs, rhs)]
            dq = qnp.d
            denom = qnp.cheb[dq]
            a_n = diff[dq] / denom
            # full-vector residual
            resid = mp.mpf(0)
            for i in range(m):
                c = qnp.cheb[i] if i < len(qnp.cheb) else mp.mpf(0)
                resid = max(resid, abs(diff[i] - a_n * c))
            norm = max(abs(c) for c in qn.cheb)
            tol = mp.mpf(2) ** (-(self.gate_bits // 4))
            if resid > tol * norm:
                raise ResidualError(
                    f"recurrence residual {mp.nstr(resid / norm, 5)} exceeds "
                    f"{mp.nstr(tol, 5)} at n={n}"
                )
            if not a_n > 0:
                raise NonpositiveCoefficientError(
                    f"a_{n} = {mp.nstr(a_n, 10)} is not positive"
                )
            self._a[n] = a_n
            return a_n

    def recurrence_residual(self, n: int) -> mp.mpf:
        """Normalized full-vector recurrence residual at n (reduced identity)."""
        cfg = self.config
        with working_prec(self.work_bits):
            a_n = self.a(n)
            ell = residue_ell(n, self.shape)
            qn, qn1, qnp = self.Q(n), self.Q(n + 1), self.Q(n - cfg.p)
            if ell < cfg.p:
                lhs = list(qn.cheb)
            else:
                lhs = cheb_mul_tau(list(qn.cheb), self._mid, self._half)
            rhs = list(qn1.cheb)
            m = max(len(lhs), len(rhs), len(qnp.cheb))
            get = lambda v, i: v[i] if i < len(v) else mp.mpf(0)
            resid = max(
                abs(get(lhs, i) - get(rhs, i) - a_n * get(qnp.cheb, i))
                for i in range(m)
            )
            return resid / max(abs(c) for c in qn.cheb)

    # -- second-kind functions ----------------------------------------------

    def psi_nodes(self, n: int, k: int) -> tuple:
        """Values of the k-th second-kind function at the base nodes of
        interval k (0 <= k <= p-1)."""
        key = (n, k)
        if key in self._psi_nodes:
            return self._psi_nodes[key]
        cfg = self.config
        with working_prec(self.work_bits):
            if k == 0:
                poly = self.Q(n)
                base = self.measures.base(0)
                vals = tuple(poly.eval_cheb(t) for t in base.nodes)
            else:
                base = self.measures.base(k)
                vals = tuple(self._psi_sum(n, k, t) for t in base.nodes)
        self._psi_nodes[key] = vals
        return vals

    def _psi_sum(self, n: int, k: int, x):
        """psi_{n,k}(x) by one quadrature layer over interval k-1."""
        cfg = self.config
        ell = residue_ell(n, self.shape)
        meas = self.measures.varying(n, k - 1)
        inner = self.psi_nodes(n, k - 1)
        lo, hi = meas.support
        if mp.im(x) == 0 and lo <= mp.re(x) <= hi:
            raise SupportError(
                f"second-kind function of level {k} evaluated on [{mp.nstr(lo, 6)},"
                f" {mp.nstr(hi, 6)}]"
            )
        s = mp.fsum(
            v * w / (x - t) for v, w, t in zip(inner, meas.weights, meas.nodes)
        )
        return x * s if ell < k else s

    def psi(self, n: int, k: int, x):
        """psi_{n,k}(x); k = 0 is the reduced polynomial itself."""
        if not 0 <= k <= self.config.p:
            raise ValueError(f"need 0 <= k <= p, got {k}")
        with working_prec(self.work_bits):
            if k == 0:
                poly = self.Q(n)
                if poly.roots is not None or mp.im(x) != 0:
                    self.q_roots(n)
                    return poly(x)
                a, b = poly.interval
                if a - (b - a) <= mp.re(x) <= b + (b - a):
                    return poly.eval_cheb(x)
                self.q_roots(n)
                return poly(x)
            return self._psi_sum(n, k, x)

    def psi_zeros(self, n: int, k: int) -> ZeroSet:
        """Zero set of psi_{n,k} on interval k; cardinality must be Z(n,k)."""
        key = (n, k)
        if key in self._zeros:
            return self._zeros[key]
        cfg = self.config
        if not 0 <= k <= cfg.p - 1:
            raise ValueError(f"zero sets exist for 0 <= k <= p-1, got {k}")
        expected = Z(n, k, self.shape)
        with working_prec(self.work_bits):
            if k == 0:
                zs = ZeroSet(n=n, k=0, zeros=self.q_roots(n))
            else:
                a, b = cfg.interval(k)
                f = lambda x: self._psi_sum(n, k, x)
                roots = find_real_roots(f, a, b, expected, self.gate_bits)
                zs = ZeroSet(n=n, k=k, zeros=tuple(roots))
        if len(zs.zeros) != expected:
            raise ZeroCountError(
                f"psi_({n},{k}) has {len(zs.zeros)} located zeros, predicted {expected}"
            )
        self._zeros[key] = zs
        return zs

    def P(self, n: int, k: int) -> MonicPolynomial:
        """Monic polynomial with the zeros of psi_{n,k}; P_{n,-1} = P_{n,p} = 1."""
        cfg = self.config
        if k == -1 or k == cfg.p:
            return MonicPolynomial(
                n=n, ell=-1, d=0, interval=cfg.interval(0),
                coeffs=(mp.mpf(1),), cheb=(mp.mpf(1),), roots=(),
                prec=self.work_bits,
            )
        if k == 0:
            self.q_roots(n)
            return self.Q(n)
        return self.psi_zeros(n, k).monic(cfg.interval(k), prec=self.work_bits)

    # -- norm identity --------------------------------------------------------

    def k_norm_inverse_sq(self, n: int, k: int) -> mp.mpf:
        """The weighted L2 norm K^{-2}_{n,k} entering the ratio identity for a_n."""
        cfg = self.config
        with working_prec(self.work_bits):
            meas = self.measures.varying(n, k)
            pk = self.P(n, k)
            pkm = self.P(n, k - 1)
            pkp = self.P(n, k + 1)
            psiv = self.psi_nodes(n, k)
            total = mp.mpf(0)
            for w, t, pv in zip(meas.weights, meas.nodes, psiv):
                vk = pk(t)
                h = pkm(t) * pv / vk
                total += abs(w) * vk**2 * abs(h) / (abs(pkm(t)) * abs(pkp(t)))
            return total

    def k_norm_residual(self, n: int, k: int) -> mp.mpf:
        """|a_n - K^2_{n-p,k} / K^2_{n,k}| for n = k mod p, n >= p."""
        cfg = self.config
        if n % cfg.p != k % cfg.p or n < cfg.p:
            raise ValueError(f"norm identity needs n = k mod p and n >= p; got n={n}, k={k}")
        with working_prec(self.work_bits):
            lhs = self.a(n)
            rhs = self.k_norm_inverse_sq(n, k) / self.k_norm_inverse_sq(n - cfg.p, k)
            return abs(lhs - rhs)

    # -- residual diagnostics -------------------------------------------------

    def orthogonality_residual_psi(self, n: int, k: int) -> mp.mpf:
        """Max relative residual of integral psi_{n,k} tau^s dmu_{k,j} over the
        predicted condition ranges, for 1 <= k <= p-1."""
        cfg = self.config
        worst = mp.mpf(0)
        with working_prec(self.work_bits):
            psiv = self.psi_nodes(n, k)
            for j in range(k, cfg.p):
                mu = self.measures.nested(k, j)
                for s in condition_range(n, j, self.shape):
                    terms = [
                        w * v * t**s
                        for w, v, t in zip(mu.weights, psiv, mu.nodes)
                    ]
                    num = abs(mp.fsum(terms))
                    den = mp.fsum(abs(x) for x in terms)
                    if den > 0:
                        worst = max(worst, num / den)
        return worst

    # -- star-domain lift ------------------------------------------------------

    def q_star(self, n: int, z):
        """Value of the star polynomial at z: z^ell Q_d(z^{p+1})."""
        with working_prec(self.work_bits):
            poly = self.Q(n)
            self.q_roots(n)
            return z**poly.ell * poly(z ** (self.config.p + 1))

    def psi_star(self, n: int, k: int, z):
        """Value of the star second-kind function: z^(ell-k) psi_{n,k}(z^{p+1})."""
        with working_prec(self.work_bits):
            ell = residue_ell(n, self.shape)
            return z ** (ell - k) * self.psi(n, k, z ** (self.config.p + 1))


# ---------------------------------------------------------------------------
# Module-level operations (thin wrappers accepting a config or a system)
# ---------------------------------------------------------------------------

def _as_system(config_or_system) -> MopSystem:
    if isinstance(config_or_system, MopSystem):
        return config_or_system
    return MopSystem(config_or_system)


def compute_Qd(config_or_system, n: int) -> MonicPolynomial:
    return _as_system(config_or_system).Q(n)


def recurrence_coefficient(config_or_system, n: int) -> mp.mpf:
    return _as_system(config_or_system).a(n)


def psi_eval(config_or_system, n: int, k: int, x):
    return _as_system(config_or_system).psi(n, k, x)


def psi_zeros(config_or_system, n: int, k: int) -> ZeroSet:
    return _as_system(config_or_system).psi_zeros(n, k)


def k_norm_check(config_or_system, n: int, k: int) -> mp.mpf:
    return _as_system(config_or_system).k_norm_residual(n, k)


def interlace(xs, ys) -> bool:
    """Strict interlacing of two sorted zero sets whose sizes differ by <= 1."""
    xs, ys = list(xs), list(ys)
    if len(xs) < len(ys):
        xs, ys = ys, xs
    if len(xs) - len(ys) > 1:
        return False
    if not ys:
        return True
    merged = []
    i = j = 0
    while i < len(xs) and j < len(ys):
        if xs[i] < ys[j]:
            merged.append("x")
            i += 1
        elif ys[j] < xs[i]:
            merged.append("y")
            j += 1
        else:
            return False
    merged.extend("x" * (len(xs) - i))
    merged.extend("y" * (len(ys) - j))
    return all(merged[i] != merged[i + 1] for i in range(len(merged) - 1))


def export_polynomial(poly: MonicPolynomial, precision_bits: int) -> dict:
    """JSON-ready export with decimal-string coefficients and metadata."""
    digits = int(precision_bits / 3.32) + 2
    return {
        "n": poly.n,
        "ell": poly.ell,
        "degree": poly.d,
        "precision_bits": precision_bits,
        "coefficients": [mp.nstr(c, digits) for c in poly.coeffs],
        "roots": [mp.nstr(r, digits) for r in poly.roots] if poly.roots else None,
    }
