"""Numerical uniformization of the (p+1)-sheeted genus-zero chain surface.

The surface glues sheet 0 (plane minus Delta_0), sheets k (plane minus
Delta_{k-1} and Delta_k) and sheet p (plane minus Delta_{p-1}) along the
slits.  Being genus zero it is the image of a degree-(p+1) rational map

    z = R(w) = alpha*w + beta + gamma/w + sum_j r_j / (w - q_j),

with one simple pole per sheet: w=0 is the point over infinity on sheet 0,
w=q_j on sheet j, w=infinity on sheet p.  All parameters are real; the
coordinate is fixed by gamma = 1.  Walking w along the real axis traverses
the "outer" endpoints of the slits on the positive side (one fold per slit,
interleaved with the poles q_1 < ... < q_{p-1}) and the "inner" endpoints
on the negative side, which pins the combinatorics:

    0 < c_1 < q_1 < c_2 < ... < q_{p-1} < c_p,   R(c_i) = outer endpoint i-1,
    c_{p+1} < ... < c_{2p} < 0,                  R(c_{p+i}) = inner endpoint p-i.

Solving for the parameters is a square Newton system in the parameters and
the 2p critical points, continued from an explicitly constructed starting
surface (geometrically spaced poles) along a straight-line homotopy of the
endpoint vector, then polished in arbitrary precision.

The conformal maps with a simple zero over infinity on sheet 0 and a simple
pole over infinity on sheet l are Moebius functions of w, so their
normalization constants and leading Laurent coefficients have closed forms
in the parameters of R.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import mpmath as mp

from .measures import StarSystemConfig, working_prec


class UniformizationError(RuntimeError):
    """Newton/homotopy failure while solving for the rational map."""


class CombinatorialMismatchError(UniformizationError):
    """A candidate map has the wrong pole/critical-point walk structure."""


class BranchAssignmentError(RuntimeError):
    """A requested branch value could not be resolved unambiguously."""


# ---------------------------------------------------------------------------
# Walk combinatorics
# ---------------------------------------------------------------------------

def walk_targets(intervals) -> list:
    """Endpoint vector in walk order: outer endpoints of each slit going up
    the chain, then inner endpoints coming back down."""
    p = len(intervals)
    outer = [intervals[k][1] if k % 2 == 0 else intervals[k][0] for k in range(p)]
    inner = [intervals[k][0] if k % 2 == 0 else intervals[k][1] for k in range(p)]
    return outer + inner[::-1]


@dataclass(frozen=True)
class Uniformization:
    """Certified parameters of the rational map and its critical data."""

    p: int
    alpha: mp.mpf
    beta: mp.mpf
    gamma: mp.mpf
    residues: tuple  # r_1..r_{p-1}
    poles: tuple     # q_1..q_{p-1}, ascending, all positive
    crit_points: tuple  # c_1..c_2p in walk order
    crit_values: tuple  # prescribed endpoint per critical point
    intervals: tuple
    precision_bits: int
    newton_residual: mp.mpf

    def R(self, w):
        v = self.alpha * w + self.beta + self.gamma / w
        for r, q in zip(self.residues, self.poles):
            v += r / (w - q)
        return v

    def dR(self, w):
        v = self.alpha - self.gamma / w**2
        for r, q in zip(self.residues, self.poles):
            v -= r / (w - q) ** 2
        return v

    def d2R(self, w):
        v = 2 * self.gamma / w**3
        for r, q in zip(self.residues, self.poles):
            v += 2 * r / (w - q) ** 3
        return v

    def pole_of_sheet(self, k: int):
        """w-coordinate of the point over infinity on sheet k (None = w-infinity)."""
        if k == 0:
            return mp.mpf(0)
        if k == self.p:
            return None
        return self.poles[k - 1]

    def sheet_of_real_w(self, w) -> int:
        """Classify a real w into its sheet using the critical-point arcs."""
        p = self.p
        c = self.crit_points
        if c[2 * p - 1] < w < c[0]:
            return 0
        for k in range(1, p):
            if c[k - 1] < w < c[k]:
                return k
            if c[2 * p - k - 1] < w < c[2 * p - k]:
                return k
        if w > c[p - 1] or w < c[p]:
            return p
        raise BranchAssignmentError(f"real w={mp.nstr(w, 8)} sits on a critical point")

    def scale(self):
        return max(abs(e) for ab in self.intervals for e in ab)

    def poly_coeffs(self, z):
        """Coefficients (descending) of N(w) - z*D(w), whose roots are the
        p+1 preimages of z."""
        qs = self.poles
        # D(w) = w * prod (w - q_j)
        d = [mp.mpf(1)]
        for q in qs:
            d = _poly_mul(d, [mp.mpf(1), -q])
        D = d + [mp.mpf(0)]
        # N(w) = (alpha w + beta) D(w) + gamma prod(w - q_j) + sum_j r_j w prod_{i!=j}(w - q_i)
        N = _poly_mul([self.alpha, self.beta], D)
        N = _poly_add(N, [self.gamma * c for c in d])
        for j in range(len(qs)):
            rest = [mp.mpf(1)]
            for i, q in enumerate(qs):
                if i != j:
                    rest = _poly_mul(rest, [mp.mpf(1), -q])
            term = [self.residues[j] * c for c in rest] + [mp.mpf(0)]
            N = _poly_add(N, term)
        return _poly_add(N, [-z * c for c in D])


def _poly_mul(a, b):
    out = [mp.mpf(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _poly_add(a, b):
    if len(a) < len(b):
        a, b = b, a
    out = list(a)
    off = len(a) - len(b)
    for i, y in enumerate(b):
        out[off + i] += y
    return out


# ---------------------------------------------------------------------------
# Solving for the map: float64 homotopy + extended-precision polish
# ---------------------------------------------------------------------------

def _f64_crit_points(al, rs, qs):
    """All critical points of R as roots of R'(w) w^2 prod(w-q_j)^2."""
    w2 = np.poly1d([1.0, 0.0, 0.0])
    dens = [np.poly1d([1.0, -q]) ** 2 for q in qs]
    prodall = np.poly1d([1.0])
    for dp in dens:
        prodall = prodall * dp
    total = (w2 * prodall) * al - prodall
    for j, r in enumerate(rs):
        rest = np.poly1d([1.0])
        for i, dp in enumerate(dens):
            if i != j:
                rest = rest * dp
        total = total - (w2 * rest) * r
    return np.roots(total)


def _f64_R(w, al, be, rs, qs):
    v = al * w + be + 1.0 / w
    for r, q in zip(rs, qs):
        v += r / (w - q)
    return v


def _seed_surface(p: int):
    """Explicit valid chain surface: geometrically spaced poles, critical
    points pinned at geometric midpoints by a linear solve for (alpha, r)."""
    for s in (16.0, 10.0, 24.0, 30.0, 8.0, 40.0, 6.0, 64.0):
        qs = [s**j for j in range(1, p)]
        rt = np.sqrt(s)
        cpos = [qs[0] / rt if p > 1 else rt] + [q * rt for q in qs]
        cpos = cpos[:p]
        if p == 1:
            cpos = [rt]
        A = np.zeros((p, p))
        b = np.zeros(p)
        for i, c in enumerate(cpos):
            A[i, 0] = 1.0
            for j, q in enumerate(qs):
                A[i, 1 + j] = -1.0 / (c - q) ** 2
            b[i] = 1.0 / c**2
        try:
            sol = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            continue
        al, rs = sol[0], list(sol[1:])
        if np.sign(al) != (-1) ** (p + 1):
            continue
        if any(np.sign(r) != (-1) ** (j + 1) for j, r in enumerate(rs)):
            continue
        roots = _f64_crit_points(al, rs, qs)
        big = 1 + np.max(np.abs(roots))
        real = np.sort(roots[np.abs(roots.imag) < 1e-9 * big].real)
        pos = real[real > 0]
        neg = real[real < 0]
        if len(real) != 2 * p or len(pos) != p or len(neg) != p:
            continue
        if not all(pos[i] < qs[i] < pos[i + 1] for i in range(p - 1)):
            continue
        cs = np.concatenate([pos, neg])
        vals = [_f64_R(w, al, 0.0, rs, qs) for w in cs]
        return al, 0.0, rs, qs, cs, vals
    raise UniformizationError(f"could not construct a starting surface for p={p}")


def _pack(al, be, rs, qs, cs):
    return np.concatenate([[al, be], rs, qs, cs])


def _unpack(x, p):
    return x[0], x[1], x[2 : 1 + p], x[1 + p : 2 * p], x[2 * p :]


def _f64_system(x, v, p):
    al, be, rs, qs, cs = _unpack(x, p)
    m = 4 * p
    F = np.zeros(m)
    J = np.zeros((m, m))
    for i, c in enumerate(cs):
        d1 = al - 1.0 / c**2 - np.sum(rs / (c - qs) ** 2)
        d2 = 2.0 / c**3 + np.sum(2.0 * rs / (c - qs) ** 3)
        F[2 * i] = d1
        F[2 * i + 1] = _f64_R(c, al, be, rs, qs) - v[i]
        J[2 * i, 0] = 1.0
        J[2 * i + 1, 0] = c
        J[2 * i + 1, 1] = 1.0
        J[2 * i, 2 : 1 + p] = -1.0 / (c - qs) ** 2
        J[2 * i + 1, 2 : 1 + p] = 1.0 / (c - qs)
        J[2 * i, 1 + p : 2 * p] = -2.0 * rs / (c - qs) ** 3
        J[2 * i + 1, 1 + p : 2 * p] = rs / (c - qs) ** 2
        J[2 * i, 2 * p + i] = d2
        J[2 * i + 1, 2 * p + i] = d1
    return F, J


def _f64_newton(x, v, p, tol=1e-11, itmax=50):
    for _ in range(itmax):
        F, J = _f64_system(x, v, p)
        res = np.max(np.abs(F))
        if res < tol:
            return x
        try:
            dx = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        improved = False
        for _ in range(40):
            x_try = x - lam * dx
            F2, _ = _f64_system(x_try, v, p)
            if np.max(np.abs(F2)) < res:
                x = x_try
                improved = True
                break
            lam /= 2
        if not improved:
            return None
    F, _ = _f64_system(x, v, p)
    return x if np.max(np.abs(F)) < 1e3 * tol else None


def _walk_valid_f64(x, p) -> bool:
    al, be, rs, qs, cs = _unpack(x, p)
    pos, neg = cs[:p], cs[p:]
    if not (np.all(pos > 0) and np.all(neg < 0)):
        return False
    if not (np.all(np.diff(pos) > 0) and np.all(np.diff(neg) > 0)):
        return False
    if not all(pos[i] < qs[i] < pos[i + 1] for i in range(p - 1)):
        return False
    if np.sign(al) != (-1) ** (p + 1):
        return False
    return all(np.sign(r) == (-1) ** (j + 1) for j, r in enumerate(rs))


def _mp_polish(x64, targets, p, precision_bits):
    """Quadratic Newton in mpmath on the full (params, critical points) system."""
    n = 4 * p
    x = [mp.mpf(float(t)) for t in x64]
    v = [mp.mpf(t) for t in targets]

    def system(xv):
        al, be = xv[0], xv[1]
        rs = xv[2 : 1 + p]
        qs = xv[1 + p : 2 * p]
        cs = xv[2 * p :]
        F = mp.matrix(n, 1)
        J = mp.matrix(n, n)
        for i, c in enumerate(cs):
            d1 = al - 1 / c**2
            d2 = 2 / c**3
            Rv = al * c + be + 1 / c
            for j in range(p - 1):
                dd = c - qs[j]
                d1 -= rs[j] / dd**2
                d2 += 2 * rs[j] / dd**3
                Rv += rs[j] / dd
            F[2 * i] = d1
            F[2 * i + 1] = Rv - v[i]
            J[2 * i, 0] = 1
            J[2 * i + 1, 0] = c
            J[2 * i + 1, 1] = 1
            for j in range(p - 1):
                dd = c - qs[j]
                J[2 * i, 2 + j] = -1 / dd**2
                J[2 * i + 1, 2 + j] = 1 / dd
                J[2 * i, 1 + p + j] = -2 * rs[j] / dd**3
                J[2 * i + 1, 1 + p + j] = rs[j] / dd**2
            J[2 * i, 2 * p + i] = d2
            J[2 * i + 1, 2 * p + i] = d1
        return F, J

    scale = max(abs(t) for t in v) + 1
    tol = mp.mpf(2) ** (-(precision_bits + 16)) * scale
    res_prev = mp.inf
    for _ in range(80):
        F, J = system(x)
        res = max(abs(F[i]) for i in range(n))
        if res < tol:
            break
        dx = mp.lu_solve(J, F)
        x = [x[i] - dx[i] for i in range(n)]
        if res > res_prev * 4:
            raise UniformizationError("extended-precision Newton diverged")
        res_prev = res
    else:
        raise UniformizationError(
            f"extended-precision Newton stalled at residual {mp.nstr(res, 5)}"
        )
    F, _ = system(x)
    res = max(abs(F[i]) for i in range(n))
    return x, res


def solve_uniformization(config: StarSystemConfig, precision_bits: int | None = None) -> Uniformization:
    """Solve for the rational map of the chain surface of one configuration.

    Float64 continuation from the seed surface along a straight-line path of
    endpoint vectors, then an extended-precision polish.  The returned object
    has passed branch_points_check.
    """
    prec = precision_bits or config.precision_bits
    p = config.p
    with working_prec(prec):
        targets = walk_targets([(a, b) for a, b in config.intervals])
        v1 = np.array([float(t) for t in targets])
        al, be, rs, qs, cs, vals0 = _seed_surface(p)
        x = _pack(al, be, np.array(rs), np.array(qs), cs)
        v0 = np.array(vals0)
        t, dt = 0.0, 0.5
        while t < 1.0:
            t_try = min(1.0, t + dt)
            v = (1 - t_try) * v0 + t_try * v1
            x_try = _f64_newton(x.copy(), v, p)
            if x_try is not None and _walk_valid_f64(x_try, p):
                x, t = x_try, t_try
                dt = min(2 * dt, 0.5)
            else:
                dt /= 2
                if dt < 1e-9:
                    raise UniformizationError(
                        "endpoint homotopy stalled; geometry may be degenerate"
                    )
        xs, res = _mp_polish(x, targets, p, prec)
        U = Uniformization(
            p=p,
            alpha=xs[0],
            beta=xs[1],
            gamma=mp.mpf(1),
            residues=tuple(xs[2 : 1 + p]),
            poles=tuple(xs[1 + p : 2 * p]),
            crit_points=tuple(xs[2 * p :]),
            crit_values=tuple(targets),
            intervals=tuple((a, b) for a, b in config.intervals),
            precision_bits=prec,
            newton_residual=res,
        )
        branch_points_check(U)
        return U


def branch_points_check(U: Uniformization):
    """A posteriori certificate: numeric residual at the critical points plus
    the combinatorial walk structure.  Returns the max residual, raises
    CombinatorialMismatchError when the gluing combinatorics is wrong."""
    p = U.p
    with working_prec(U.precision_bits):
        cs = U.crit_points
        pos, neg = cs[:p], cs[p:]
        if not all(c > 0 for c in pos) or not all(c < 0 for c in neg):
            raise CombinatorialMismatchError("critical points on wrong half-axes")
        if any(pos[i] >= pos[i + 1] for i in range(p - 1)) or any(
            neg[i] >= neg[i + 1] for i in range(p - 1)
        ):
            raise CombinatorialMismatchError("critical points out of order")
        for i, q in enumerate(U.poles):
            if not (pos[i] < q < pos[i + 1]):
                raise CombinatorialMismatchError(
                    f"pole q_{i + 1} not bracketed by critical points"
                )
        if mp.sign(U.alpha) != (-1) ** (p + 1):
            raise CombinatorialMismatchError("leading coefficient has wrong sign")
        if mp.sign(U.gamma) != 1:
            raise CombinatorialMismatchError("sheet-0 residue has wrong sign")
        for j, r in enumerate(U.residues, start=1):
            if mp.sign(r) != (-1) ** j:
                raise CombinatorialMismatchError(f"residue r_{j} has wrong sign")
        res = mp.mpf(0)
        for c, val in zip(cs, U.crit_values):
            res = max(res, abs(U.R(c) - val))
            res = max(res, abs(U.dR(c)))
        return res


# ---------------------------------------------------------------------------
# Preimages of z and sheet assignment
# ---------------------------------------------------------------------------

def _mp_newton_root(U: Uniformization, z, w0, itmax=80):
    w = w0
    if w == 0:
        w = mp.mpf(2) ** (-U.precision_bits)
    for _ in range(itmax):
        f = U.R(w) - z
        df = U.dR(w)
        step = f / df
        w = w - step
        if w == 0:
            w = step * mp.mpf(2) ** (-16)
        if abs(step) <= mp.eps * (1 + abs(w)) * 8:
            return w
    return w


def _asymptotic_seeds(U: Uniformization, z):
    """Approximate preimages for large |z|: one root hugging each pole."""
    seeds = {0: U.gamma / z}
    for j, (q, r) in enumerate(zip(U.poles, U.residues), start=1):
        seeds[j] = q + r / z
    seeds[U.p] = (z - U.beta) / U.alpha
    return seeds


def _f64_params(U: Uniformization):
    al = float(U.alpha)
    be = float(U.beta)
    rs = np.array([float(r) for r in U.residues])
    qs = np.array([float(q) for q in U.poles])
    return al, be, rs, qs


def _f64_roots_at(U: Uniformization, z_c) -> np.ndarray:
    coeffs = [complex(c) for c in U.poly_coeffs(mp.mpc(z_c))]
    return np.roots(np.array(coeffs, dtype=complex))


def preimages_real(U: Uniformization, z) -> dict:
    """Sheet -> w for real z off the slits of the respective sheets.

    A z equal to a branch point is resolved through the critical point
    itself (shared by the two glued sheets); sheets whose slits contain z
    are simply absent from the result.
    """
    with working_prec(U.precision_bits):
        z = mp.mpf(z)
        out = {}
        taken = []
        # branch-point coincidence first
        scale = U.scale() + 1
        btol = mp.mpf(2) ** (-U.precision_bits // 2) * scale
        crit_hit = None
        for i, (c, val) in enumerate(zip(U.crit_points, U.crit_values)):
            if abs(z - val) <= btol:
                crit_hit = (i, c)
                break
        if crit_hit is not None:
            i, c = crit_hit
            # walk position i joins sheets: ascending folds join (i, i+1),
            # descending folds join (2p-1-i, 2p-i) counted from sheet numbers
            if i < U.p:
                sheets = (i, i + 1)
            else:
                k = 2 * U.p - 1 - i
                sheets = (k, k + 1)
            out[sheets[0]] = c
            out[sheets[1]] = c
            taken.append(c)
        seeds = [mp.mpf(s.real) for s in _f64_roots_at(U, complex(float(z), 0.0))
                 if abs(s.imag) <= 1e-7 * (1 + abs(s)) and s.real != 0.0]
        if abs(z) > 10 * scale:
            seeds.extend(_asymptotic_seeds(U, z).values())
        for s in seeds:
            w = _mp_newton_root(U, z, s)
            if mp.im(w) != 0 or abs(U.R(w) - z) > btol * (1 + abs(z)):
                continue
            if any(abs(w - t) <= btol * (1 + abs(w)) for t in taken):
                continue
            try:
                sheet = U.sheet_of_real_w(w)
            except BranchAssignmentError:
                continue
            if sheet not in out:
                out[sheet] = w
                taken.append(w)
        return out


def preimage_on_sheet(U: Uniformization, k: int, z):
    """The preimage w of z on sheet k; z may be real or complex."""
    if not 0 <= k <= U.p:
        raise ValueError(f"need 0 <= k <= p, got {k}")
    if mp.im(z) == 0:
        got = preimages_real(U, mp.re(z))
        if k not in got:
            lo, hi = _sheet_slit_hull(U, k)
            raise BranchAssignmentError(
                f"z={mp.nstr(mp.re(z), 8)} has no real preimage on sheet {k} "
                f"(the point lies on a slit of that sheet, hull [{lo}, {hi}])"
            )
        return got[k]
    return preimages_complex(U, z)[k]


def _sheet_slit_hull(U, k):
    slits = []
    if k >= 1:
        slits.append(U.intervals[k - 1])
    if k <= U.p - 1:
        slits.append(U.intervals[k])
    lo = min(s[0] for s in slits)
    hi = max(s[1] for s in slits)
    return lo, hi


def preimages_complex(U: Uniformization, z) -> dict:
    """Sheet -> w for complex z (Im z != 0) by tracking all p+1 roots down a
    vertical line from a large anchor height, where roots cluster at the
    poles of R and the assignment is unambiguous."""
    if mp.im(z) == 0:
        return preimages_real(U, mp.re(z))
    if mp.im(z) < 0:
        conj = preimages_complex(U, mp.conj(z))
        return {k: mp.conj(w) for k, w in conj.items()}
    with working_prec(U.precision_bits):
        al, be, rs, qs = _f64_params(U)
        scale = float(U.scale()) + 1
        gap = min(
            [float(qs[0])] + [float(qs[i + 1] - qs[i]) for i in range(len(qs) - 1)]
        ) if len(qs) else 1.0
        T = 100.0 * scale
        if len(rs):
            T = max(T, 1000.0 * float(np.max(np.abs(rs))) / gap)
        T = max(T, 10.0 * abs(complex(z)))
        x0 = float(mp.re(z))
        h_target = float(mp.im(z))

        # anchor: nearest-pole assignment
        z_c = complex(x0, T)
        roots = _f64_roots_at(U, z_c)
        assign = {}
        used = set()
        pole_pos = [0.0] + list(qs)
        for k, q in enumerate(pole_pos):
            idx = int(np.argmin([abs(r - q) if i not in used else np.inf
                                 for i, r in enumerate(roots)]))
            assign[k] = roots[idx]
            used.add(idx)
        rest = [i for i in range(len(roots)) if i not in used]
        if len(rest) != 1:
            raise BranchAssignmentError("anchor assignment failed")
        assign[U.p] = roots[rest[0]]

        def f64_newton(w, zc):
            for _ in range(60):
                dd = w - qs
                f = al * w + be + 1.0 / w + np.sum(rs / dd) - zc
                df = al - 1.0 / w**2 - np.sum(rs / dd**2)
                step = f / df
                w = w - step
                if abs(step) < 1e-13 * (1 + abs(w)):
                    break
            return w

        # descend in float64 to a moderate height
        h = T
        h_f64 = max(h_target, 1e-8 * scale)
        while h > h_f64:
            h = max(h / 2, h_f64)
            zc = complex(x0, h)
            new = {k: f64_newton(w, zc) for k, w in assign.items()}
            vals = list(new.values())
            collided = any(
                abs(vals[i] - vals[j]) < 1e-10 * (1 + abs(vals[i]) + abs(vals[j]))
                for i in range(len(vals))
                for j in range(i + 1, len(vals))
            )
            if collided:
                raise BranchAssignmentError(
                    "root tracking collision; point too close to a branch point"
                )
            assign = new

        # extended-precision stage down to the target height
        out = {k: _mp_newton_root(U, mp.mpc(x0, h_f64), mp.mpc(w)) for k, w in assign.items()}
        h_m = mp.mpf(h_f64)
        target = mp.im(z)
        while h_m > target:
            h_m = max(h_m / 16, target)
            zc = mp.mpc(x0, h_m)
            out = {k: _mp_newton_root(U, zc, w) for k, w in out.items()}
        zc = mp.mpc(mp.re(z), mp.im(z))
        out = {k: _mp_newton_root(U, zc, w) for k, w in out.items()}
        tol = mp.mpf(2) ** (-U.precision_bits // 2)
        for k, w in out.items():
            if abs(U.R(w) - z) > tol * (1 + abs(z)):
                raise BranchAssignmentError(f"tracked root on sheet {k} failed to converge")
        return out


# ---------------------------------------------------------------------------
# Conformal families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConformalFamily:
    """The conformal map with zero over infinity on sheet 0 and pole over
    infinity on sheet l, normalized to a unimodular branch product and a
    positive leading coefficient of the sheet-0 branch."""

    U: Uniformization
    l: int
    lam: mp.mpf            # scale of the Moebius factor
    omega: mp.mpf          # positive leading coefficient on sheet 0
    omega_j: tuple         # leading Laurent coefficients, sheets 0..p
    sign: int              # the constant branch product, +1 or -1

    def moebius(self, w):
        with working_prec(self.U.precision_bits):
            if self.l == self.U.p:
                return self.lam * w
            q = self.U.poles[self.l - 1]
            return self.lam * w / (w - q)

    def phi(self, k: int, z):
        """Branch value on sheet k at z (real or complex, off that sheet's slits)."""
        w = preimage_on_sheet(self.U, k, z)
        return self.moebius(w)

    def phi_all(self, z) -> dict:
        """All branch values available at z (sheet -> value)."""
        if mp.im(z) == 0:
            ws = preimages_real(self.U, mp.re(z))
        else:
            ws = preimages_complex(self.U, z)
        return {k: self.moebius(w) for k, w in ws.items()}

    def branch_product(self, z):
        with working_prec(self.U.precision_bits):
            vals = self.phi_all(z)
            if len(vals) != self.U.p + 1:
                raise BranchAssignmentError(
                    "branch product needs all sheets; move z off the slits"
                )
            out = mp.mpf(1)
            for v in vals.values():
                out = out * v
            return out


def normalize_family(U: Uniformization, l: int) -> ConformalFamily:
    """Fix the scale of the map with pole over infinity on sheet l.

    The branch product of a Moebius function of w composed with the sheet
    assignment is exactly constant; the scale lam makes it unimodular with
    the sheet-0 leading coefficient positive, which pins lam and all leading
    Laurent coefficients in closed form.
    """
    if not 1 <= l <= U.p:
        raise ValueError(f"need 1 <= l <= p, got {l}")
    p = U.p
    with working_prec(U.precision_bits):
        qs = U.poles
        prod_minus_q = mp.mpf(1)
        for q in qs:
            prod_minus_q *= -q
        if l < p:
            ql = qs[l - 1]
            denom = U.residues[l - 1] * ql
            for i, q in enumerate(qs):
                if i != l - 1:
                    denom *= ql - q
            K = U.gamma * prod_minus_q / denom
            lam = -mp.power(abs(K), mp.mpf(-1) / (p + 1))
            omega = -lam * U.gamma / ql
        else:
            K = ((-1) ** (p + 1)) * U.gamma * prod_minus_q / U.alpha
            lam = mp.power(abs(K), mp.mpf(-1) / (p + 1))
            omega = lam * U.gamma
        # branch product = lam^{p+1} K, so its sign is sign(lam)^{p+1} sign(K)
        s_lam = -1 if lam < 0 else 1
        sign = (s_lam ** (p + 1)) * int(mp.sign(K))
        if omega <= 0:
            raise UniformizationError("normalization failed: leading coefficient not positive")

        omegas = []
        for j in range(p + 1):
            if j == 0:
                omegas.append(omega)
            elif j == l:
                if l < p:
                    omegas.append(lam * qs[l - 1] / U.residues[l - 1])
                else:
                    omegas.append(lam / U.alpha)
            elif j < p:
                if l < p:
                    omegas.append(lam * qs[j - 1] / (qs[j - 1] - qs[l - 1]))
                else:
                    omegas.append(lam * qs[j - 1])
            else:  # j == p != l
                omegas.append(lam)
        return ConformalFamily(
            U=U, l=l, lam=lam, omega=omega, omega_j=tuple(omegas), sign=sign
        )


def laurent_fit_leading(family: ConformalFamily, k: int, radius=None, npts: int = 4):
    """Independent estimate of the leading Laurent data of branch k at
    infinity from npts samples on a large circle: returns (pole coefficient,
    constant, residue-of-1/z term).  Used to cross-check the closed forms.

    The truncation error of the 4-term fit scales like (scale/radius)^2, so
    the default radius is taken very large.
    """
    U = family.U
    with working_prec(U.precision_bits):
        R0 = radius or mp.mpf(10) ** 6 * U.scale()
        # phi_k(z) = A z + B + C/z + D/z^2 ; fit from npts >= 4 samples
        zs = [R0 * mp.exp(mp.mpc(0, 2 * mp.pi * (i + mp.mpf(1) / 3) / npts)) for i in range(npts)]
        vals = [family.phi(k, z) for z in zs]
        Amat = mp.matrix(npts, 4)
        bvec = mp.matrix(npts, 1)
        for i, (z, v) in enumerate(zip(zs, vals)):
            Amat[i, 0] = z
            Amat[i, 1] = 1
            Amat[i, 2] = 1 / z
            Amat[i, 3] = 1 / z**2
            bvec[i] = v
        sol = mp.lu_solve(Amat, bvec)
        return sol[0], sol[1], sol[2]


def slit_gluing_mismatch(family: ConformalFamily, k_slit: int, x, delta=None):
    """|phi_k(x + i d) - phi_{k+1}(x - i d)| across slit k_slit, the gluing
    contract between neighboring sheets; d defaults to 2^-(prec/4) of the
    slit length."""
    U = family.U
    with working_prec(U.precision_bits):
        a, b = U.intervals[k_slit]
        d = delta or (b - a) * mp.mpf(2) ** (-U.precision_bits // 4)
        z = mp.mpc(x, d)
        up = preimages_complex(U, z)
        return abs(family.moebius(up[k_slit]) - mp.conj(family.moebius(up[k_slit + 1])))


def surface_export(U: Uniformization, families: dict | None = None) -> dict:
    """JSON-ready dict with all map parameters, pole-sheet assignment,
    leading-coefficient tables, and residual certificates."""
    def s(x, digits=None):
        return mp.nstr(x, digits or int(U.precision_bits / 3.32) + 2)

    out = {
        "p": U.p,
        "map": {
            "alpha": s(U.alpha),
            "beta": s(U.beta),
            "gamma": s(U.gamma),
            "residues": [s(r) for r in U.residues],
            "poles": [s(q) for q in U.poles],
        },
        "pole_to_sheet": {"0": 0, **{s(q, 20): j + 1 for j, q in enumerate(U.poles)}, "inf": U.p},
        "critical_points": [s(c) for c in U.crit_points],
        "critical_values": [s(v) for v in U.crit_values],
        "intervals": [[s(a), s(b)] for a, b in U.intervals],
        "precision_bits": U.precision_bits,
        "newton_residual": s(U.newton_residual, 10),
    }
    if families:
        out["families"] = {
            str(l): {
                "lambda": s(f.lam),
                "omega": s(f.omega),
                "omega_j": [s(w) for w in f.omega_j],
                "branch_product_sign": f.sign,
            }
            for l, f in sorted(families.items())
        }
    return out
