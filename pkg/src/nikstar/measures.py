"""Generating measures, nested measures, and extended-precision quadrature.

The generating measures live on real intervals Delta_k = [a_k, b_k] whose
signs alternate with k (even k on the positive half-line, odd k on the
negative one) and whose consecutive members are disjoint.  Densities are
Jacobi-type: (tau - a)^alpha (b - tau)^beta times a polynomial with no zero
on the interval.  Every measure is discretized once by a Gauss-Jacobi rule
built at the configured bit precision; the nested measures mu_{k,j} are then
obtained by multiplying the outer rule's weights with tau times the Cauchy
transform of the inner measure, which is what the recursive definition
prescribes on disjoint intervals.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import mpmath as mp

from .counting import SystemShape, residue_ell

# Extra working bits on top of the configured precision; results are only
# ever trusted to the configured precision.
GUARD_BITS = 32


class MeasureConstructionError(ValueError):
    """Raised when a weight or interval specification is unusable."""


class SupportError(ValueError):
    """Raised when a Cauchy transform is requested on the support."""


def working_prec(precision_bits: int):
    """Context manager setting the mpmath working precision with guard bits."""
    return mp.workprec(precision_bits + GUARD_BITS)


def _to_mpf(x) -> mp.mpf:
    """Decimal-faithful conversion: strings and ints go straight to mpf."""
    if isinstance(x, mp.mpf):
        return x
    if isinstance(x, (int, str)):
        return mp.mpf(x)
    if isinstance(x, float):
        return mp.mpf(x)
    raise TypeError(f"cannot convert {type(x)!r} to mpf")


@dataclass(frozen=True)
class WeightSpec:
    """Density (tau - a)^alpha (b - tau)^beta * poly(tau) on one interval.

    alpha, beta > -1; poly is a coefficient tuple (ascending powers) with no
    zero on the closed interval, checked numerically at construction time.
    """

    alpha: mp.mpf = mp.mpf(0)
    beta: mp.mpf = mp.mpf(0)
    poly: tuple = (mp.mpf(1),)

    @staticmethod
    def parse(obj: dict) -> "WeightSpec":
        alpha = _to_mpf(obj.get("alpha", 0))
        beta = _to_mpf(obj.get("beta", 0))
        poly = tuple(_to_mpf(c) for c in obj.get("poly", [1]))
        return WeightSpec(alpha=alpha, beta=beta, poly=poly)

    def poly_eval(self, tau):
        acc = mp.mpf(0)
        for c in reversed(self.poly):
            acc = acc * tau + c
        return acc


@dataclass(frozen=True)
class StarSystemConfig:
    """One problem instance: p intervals, weights, precision and rule size."""

    p: int
    intervals: tuple
    weights: tuple
    precision_bits: int = 256
    quad_nodes: int = 128
    name: str = ""

    def __post_init__(self) -> None:
        if self.p < 2:
            raise MeasureConstructionError(f"need p >= 2, got {self.p}")
        if len(self.intervals) != self.p or len(self.weights) != self.p:
            raise MeasureConstructionError(
                f"need exactly p={self.p} intervals and weights"
            )
        if self.precision_bits < 128:
            raise MeasureConstructionError("precision_bits must be >= 128")
        if self.quad_nodes < 16:
            raise MeasureConstructionError("quad_nodes must be >= 16")
        for j, (a, b) in enumerate(self.intervals):
            if not a < b:
                raise MeasureConstructionError(f"interval {j} is empty: [{a}, {b}]")
            if j % 2 == 0 and not a >= 0:
                raise MeasureConstructionError(
                    f"even interval {j} must satisfy 0 <= a < b, got a={a}"
                )
            if j % 2 == 1 and not b <= 0:
                raise MeasureConstructionError(
                    f"odd interval {j} must satisfy a < b <= 0, got b={b}"
                )
        for j in range(self.p - 1):
            a0, b0 = self.intervals[j]
            a1, b1 = self.intervals[j + 1]
            if max(a0, a1) <= min(b0, b1):
                raise MeasureConstructionError(
                    f"consecutive intervals {j} and {j + 1} are not disjoint"
                )
        for j, w in enumerate(self.weights):
            if not (w.alpha > -1 and w.beta > -1):
                raise MeasureConstructionError(
                    f"weight {j}: endpoint exponents must exceed -1"
                )

    @property
    def shape(self) -> SystemShape:
        return SystemShape(self.p)

    def interval(self, k: int):
        return self.intervals[k]

    def digest(self) -> str:
        """Stable hash of the mathematical content of this configuration."""
        payload = {
            "p": self.p,
            "intervals": [[mp.nstr(a, 40), mp.nstr(b, 40)] for a, b in self.intervals],
            "weights": [
                {
                    "alpha": mp.nstr(w.alpha, 40),
                    "beta": mp.nstr(w.beta, 40),
                    "poly": [mp.nstr(c, 40) for c in w.poly],
                }
                for w in self.weights
            ],
            "precision_bits": self.precision_bits,
            "quad_nodes": self.quad_nodes,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @staticmethod
    def from_dict(obj: dict) -> "StarSystemConfig":
        intervals = tuple(
            (_to_mpf(a), _to_mpf(b)) for a, b in obj["intervals"]
        )
        weights = tuple(WeightSpec.parse(w) for w in obj.get(
            "weights", [{} for _ in obj["intervals"]]
        ))
        return StarSystemConfig(
            p=int(obj["p"]),
            intervals=intervals,
            weights=weights,
            precision_bits=int(obj.get("precision_bits", 256)),
            quad_nodes=int(obj.get("quad_nodes", 128)),
            name=str(obj.get("name", "")),
        )

    def with_overrides(self, precision_bits=None, quad_nodes=None) -> "StarSystemConfig":
        return StarSystemConfig(
            p=self.p,
            intervals=self.intervals,
            weights=self.weights,
            precision_bits=precision_bits or self.precision_bits,
            quad_nodes=quad_nodes or self.quad_nodes,
            name=self.name,
        )


def load_config(path: str, precision_bits=None) -> StarSystemConfig:
    """Read a JSON configuration.  Numbers may be given as decimal strings;
    floats in the file are re-parsed from their literal text so no double
    rounding occurs."""
    with open(path) as fh:
        obj = json.load(fh, parse_float=str)
    cfg = StarSystemConfig.from_dict(obj)
    if precision_bits:
        cfg = cfg.with_overrides(precision_bits=precision_bits)
    return cfg


@dataclass(frozen=True)
class DiscretizedMeasure:
    """Signed quadrature rule (nodes, weights) representing one measure."""

    interval_id: int
    support: tuple
    nodes: tuple
    weights: tuple
    meta: str = ""

    def mass(self):
        return mp.fsum(self.weights)

    def abs_mass(self):
        return mp.fsum(abs(w) for w in self.weights)

    def __len__(self) -> int:
        return len(self.nodes)


# ---------------------------------------------------------------------------
# Gauss-Jacobi rules
# ---------------------------------------------------------------------------

def _jacobi_recurrence(alpha, beta, n: int):
    """Monic three-term recurrence coefficients for the Jacobi weight
    (1-x)^alpha (1+x)^beta on [-1, 1]: returns (a_k)_{k<n}, (b_k)_{k<n}
    with b_0 = total mass."""
    a = []
    b = []
    ab = alpha + beta
    b0 = mp.power(2, ab + 1) * mp.beta(alpha + 1, beta + 1)
    for k in range(n):
        if k == 0:
            ak = (beta - alpha) / (ab + 2)
            bk = b0
        elif k == 1:
            # separate case: the general formula is 0/0 when alpha+beta = -1
            ak = (beta**2 - alpha**2) / ((2 + ab) * (4 + ab))
            bk = 4 * (1 + alpha) * (1 + beta) / ((2 + ab) ** 2 * (3 + ab))
        else:
            den = (2 * k + ab) * (2 * k + ab + 2)
            ak = (beta**2 - alpha**2) / den
            num = 4 * k * (k + alpha) * (k + beta) * (k + ab)
            den2 = (2 * k + ab) ** 2 * (2 * k + ab + 1) * (2 * k + ab - 1)
            bk = num / den2
        a.append(ak)
        b.append(bk)
    return a, b


def _gauss_rule_from_recurrence(a, b, n: int):
    """Nodes and weights of the n-point Gauss rule for the monic recurrence
    (a_k, b_k).  Float64 tridiagonal eigenvalues seed an mpmath Newton polish
    of the orthonormal-polynomial recurrence; the weights come from the
    reciprocal Christoffel sums."""
    af = np.array([float(x) for x in a[:n]])
    bf = np.array([float(x) for x in b[:n]])
    T = np.diag(af) + np.diag(np.sqrt(bf[1:]), 1) + np.diag(np.sqrt(bf[1:]), -1)
    seeds = np.sort(np.linalg.eigvalsh(T))

    sqrt_b = [mp.sqrt(x) for x in b[: n + 1]]

    def ortho_values(x):
        # orthonormal values p_0..p_n and derivative of p_n at x
        vals = [1 / sqrt_b[0]]
        ders = [mp.mpf(0)]
        prev, cur = mp.mpf(0), vals[0]
        dprev, dcur = mp.mpf(0), mp.mpf(0)
        for k in range(n):
            nxt = ((x - a[k]) * cur - (sqrt_b[k] if k > 0 else 0) * prev) / sqrt_b[k + 1]
            dnxt = ((x - a[k]) * dcur + cur - (sqrt_b[k] if k > 0 else 0) * dprev) / sqrt_b[k + 1]
            prev, cur = cur, nxt
            dprev, dcur = dcur, dnxt
            vals.append(cur)
            ders.append(dcur)
        return vals, ders[-1]

    nodes = []
    weights = []
    for s in seeds:
        x = mp.mpf(float(s))
        for _ in range(60):
            vals, dpn = ortho_values(x)
            step = vals[-1] / dpn
            x = x - step
            if abs(step) < mp.eps * (1 + abs(x)) * 4:
                break
        vals, _ = ortho_values(x)
        w = 1 / mp.fsum(v * v for v in vals[:-1])
        nodes.append(x)
        weights.append(w)
    return nodes, weights


_RULE_CACHE: dict = {}


def gauss_jacobi(alpha, beta, n: int, precision_bits: int):
    """n-point Gauss-Jacobi rule for (1-x)^alpha (1+x)^beta on [-1, 1]."""
    key = (str(alpha), str(beta), n, precision_bits)
    hit = _RULE_CACHE.get(key)
    if hit is not None:
        return hit
    with working_prec(precision_bits):
        a, b = _jacobi_recurrence(mp.mpf(alpha), mp.mpf(beta), n + 1)
        nodes, weights = _gauss_rule_from_recurrence(a, b, n)
    _RULE_CACHE[key] = (nodes, weights)
    return nodes, weights


def build_base_measure(config: StarSystemConfig, k: int, n_nodes: int | None = None) -> DiscretizedMeasure:
    """Discretize the k-th generating measure on [a_k, b_k].

    The Jacobi part of the density is absorbed by the rule; the analytic
    polynomial factor is folded into the weights after checking that it has
    no zero on the interval.
    """
    if not 0 <= k <= config.p - 1:
        raise ValueError(f"need 0 <= k <= p-1, got {k}")
    n = n_nodes or config.quad_nodes
    a, b = config.interval(k)
    w = config.weights[k]
    with working_prec(config.precision_bits):
        # (tau - a)^alpha maps to (1+x)^alpha and (b - tau)^beta to (1-x)^beta,
        # so the rule is Jacobi with parameters (beta, alpha) in mpmath order.
        xs, ws = gauss_jacobi(w.beta, w.alpha, n, config.precision_bits)
        half = (b - a) / 2
        mid = (b + a) / 2
        scale = mp.power(half, w.alpha + w.beta + 1)
        nodes = []
        weights = []
        sign0 = None
        check_pts = [a, b] + [mid + half * x for x in xs[:: max(1, n // 16)]]
        for t in check_pts:
            v = w.poly_eval(t)
            if v <= 0:
                raise MeasureConstructionError(
                    f"weight polynomial for interval {k} is not strictly positive "
                    f"(value {mp.nstr(v, 8)} at tau={mp.nstr(t, 8)})"
                )
        for x, wt in zip(xs, ws):
            tau = mid + half * x
            pv = w.poly_eval(tau)
            if pv <= 0:
                raise MeasureConstructionError(
                    f"weight polynomial for interval {k} vanishes on the interval"
                )
            nodes.append(tau)
            weights.append(scale * wt * pv)
        return DiscretizedMeasure(
            interval_id=k,
            support=(a, b),
            nodes=tuple(nodes),
            weights=tuple(weights),
            meta=f"sigma*_{k}",
        )


def cauchy_transform(m: DiscretizedMeasure, x):
    """Quadrature Cauchy transform sum w_i / (x - t_i); x must be off the support."""
    lo, hi = m.support
    if mp.im(x) == 0:
        xr = mp.re(x)
        if lo <= xr <= hi:
            raise SupportError(
                f"Cauchy transform requested at {mp.nstr(xr, 8)} inside support "
                f"[{mp.nstr(lo, 8)}, {mp.nstr(hi, 8)}]"
            )
    return mp.fsum(w / (x - t) for w, t in zip(m.weights, m.nodes))


def nested_measure(
    config: StarSystemConfig,
    k: int,
    j: int,
    cache: dict | None = None,
    n_nodes: int | None = None,
) -> DiscretizedMeasure:
    """The nested measure mu_{k,j}, 0 <= k <= j <= p-1.

    mu_{k,k} is the pushed-forward generator; for k < j the weights of the
    outer rule are multiplied by tau * Cauchy(mu_{k+1,j})(tau).  Weight
    vectors must come out one-signed; a mixed sign signals broken interval
    disjointness and raises.
    """
    if not 0 <= k <= j <= config.p - 1:
        raise ValueError(f"need 0 <= k <= j <= p-1, got k={k}, j={j}")
    key = (k, j, n_nodes or config.quad_nodes)
    if cache is not None and key in cache:
        return cache[key]
    with working_prec(config.precision_bits):
        base = build_base_measure(config, k, n_nodes=n_nodes)
        if k == j:
            out = base
        else:
            inner = nested_measure(config, k + 1, j, cache=cache, n_nodes=n_nodes)
            weights = []
            for tau, w in zip(base.nodes, base.weights):
                weights.append(w * tau * cauchy_transform(inner, tau))
            signs = {mp.sign(w) for w in weights}
            if len(signs) != 1:
                raise MeasureConstructionError(
                    f"mu_({k},{j}) has mixed-sign weights; interval layout invalid"
                )
            out = DiscretizedMeasure(
                interval_id=k,
                support=base.support,
                nodes=base.nodes,
                weights=tuple(weights),
                meta=f"mu_({k},{j})",
            )
    if cache is not None:
        cache[key] = out
    return out


def varying_measure(
    config: StarSystemConfig,
    n: int,
    k: int,
    base: DiscretizedMeasure | None = None,
) -> DiscretizedMeasure:
    """The n-dependent measure sigma_{n,k}: the generator itself when
    ell(n) <= k, and tau d(sigma*_k) when k < ell(n)."""
    if not 0 <= k <= config.p - 1:
        raise ValueError(f"need 0 <= k <= p-1, got {k}")
    ell = residue_ell(n, config.shape)
    if base is None:
        base = build_base_measure(config, k)
    if ell <= k:
        return DiscretizedMeasure(
            interval_id=k,
            support=base.support,
            nodes=base.nodes,
            weights=base.weights,
            meta=f"sigma_({n},{k})",
        )
    with working_prec(config.precision_bits):
        weights = tuple(w * t for w, t in zip(base.weights, base.nodes))
    return DiscretizedMeasure(
        interval_id=k,
        support=base.support,
        nodes=base.nodes,
        weights=weights,
        meta=f"sigma_({n},{k})",
    )


def moments(m: DiscretizedMeasure, s_max: int, precision_bits: int = 256):
    """Power moments [integral tau^s dm]_{s=0..s_max} by direct summation."""
    if s_max < 0:
        raise ValueError("s_max must be >= 0")
    with working_prec(precision_bits):
        out = []
        powers = [mp.mpf(1)] * len(m.nodes)
        for s in range(s_max + 1):
            out.append(mp.fsum(w * t for w, t in zip(m.weights, powers)))
            powers = [pw * t for pw, t in zip(powers, m.nodes)]
        return out


class MeasureCache:
    """Immutable-once-built cache of the nested measures of one configuration."""

    def __init__(self, config: StarSystemConfig, n_nodes: int | None = None):
        self.config = config
        self.n_nodes = n_nodes or config.quad_nodes
        self._nested: dict = {}
        self._base: dict = {}

    def base(self, k: int) -> DiscretizedMeasure:
        if k not in self._base:
            self._base[k] = build_base_measure(self.config, k, n_nodes=self.n_nodes)
        return self._base[k]

    def nested(self, k: int, j: int) -> DiscretizedMeasure:
        return nested_measure(self.config, k, j, cache=self._nested, n_nodes=self.n_nodes)

    def varying(self, n: int, k: int) -> DiscretizedMeasure:
        return varying_measure(self.config, n, k, base=self.base(k))
