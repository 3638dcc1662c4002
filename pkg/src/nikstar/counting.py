"""Exact integer combinatorics of the star-like Nikishin setting.

Everything in this module is pure integer arithmetic: residue classes of the
polynomial index n modulo p+1 and p, the number of orthogonality conditions
Z(n, k) carried by the second-kind functions, the period-p increment
Lambda(n, k), the parity function theta(n, k), and the signs epsilon_k used
to normalize ratio limits.  No floats anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass


def _ceil_div(a: int, b: int) -> int:
    """Ceiling of a/b for integers, b > 0 (so ceil(-1/3) == 0)."""
    return -((-a) // b)


@dataclass(frozen=True)
class SystemShape:
    """Number p >= 2 of generating measures; fixes all residue arithmetic."""

    p: int

    def __post_init__(self) -> None:
        if self.p < 2:
            raise ValueError(f"need p >= 2, got p={self.p}")

    @property
    def period(self) -> int:
        """Common period p(p+1) of the recurrence-coefficient limits."""
        return self.p * (self.p + 1)


@dataclass(frozen=True)
class IndexPair:
    """The unique (k, l) with rho = (k-1) mod (p+1) and rho = (l-1) mod p."""

    rho: int
    k: int
    l: int


def residue_ell(n: int, shape: SystemShape) -> int:
    """Residue ell(n) in [0, p] with n = ell mod (p+1)."""
    if n < 0:
        raise ValueError(f"need n >= 0, got {n}")
    return n % (shape.p + 1)


def index_pair(rho: int, shape: SystemShape) -> IndexPair:
    """Resolve rho into the sheet index k in [0, p] and map index l in [1, p].

    rho is first reduced modulo p(p+1), matching the periodic extension of
    the limit values to all integers.
    """
    p = shape.p
    r = rho % shape.period
    k = (r + 1) % (p + 1)
    l = r % p + 1
    return IndexPair(rho=r, k=k, l=l)


def count_Mj(n: int, j: int, shape: SystemShape) -> int:
    """Number of powers s with ceil((ell-j)/(p+1)) <= s <= floor((n+p*ell-1-j(p+1))/(p(p+1))).

    Returns 0 when the range is empty.
    """
    p = shape.p
    if not 0 <= j <= p - 1:
        raise ValueError(f"need 0 <= j <= p-1, got j={j}")
    ell = residue_ell(n, shape)
    s_lo = _ceil_div(ell - j, p + 1)
    s_hi = (n + p * ell - 1 - j * (p + 1)) // (p * (p + 1))
    return max(0, s_hi - s_lo + 1)


def condition_range(n: int, j: int, shape: SystemShape) -> range:
    """The power range [s_lo, s_hi] behind count_Mj, as a Python range."""
    p = shape.p
    ell = residue_ell(n, shape)
    s_lo = _ceil_div(ell - j, p + 1)
    s_hi = (n + p * ell - 1 - j * (p + 1)) // (p * (p + 1))
    return range(s_lo, s_hi + 1)


def Z(n: int, k: int, shape: SystemShape) -> int:
    """Total orthogonality count Z(n,k) = sum_{j=k}^{p-1} M_j(n); Z(n,p) = 0.

    Z(n,k) is also the exact number of zeros of the k-th second-kind
    function on its zero interval.
    """
    p = shape.p
    if not 0 <= k <= p:
        raise ValueError(f"need 0 <= k <= p, got k={k}")
    return sum(count_Mj(n, j, shape) for j in range(k, p))


def Lambda(n: int, k: int, shape: SystemShape) -> int:
    """Increment Z(n+p+1, k) - Z(n, k); always 0 or 1.

    The result is checked against the closed form (period p in n) on every
    call; the two expressions are an exact integer identity.
    """
    val = Z(n + shape.p + 1, k, shape) - Z(n, k, shape)
    closed = lambda_closed_form(n, k, shape)
    if val != closed:
        raise AssertionError(
            f"Lambda mismatch at n={n}, k={k}, p={shape.p}: "
            f"definition gives {val}, closed form gives {closed}"
        )
    return val


def lambda_closed_form(n: int, k: int, shape: SystemShape) -> int:
    """0 if n mod p lies in [0, k-1], else 1."""
    p = shape.p
    if not 0 <= k <= p:
        raise ValueError(f"need 0 <= k <= p, got k={k}")
    return 0 if n % p <= k - 1 else 1


def theta(n: int, k: int, shape: SystemShape) -> int:
    """Parity function theta(n, k) in {0, 1}, driven by ell(n) and the parity of k."""
    p = shape.p
    if not 0 <= k <= p - 1:
        raise ValueError(f"need 0 <= k <= p-1, got k={k}")
    ell = residue_ell(n, shape)
    if ell <= k - 1:
        return 1
    if k + 1 <= ell <= p - 1:
        return 0
    if ell == k:
        return 1 if k % 2 == 1 else 0
    return 1  # ell == p


def epsilon(rho: int, k: int, shape: SystemShape) -> int:
    """Sign epsilon_k in {+1, -1} entering the second-kind ratio limits.

    epsilon_k = (-1)**(Z(rho+1, K) - Z(rho, K) + theta(rho, k-1)) with
    K = 2*ceil((k-1)/2).  rho is reduced modulo p(p+1) on entry.
    """
    p = shape.p
    if not 1 <= k <= p:
        raise ValueError(f"need 1 <= k <= p, got k={k}")
    r = rho % shape.period
    kk = 2 * _ceil_div(k - 1, 2)
    expo = Z(r + 1, kk, shape) - Z(r, kk, shape) + theta(r, k - 1, shape)
    return -1 if expo % 2 else 1


def sign_phi_infinity(k: int, l: int, shape: SystemShape) -> int:
    """Sign of the leading Laurent coefficient of the k-th branch of the l-th conformal map.

    For odd l the sign is +1 for 0 <= k <= l and -1 for l < k <= p; for even
    l it is +1 for 0 <= k < l and -1 for l <= k <= p.
    """
    p = shape.p
    if not 0 <= k <= p:
        raise ValueError(f"need 0 <= k <= p, got k={k}")
    if not 1 <= l <= p:
        raise ValueError(f"need 1 <= l <= p, got l={l}")
    if l % 2 == 1:
        return 1 if k <= l else -1
    return 1 if k < l else -1


def sign_f_product(k: int, l: int, shape: SystemShape) -> int:
    """Sign of prod_{nu=k+1}^{p} of the branch values at infinity.

    Equals (-1)**(p+1) for 0 <= k <= l-1 and (-1)**(p+k) for l <= k <= p-1.
    """
    p = shape.p
    if not 0 <= k <= p - 1:
        raise ValueError(f"need 0 <= k <= p-1, got k={k}")
    if not 1 <= l <= p:
        raise ValueError(f"need 1 <= l <= p, got l={l}")
    expo = p + 1 if k <= l - 1 else p + k
    return -1 if expo % 2 else 1
