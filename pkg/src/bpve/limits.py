"""Limit laws: the geometric Yaglom limit and the compound-Poisson limit with immigration.

Conventions used throughout::

    r = nu / (2 + nu)        c = 1 + 2/nu = 1/r
    B(n, j) = r^n (c^min(n,j) - 1) / n
    A_n = sum_j q_j B(n, j)
    f_Y(s) = exp{ sum_n A_n (s^n - 1) }

The closed form in ``(1 - s)`` and the power series in ``s`` are two
independent routes to the same ``f_Y``; tests play them against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from bpve.pgf import DomainError, Pmf

STIRLING_MAX = 64
SERIES_TOL = 1e-12


@dataclass(frozen=True)
class LambdaSequence:
    """Normalized factorial-moment limits lambda_1, lambda_2, ...

    Stored values are lambda_1..lambda_K; beyond them the sequence is zero
    unless ``generator`` supplies further terms (infinitely many nonzero
    lambdas, with ``growth`` recording the declared limsup lambda_k^(1/k)).
    """

    values: tuple
    generator: Callable[[int], float] | None = None
    growth: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if any(v < 0 for v in self.values):
            raise ValueError("lambda_k must be nonnegative")
        if self.generator is not None and self.growth is None:
            raise ValueError("a generator-backed sequence needs a declared growth bound")
        if self.growth is not None and self.growth > 1:
            raise ValueError("limsup lambda_k^(1/k) must be <= 1")

    @property
    def terminated(self) -> bool:
        """True when a stored lambda_K equals zero (finitely many nonzero terms)."""
        return self.generator is None and any(v == 0 for v in self.values)

    def __getitem__(self, k: int):
        if k < 1:
            raise IndexError("lambda is indexed from 1")
        if k <= len(self.values):
            return self.values[k - 1]
        if self.generator is not None:
            return self.generator(k)
        return 0

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class QSequence:
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if any(v < 0 for v in self.values):
            raise ValueError("q_j must be nonnegative")

    def __len__(self) -> int:
        return len(self.values)


def _q_values(q) -> tuple:
    return q.values if isinstance(q, QSequence) else tuple(q)


def _lambda_values(lam) -> tuple:
    return lam.values if isinstance(lam, LambdaSequence) else tuple(lam)


@dataclass(frozen=True)
class CompoundPoissonLaw:
    """exp{sum_{n>=1} A_n (s^n - 1)} with A_1..A_N stored and a0 = sum of all A_n."""

    a0: float
    a: tuple[float, ...]
    tail_bound: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        if any(v < 0 for v in self.a) or self.a0 < 0:
            raise ValueError("compound-Poisson coefficients must be nonnegative")
        if math.fsum(self.a) > self.a0 + 1e-9:
            raise ValueError("stored coefficients exceed the declared total a0")

    @property
    def N(self) -> int:
        return len(self.a)

    def log_pgf(self, s):
        s = np.asarray(s, dtype=float)
        n = np.arange(1, self.N + 1)
        powers = s[..., None] ** n
        val = powers @ np.asarray(self.a) - self.a0
        return float(val) if val.ndim == 0 else val

    def pgf(self, s):
        return np.exp(self.log_pgf(s))

    def mean(self) -> float:
        return math.fsum(n * an for n, an in enumerate(self.a, start=1))


# --- geometric Yaglom limit ------------------------------------------------


def _geometric_cap(p: float, tol: float = 1e-16) -> int:
    if p >= 1.0:
        return 1
    return max(1, int(math.ceil(math.log(tol) / math.log1p(-p))))


def geometric_limit(nu: float, cap: int | None = None) -> Pmf:
    """Geom(2/(2+nu)) on {1, 2, ...}: P(V = k) = (1-p)^(k-1) p."""
    if nu < 0:
        raise DomainError("nu must be nonnegative")
    p = 2.0 / (2.0 + nu)
    if cap is None:
        cap = _geometric_cap(p)
    k = np.arange(cap + 1)
    probs = np.where(k >= 1, p * (1.0 - p) ** np.maximum(k - 1, 0), 0.0)
    return Pmf(probs, (1.0 - p) ** cap)


# --- closed form of the limit g.f. ------------------------------------------


def _scaled_log_remainder(k: int, nu: float, s: float) -> float:
    """(2/nu)^k [log(1 + x) + sum_{i<k} (-1)^i x^i / i] with x = nu (1-s) / 2."""
    u = 1.0 - s
    x = nu * u / 2.0
    if x <= 0.5:
        # tail of the log series: sum_{i>=k} (-1)^(i+1) x^i / i, rescaled by (2/nu)^k
        acc = []
        xi = 1.0  # x^(i-k)
        i = k
        while True:
            term = (1.0 if i % 2 else -1.0) * xi / i
            acc.append(term)
            if abs(term) < 1e-18 * abs(acc[0]):
                break
            i += 1
            xi *= x
        return u**k * math.fsum(acc)
    parts = [math.log1p(x)] + [(-1.0) ** i * x**i / i for i in range(1, k)]
    return (2.0 / nu) ** k * math.fsum(parts)


def fY_closed_form(lam: LambdaSequence | Sequence[float], nu: float, s: float,
                   tol: float = SERIES_TOL, max_terms: int = 100_000) -> float:
    """Limit g.f. of Y as a series in (1 - s).

    Finite sequences are summed exactly. Generator-backed sequences are cut
    once lambda_k (1-s)^k / k, which bounds the k-th term, drops below ``tol``.
    """
    if nu <= 0:
        raise DomainError("the closed form needs nu > 0")
    if not 0.0 <= s < 1.0:
        raise DomainError(f"s must lie in [0, 1), got {s}")
    if not isinstance(lam, LambdaSequence):
        lam = LambdaSequence(tuple(lam))
    terms = []
    stored = len(lam.values)
    k = 1
    while True:
        if k > stored and lam.generator is None:
            break
        lk = float(lam[k])
        if lk:
            terms.append(lk * _scaled_log_remainder(k, nu, s))
        if k >= stored and lam.generator is not None and lk * (1.0 - s) ** k / k < tol:
            break
        k += 1
        if k > max_terms:
            raise ArithmeticError("lambda series did not reach the cutoff")
    return math.exp(-math.fsum(terms))


# --- lambda <-> q ----------------------------------------------------------


def lambda_from_q(q: QSequence | Sequence, K: int) -> LambdaSequence:
    """lambda_k = sum_{j>=k} C(j, k) q_j for k = 1..K (exact for Fraction/int input)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    qv = _q_values(q)
    if any(v < 0 for v in qv):
        raise ValueError("q_j must be nonnegative")
    out = []
    for k in range(1, K + 1):
        out.append(sum((math.comb(j, k) * qv[j - 1] for j in range(k, len(qv) + 1)), 0))
    return LambdaSequence(tuple(out))


def q_from_lambda(lam: LambdaSequence | Sequence) -> QSequence:
    """Binomial inversion q_j = sum_{k>=j} (-1)^(k-j) C(k, j) lambda_k (finite sequences only)."""
    if isinstance(lam, LambdaSequence) and lam.generator is not None:
        raise ValueError("inversion needs finitely many nonzero lambdas")
    lv = _lambda_values(lam)
    K = len(lv)
    q = []
    for j in range(1, K + 1):
        q.append(sum(((-1) ** (k - j) * math.comb(k, j) * lv[k - 1] for k in range(j, K + 1)), 0))
    for j, v in enumerate(q, start=1):
        if v < -1e-9:
            raise ValueError(f"q_{j} = {v} < 0: lambda is not realizable by a finite-support q")
    while q and q[-1] == 0:
        q.pop()
    q = [max(v, 0) if isinstance(v, float) else v for v in q]
    return QSequence(tuple(q))


# --- compound-Poisson coefficients -----------------------------------------


def B_closed_form(n: int, j: int, nu: float) -> float:
    """B(n, j) = nu^n / ((2+nu)^n n) [ (1 + 2/nu)^min(n,j) - 1 ]."""
    if n < 1 or j < 1:
        raise ValueError("n, j must be >= 1")
    if nu <= 0:
        raise DomainError("nu must be positive")
    m = min(n, j)
    # (1 + 2/nu)^m written as (2+nu)^m / nu^m keeps each power exact-ish
    lead = (nu**n / (2.0 + nu) ** n) * ((2.0 + nu) ** m / nu**m)
    return (lead - (nu / (2.0 + nu)) ** n) / n


def _b(n: int, j: int, r: float) -> float:
    m = min(n, j)
    return (r ** (n - m) - r**n) / n


def _shifted_log_series(r: float, j: int) -> float:
    """sum_{m>=1} r^m / (m + j)."""
    acc = []
    rm = r
    m = 1
    while True:
        term = rm / (m + j)
        acc.append(term)
        if term < 1e-18 * acc[0]:
            break
        m += 1
        rm *= r
    return math.fsum(acc)


def _total_b(j: int, r: float) -> float:
    """sum_{n>=1} B(n, j)."""
    head = math.fsum((1.0 - r**n) / n for n in range(1, j + 1))
    # sum_{n>j} (r^(n-j) - r^n) / n
    tail_shifted = _shifted_log_series(r, j)
    tail_plain = r**j * _shifted_log_series(r, j)
    return head + tail_shifted - tail_plain


def truncation_order(q: QSequence | Sequence, nu: float, tol: float = SERIES_TOL) -> int:
    """Smallest N >= J with the geometric tail sum_{n>N} A_n below ``tol``."""
    qv = [float(v) for v in _q_values(q)]
    r = nu / (2.0 + nu)
    J = max(len(qv), 1)
    C = math.fsum(qj * (r ** (-j) - 1.0) for j, qj in enumerate(qv, start=1))
    N = J
    while C * r ** (N + 1) / ((N + 1) * (1.0 - r)) >= tol:
        N += 1
    return N


def A_coefficients(q: QSequence | Sequence, nu: float, N: int | None = None) -> CompoundPoissonLaw:
    """Poisson-mixture coefficients A_1..A_N of the limit law and their full sum a0."""
    if nu <= 0:
        raise DomainError("A_n needs nu > 0")
    qv = [float(v) for v in _q_values(q)]
    if any(v < 0 for v in qv):
        raise ValueError("q_j must be nonnegative")
    if N is None:
        N = truncation_order(qv, nu)
    if N < 1:
        raise ValueError("N must be >= 1")
    r = nu / (2.0 + nu)
    a = [
        math.fsum(qj * _b(n, j, r) for j, qj in enumerate(qv, start=1))
        for n in range(1, N + 1)
    ]
    a0 = math.fsum(qj * _total_b(j, r) for j, qj in enumerate(qv, start=1))
    C = math.fsum(qj * (r ** (-j) - 1.0) for j, qj in enumerate(qv, start=1))
    tail = C * r ** (N + 1) / ((N + 1) * (1.0 - r)) if N >= len(qv) else float("nan")
    return CompoundPoissonLaw(max(a0, math.fsum(a)), tuple(a), tail)


def cp_pmf(law: CompoundPoissonLaw, cap: int) -> Pmf:
    """p_0 = exp(-a0), p_m = (1/m) sum_{n<=min(m,N)} n A_n p_{m-n}; the rest is lost mass."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    nA = np.arange(1, law.N + 1) * np.asarray(law.a, dtype=float)
    p = np.zeros(cap + 1)
    p[0] = math.exp(-law.a0)
    for m in range(1, cap + 1):
        top = min(m, law.N)
        p[m] = np.dot(nA[:top], p[m - 1 :: -1][:top]) / m
    lost = max(1.0 - math.fsum(p), 0.0)
    return Pmf(p, lost)


def negbin_limit(lambda1: float, nu: float, cap: int) -> Pmf:
    """NB(r = 2 lambda1/nu, p = 2/(2+nu)) on {0, 1, ...}."""
    if lambda1 <= 0 or nu <= 0:
        raise DomainError("lambda1 and nu must be positive")
    r = 2.0 * lambda1 / nu
    p = 2.0 / (2.0 + nu)
    probs = stats.nbinom.pmf(np.arange(cap + 1), r, p)
    return Pmf(probs, float(stats.nbinom.sf(cap, r, p)))


# --- Stirling numbers ------------------------------------------------------


def _check_stirling_range(k: int, i: int) -> None:
    if k < 0 or i < 0:
        raise ValueError("Stirling arguments must be nonnegative")
    if k > STIRLING_MAX:
        raise OverflowError(f"Stirling numbers are tabulated only for k <= {STIRLING_MAX}")


@lru_cache(maxsize=None)
def _stirling2_table() -> tuple[tuple[int, ...], ...]:
    rows = [[1] + [0] * STIRLING_MAX]
    for k in range(1, STIRLING_MAX + 1):
        prev = rows[-1]
        row = [0] * (STIRLING_MAX + 1)
        for i in range(1, k + 1):
            row[i] = i * prev[i] + prev[i - 1]
        rows.append(row)
    return tuple(tuple(r) for r in rows)


@lru_cache(maxsize=None)
def _stirling1_table() -> tuple[tuple[int, ...], ...]:
    rows = [[1] + [0] * STIRLING_MAX]
    for k in range(1, STIRLING_MAX + 1):
        prev = rows[-1]
        row = [0] * (STIRLING_MAX + 1)
        for i in range(1, k + 1):
            row[i] = (k - 1) * prev[i] + prev[i - 1]
        rows.append(row)
    return tuple(tuple(r) for r in rows)


def stirling2(k: int, i: int) -> int:
    """Number of partitions of a k-set into i blocks."""
    _check_stirling_range(k, i)
    return _stirling2_table()[k][i] if i <= k else 0


def stirling1(k: int, i: int) -> int:
    """Unsigned first kind: permutations of k elements with i cycles."""
    _check_stirling_range(k, i)
    return _stirling1_table()[k][i] if i <= k else 0


def stirling1_signed(k: int, i: int) -> int:
    """First-kind bracket [k, i] for the signed inversion.

    The value itself is unsigned; callers attach (-1)^(k+i), as in
    sum_i (-1)^(k+i) [k, i] j^i = j (j-1) ... (j-k+1).
    """
    return stirling1(k, i)


def mu_from_lambda(lam: LambdaSequence | Sequence, k: int):
    """mu_k = sum_{i=1}^k S(k, i) i! lambda_i."""
    lv = _lambda_values(lam)
    return sum(
        (stirling2(k, i) * math.factorial(i) * lv[i - 1] for i in range(1, min(k, len(lv)) + 1)), 0
    )


def mu_from_q(q: QSequence | Sequence, k: int):
    """mu_k = sum_j q_j j^k."""
    return sum((qj * j**k for j, qj in enumerate(_q_values(q), start=1)), 0)


def lambda_from_mu(mu: Sequence, K: int):
    """k! lambda_k = sum_i s(k, i) mu_i, with mu = (mu_1, mu_2, ...); exact for rationals."""
    out = []
    for k in range(1, K + 1):
        total = sum(((-1) ** (k + i) * stirling1_signed(k, i) * mu[i - 1] for i in range(1, k + 1)), 0)
        val = Fraction(total, math.factorial(k)) if isinstance(total, int) else total / math.factorial(k)
        out.append(val)
    return tuple(out)
