"""Exact identity checks and finite-n diagnostics for the limit laws.

Combinatorial identities are evaluated in ``fractions.Fraction`` so that
equality is exact; asymptotic statements are only checkable as trends and
are evaluated in double precision.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from bpve.environment import EnvironmentSpec, toeplitz_weights
from bpve.limits import (
    lambda_from_mu,
    lambda_from_q,
    mu_from_lambda,
    mu_from_q,
    q_from_lambda,
    stirling1,
    stirling1_signed,
    stirling2,
)
from bpve.pgf import Pmf, eval_pgf, factorial_moment, mean_product, shape_function, tail_compose_all

RationalValue = Fraction

S_GRID = tuple(i / 10 for i in range(10)) + (0.99, 1.0)


def lemma_sum_check(k: int, x: Fraction) -> tuple[Fraction, Fraction]:
    """Both sides of sum_i C(k-1,i)(-1)^i((1+x)^i - 1)/i = sum_i (-1)^i x^i / i, i = 1..k-1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    x = Fraction(x)
    lhs = sum(
        (Fraction(math.comb(k - 1, i) * (-1) ** i) * ((1 + x) ** i - 1) / i for i in range(1, k)),
        Fraction(0),
    )
    rhs = sum((Fraction((-1) ** i, i) * x**i for i in range(1, k)), Fraction(0))
    return lhs, rhs


def lemma_binom3_check(L: int, n: int, x: Fraction) -> tuple[Fraction, Fraction]:
    """Both sides of sum_j sum_l (-1)^(l+j) C(L+n, j+n) C(j-l+n-1, n-1) x^l = (1+x)^L - 1."""
    if L < 1 or n < 1:
        raise ValueError("L and n must be >= 1")
    x = Fraction(x)
    lhs = Fraction(0)
    for j in range(1, L + 1):
        for l in range(1, j + 1):
            lhs += (-1) ** (l + j) * math.comb(L + n, j + n) * math.comb(j - l + n - 1, n - 1) * x**l
    return lhs, (1 + x) ** L - 1


def random_rationals(count: int, seed: int = 20240229, bound: int = 20) -> list[Fraction]:
    """Seeded rationals with numerator and denominator in [-bound, bound] (denominator != 0)."""
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        num = rng.randint(-bound, bound)
        den = rng.randint(-bound, bound)
        if den:
            out.append(Fraction(num, den))
    return out


def stirling_inversion_defect(kmax: int) -> int:
    """Number of (k, m) pairs, k, m <= kmax, where sum_i S(k,i) (-1)^(i+m) [i,m] != [k == m]."""
    bad = 0
    for k in range(kmax + 1):
        for m in range(kmax + 1):
            total = sum((-1) ** (i + m) * stirling2(k, i) * stirling1_signed(i, m)
                        for i in range(kmax + 1))
            bad += total != (1 if k == m else 0)
    return bad


def falling_factorial_defect(jmax: int, kmax: int) -> int:
    """Pairs (j, k) where sum_i (-1)^(k+i) [k,i] j^i differs from j (j-1) ... (j-k+1)."""
    bad = 0
    for j in range(jmax + 1):
        for k in range(kmax + 1):
            lhs = sum((-1) ** (k + i) * stirling1(k, i) * j**i for i in range(k + 1))
            bad += lhs != math.perm(j, k)
    return bad


def moment_consistency_defect(q: Sequence, kmax: int) -> int:
    """Orders k <= kmax where sum_i S(k,i) i! lambda_i != sum_j q_j j^k, lambda from q."""
    lam = lambda_from_q(q, max(len(q), kmax) + 1)
    return sum(mu_from_lambda(lam, k) != mu_from_q(q, k) for k in range(1, kmax + 1))


def moment_inversion_defect(q: Sequence, kmax: int) -> int:
    """Orders where the first-kind inversion of mu does not return lambda_from_q."""
    lam = lambda_from_q(q, kmax)
    mu = [mu_from_q(q, k) for k in range(1, kmax + 1)]
    back = lambda_from_mu(mu, kmax)
    return sum(a != b for a, b in zip(back, lam.values))


def inversion_roundtrip_ok(q: Sequence) -> bool:
    lam = lambda_from_q(q, len(q) + 1)
    back = q_from_lambda(lam).values
    trimmed = list(q)
    while trimmed and trimmed[-1] == 0:
        trimmed.pop()
    return tuple(back) == tuple(trimmed)


def taylor_remainder_check(law: Pmf, ell: int, s_grid: Iterable[float]) -> float:
    """max over s of |R_ell(s)| - m_ell/ell! |s-1|^ell, where R_ell is the Taylor remainder of h at 1."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    m = [factorial_moment(law, k) for k in range(ell + 1)]
    m[0] = 1.0
    worst = -math.inf
    for s in s_grid:
        head = math.fsum(m[k] / math.factorial(k) * (s - 1.0) ** k for k in range(ell))
        r = eval_pgf(law, s) - head
        bound = m[ell] / math.factorial(ell) * abs(s - 1.0) ** ell
        worst = max(worst, abs(r) - bound)
    return worst


def toeplitz_limit_check(env: EnvironmentSpec, k: int, x_seq: Callable[[int], float],
                         x_limit: float, n: int) -> float:
    """|sum_j a_{n,j}^(k) x_j - x/k| at horizon n."""
    w = toeplitz_weights(env, n, k)
    xs = np.array([x_seq(j) for j in range(1, n + 1)], dtype=float)
    return abs(math.fsum(w * xs) - x_limit / k)


def phi_uniformity_diag(env: EnvironmentSpec, n: int, s_grid: Iterable[float] = S_GRID) -> float:
    """max over the grid of |phi_n(1) - phi_n(s)| / (1 - fbar_n)."""
    law = env.offspring_at(n)
    d = 1.0 - law.mean
    at_one = shape_function(law, 1.0)
    dev = max(abs(at_one - shape_function(law, s)) for s in s_grid)
    if dev == 0.0:
        return 0.0
    return dev / d


def fconv_deviation(env: EnvironmentSpec, n: int, s: float) -> float:
    """|fbar_{0,n} / (1 - f_{0,n}(s)) - (1/(1-s) + nu/2)|."""
    f0n = tail_compose_all(env, n, s)[0]
    return abs(mean_product(env, 0, n) / (1.0 - f0n) - (1.0 / (1.0 - s) + env.nu / 2.0))


def immigration_pgf_factors(env: EnvironmentSpec, n: int, s) -> np.ndarray:
    """h_j(f_{j,n}(s)) for j = 1..n."""
    f = tail_compose_all(env, n, s)
    return np.array([eval_pgf(env.immigration_at(j), f[j]) for j in range(1, n + 1)])


def product_pgf(env: EnvironmentSpec, n: int, s) -> float:
    """g_n(s) = prod_j h_j(f_{j,n}(s))."""
    h = immigration_pgf_factors(env, n, s)
    g = np.exp(np.sum(np.log(h), axis=0))
    return float(g) if np.ndim(g) == 0 else g


def accompanying_gap(env: EnvironmentSpec, n: int, s: float) -> float:
    """|g_n(s) - prod_j exp(h_j(f_{j,n}(s)) - 1)|."""
    h = immigration_pgf_factors(env, n, s)
    g = math.exp(math.fsum(np.log(h)))
    ghat = math.exp(math.fsum(h - 1.0))
    return abs(g - ghat)


@dataclass
class IdentityResult:
    name: str
    cases: int
    failures: int

    @property
    def passed(self) -> bool:
        return self.failures == 0


def run_identity_suite(max_k: int = 12, max_ln: int = 10, samples: int = 50,
                       seed: int = 20240229) -> list[IdentityResult]:
    """All exact identities at the stated ranges; each returns zero failures when correct."""
    xs = random_rationals(samples, seed)
    results = []

    fails = cases = 0
    for k in range(1, max_k + 1):
        for x in xs:
            lhs, rhs = lemma_sum_check(k, x)
            cases += 1
            fails += lhs != rhs
    results.append(IdentityResult("lemma_sum", cases, fails))

    fails = cases = 0
    for L in range(1, max_ln + 1):
        for n in range(1, max_ln + 1):
            for x in xs:
                lhs, rhs = lemma_binom3_check(L, n, x)
                cases += 1
                fails += lhs != rhs
    results.append(IdentityResult("lemma_binom3", cases, fails))

    results.append(
        IdentityResult("stirling_inversion", (max_k + 1) ** 2, stirling_inversion_defect(max_k))
    )
    results.append(
        IdentityResult("falling_factorial", (max_k + 1) ** 2, falling_factorial_defect(max_k, max_k))
    )

    rng = random.Random(seed + 1)
    qs = [[rng.randint(0, 5) for _ in range(rng.randint(1, 10))] for _ in range(samples)]
    qs = [q for q in qs if any(q)]
    rq = [[Fraction(rng.randint(0, 20), rng.randint(1, 20)) for _ in range(rng.randint(1, 6))]
          for _ in range(samples)]
    fails = sum(moment_consistency_defect(q, 8) for q in qs + rq)
    results.append(IdentityResult("moments_stirling2", 8 * len(qs + rq), fails))
    fails = sum(moment_inversion_defect(q, max_k) for q in qs + rq)
    results.append(IdentityResult("lambda_stirling1_inversion", max_k * len(qs + rq), fails))
    fails = sum(not inversion_roundtrip_ok(q) for q in qs + rq)
    results.append(IdentityResult("lambda_q_roundtrip", len(qs + rq), fails))
    return results
