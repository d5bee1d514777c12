"""Probability generating function primitives.

Distributions on the nonnegative integers are carried as truncated
probability vectors with an explicit ``lost_mass`` term for the probability
that fell beyond the last stored index. Nothing here ever renormalizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping

import numpy as np
from scipy import stats

if TYPE_CHECKING:
    from bpve.environment import EnvironmentSpec

MASS_TOL = 1e-9
# below 1 - s < TAYLOR_SWITCH the shape function uses the factorial-moment form
TAYLOR_SWITCH = 1e-6


class DomainError(ValueError):
    """Argument outside the domain of a generating function."""


class SingularityError(ArithmeticError):
    """The shape function is undefined (f(s) = 1 for some s < 1)."""


@dataclass(frozen=True, eq=False)
class Pmf:
    """Finite-support law on {0, ..., M} plus the mass truncated beyond M."""

    probs: np.ndarray
    lost_mass: float = 0.0

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).ravel()
        if p.size == 0:
            raise ValueError("pmf needs at least one entry")
        if np.any(p < -1e-15) or np.any(p > 1 + 1e-12):
            raise ValueError("pmf entries must lie in [0, 1]")
        p = np.clip(p, 0.0, 1.0)
        lost = float(self.lost_mass)
        if lost < 0:
            if lost < -MASS_TOL:
                raise ValueError(f"lost_mass must be nonnegative, got {lost}")
            lost = 0.0
        total = math.fsum(p) + lost
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"pmf mass {total!r} is not 1 within {MASS_TOL}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "lost_mass", lost)

    @classmethod
    def point(cls, k: int) -> Pmf:
        p = np.zeros(k + 1)
        p[k] = 1.0
        return cls(p)

    @classmethod
    def from_dict(cls, masses: Mapping[int, float], lost_mass: float = 0.0) -> Pmf:
        top = max(masses)
        p = np.zeros(top + 1)
        for k, v in masses.items():
            p[k] = v
        return cls(p, lost_mass)

    @classmethod
    def poisson(cls, mean: float, cap: int | None = None) -> Pmf:
        """Poisson law truncated at ``cap`` (default mean + 20 sqrt(mean) + 20)."""
        if mean < 0:
            raise ValueError("Poisson mean must be nonnegative")
        if cap is None:
            cap = int(math.ceil(mean + 20 * math.sqrt(mean) + 20))
        p = stats.poisson.pmf(np.arange(cap + 1), mean)
        lost = float(stats.poisson.sf(cap, mean))
        return cls(p, lost)

    @property
    def cap(self) -> int:
        return self.probs.size - 1

    def __getitem__(self, k: int) -> float:
        if 0 <= k < self.probs.size:
            return float(self.probs[k])
        return 0.0

    def total(self) -> float:
        return math.fsum(self.probs)

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def trimmed(self) -> Pmf:
        """Drop trailing exact zeros (keeps index 0)."""
        nz = np.flatnonzero(self.probs)
        top = int(nz[-1]) if nz.size else 0
        return Pmf(self.probs[: top + 1], self.lost_mass)

    def __repr__(self) -> str:
        return f"Pmf(cap={self.cap}, lost_mass={self.lost_mass:.3g}, mean={self.mean():.6g})"


def factorial_moment(law: Pmf, k: int) -> float:
    """E[X (X-1) ... (X-k+1)] over the stored support."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return law.total()
    j = np.arange(law.probs.size, dtype=float)
    falling = np.ones_like(j)
    for i in range(k):
        falling *= j - i
    # entries with j < k vanish exactly because one factor is 0
    return float(np.dot(falling, law.probs))


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """One generation's reproduction law with cached factorial moments."""

    pmf: Pmf
    mean: float = field(init=False)
    second_factorial: float = field(init=False)
    third_factorial: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mean", factorial_moment(self.pmf, 1))
        object.__setattr__(self, "second_factorial", factorial_moment(self.pmf, 2))
        object.__setattr__(self, "third_factorial", factorial_moment(self.pmf, 3))

    @classmethod
    def from_probs(cls, probs, lost_mass: float = 0.0) -> OffspringLaw:
        return cls(Pmf(probs, lost_mass))

    @property
    def probs(self) -> np.ndarray:
        return self.pmf.probs

    def __call__(self, s):
        return eval_pgf(self.pmf, s)


def _check_unit(s) -> None:
    if isinstance(s, (float, int)):
        ok = 0.0 <= s <= 1.0  # False for nan
    else:
        arr = np.asarray(s, dtype=float)
        ok = bool(np.all((arr >= 0.0) & (arr <= 1.0)))
    if not ok:
        raise DomainError(f"s must lie in [0, 1], got {s!r}")


def eval_pgf(law: Pmf | OffspringLaw, s):
    """E s^X with the lost mass placed at the cap. Accepts scalars or arrays."""
    pmf = law.pmf if isinstance(law, OffspringLaw) else law
    _check_unit(s)
    val = np.polynomial.polynomial.polyval(s, pmf.probs)
    if pmf.lost_mass:
        val = val + pmf.lost_mass * np.power(s, pmf.cap)
    if np.ndim(val) == 0:
        return float(val)
    return val


def _shape_taylor(law: OffspringLaw, u: float) -> float:
    # f(1-u) = sum_k m_k (-u)^k / k!  is exact for finite support
    p = law.pmf
    num = 0.0  # (f(s) - 1 + fbar*u) / u^2
    den = 0.0  # (1 - f(s)) / u
    for k in range(1, p.cap + 1):
        m = factorial_moment(p, k)
        if m == 0.0:
            break
        sign = -1.0 if k % 2 else 1.0
        term = m * u ** (k - 1) / math.factorial(k)
        den -= sign * term
        if k >= 2:
            num += sign * term / u
            if k > 3 and term / u < 1e-18 * abs(num):
                break
    return num / (law.mean * den)


def shape_function(law: OffspringLaw, s: float) -> float:
    """phi(s) = 1/(1 - f(s)) - 1/(fbar (1 - s)), with phi(1) = f''(1) / (2 fbar^2)."""
    _check_unit(s)
    if law.mean <= 0.0 or law.pmf[0] >= 1.0:
        raise SingularityError("shape function undefined for a law with all mass at 0")
    u = 1.0 - s
    if u == 0.0:
        return law.second_factorial / (2.0 * law.mean**2)
    if u < TAYLOR_SWITCH:
        return _shape_taylor(law, u)
    return _shape_tails(law, s)


def _shape_tails(law: OffspringLaw, s: float) -> float:
    # (1 - f(s)) / (1 - s) = g(s) = sum_k P(X > k) s^k and (fbar - g(s)) / (1 - s) = h(s),
    # both with nonnegative coefficients, so phi = h / (fbar g) never subtracts
    p = law.pmf
    mass = np.append(p.probs, 0.0)
    mass[p.cap] += p.lost_mass
    tails = np.cumsum(mass[::-1])[::-1][1:]
    g = float(np.polynomial.polynomial.polyval(s, tails))
    if g <= 0.0:
        raise SingularityError(f"f({s}) = 1 with s < 1")
    h_coef = np.cumsum(tails[::-1])[::-1][1:]
    h = float(np.polynomial.polynomial.polyval(s, h_coef)) if h_coef.size else 0.0
    return h / (law.mean * g)


def tail_compose(env: EnvironmentSpec, j: int, n: int, s):
    """f_{j,n}(s) = f_{j+1}(f_{j+2}(... f_n(s))), with f_{n,n}(s) = s."""
    if not 0 <= j <= n:
        raise ValueError(f"need 0 <= j <= n, got j={j}, n={n}")
    _check_unit(s)
    t = s
    for k in range(n, j, -1):
        t = eval_pgf(env.offspring_at(k).pmf, t)
    return t


def tail_compose_all(env: EnvironmentSpec, n: int, s) -> np.ndarray:
    """Array whose entry j is f_{j,n}(s) for j = 0..n (one backward sweep).

    For array ``s`` the result has shape (n + 1, *s.shape).
    """
    _check_unit(s)
    s_arr = np.asarray(s, dtype=float)
    out = np.empty((n + 1,) + s_arr.shape)
    out[n] = s_arr
    t = s_arr
    for k in range(n, 0, -1):
        t = np.minimum(np.asarray(eval_pgf(env.offspring_at(k).pmf, t)), 1.0)
        out[k - 1] = t
    return out


def mean_product(env: EnvironmentSpec, j: int, n: int) -> float:
    """fbar_{j,n} = fbar_{j+1} ... fbar_n (1 when j = n)."""
    if j > n:
        raise ValueError(f"need j <= n, got j={j}, n={n}")
    return math.prod(env.offspring_at(k).mean for k in range(j + 1, n + 1))


def phi_composite(env: EnvironmentSpec, j: int, n: int, s: float) -> float:
    """phi_{j,n}(s) = sum_{k=j+1}^n phi_k(f_{k,n}(s)) / fbar_{j,k-1}."""
    if not j < n:
        raise ValueError(f"need j < n, got j={j}, n={n}")
    _check_unit(s)
    # f_{k,n}(s) for k = n, n-1, ..., j+1 built by one backward sweep
    inner = {n: float(s)}
    t = float(s)
    for k in range(n, j + 1, -1):
        t = min(eval_pgf(env.offspring_at(k).pmf, t), 1.0)
        inner[k - 1] = t
    terms = []
    denom = 1.0  # fbar_{j,k-1}
    for k in range(j + 1, n + 1):
        law = env.offspring_at(k)
        terms.append(shape_function(law, inner[k]) / denom)
        denom *= law.mean
    return math.fsum(terms)
