"""Offspring and immigration sequences indexed by generation.

The built-in offspring family has harmonic decay ``d_n = a / (n + n0)`` of
the mean deficit ``1 - fbar_n``. Immigration laws are tied to the same
``d_n``, so their normalized factorial moments equal their limits at every
generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np

from bpve.pgf import OffspringLaw, Pmf, factorial_moment


class FamilyError(ValueError):
    """Family parameters do not produce a valid law."""


class OffspringFamily(Protocol):
    def law(self, n: int) -> OffspringLaw: ...

    def decay(self, n: int) -> float: ...


@dataclass(frozen=True)
class QuadraticFamily:
    """f_n(s) = f_n[0] + f_n[1] s + f_n[2] s^2 with 2 f_n[2] / (f_n[0] - f_n[2]) = nu."""

    a: float = 1.0
    n0: int = 2
    nu: float = 2.0

    def __post_init__(self):
        if self.a <= 0 or self.n0 < 0 or self.nu < 0:
            raise FamilyError("need a > 0, n0 >= 0, nu >= 0")
        # d_n is largest at n = 1
        d1 = self.decay(1)
        if d1 >= 1.0:
            raise FamilyError(f"d_1 = {d1} must be < 1 so that fbar_1 > 0")
        if d1 * (1.0 + self.nu) > 1.0 + 1e-15:
            raise FamilyError(
                f"f_1[1] = 1 - d_1 (1 + nu) < 0 for a={self.a}, n0={self.n0}, nu={self.nu}"
            )

    def decay(self, n: int) -> float:
        return self.a / (n + self.n0)

    def law(self, n: int) -> OffspringLaw:
        return _quadratic_law(self, n)


@lru_cache(maxsize=1 << 16)
def _quadratic_law(fam: QuadraticFamily, n: int) -> OffspringLaw:
    if n < 1:
        raise ValueError(f"generation index must be >= 1, got {n}")
    d = fam.decay(n)
    two = fam.nu * d / 2.0
    zero = d * (1.0 + fam.nu / 2.0)
    one = 1.0 - zero - two
    if one < 0.0:
        if one < -1e-15:
            raise FamilyError(f"f_{n}[1] = {one} < 0")
        one = 0.0
    return OffspringLaw(Pmf([zero, one, two]))


@dataclass(frozen=True)
class ExplicitFamily:
    """A fixed list of offspring laws; ``periodic`` repeats it forever."""

    laws: tuple[OffspringLaw, ...]
    periodic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "laws", tuple(self.laws))
        if not self.laws:
            raise FamilyError("need at least one law")

    def law(self, n: int) -> OffspringLaw:
        if n < 1:
            raise ValueError(f"generation index must be >= 1, got {n}")
        if self.periodic:
            return self.laws[(n - 1) % len(self.laws)]
        if n > len(self.laws):
            raise FamilyError(f"no offspring law configured for generation {n}")
        return self.laws[n - 1]

    def decay(self, n: int) -> float:
        return 1.0 - self.law(n).mean


@dataclass(frozen=True)
class FiniteSupport:
    """P(eps_n = j) = q_j d_n for j = 1..J, remainder at 0."""

    q: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        if any(v < 0 for v in self.q):
            raise FamilyError("q_j must be nonnegative")

    def law(self, n: int, d: float) -> Pmf:
        return _finite_support_law(self, d)

    def q_sequence(self) -> tuple[float, ...]:
        return self.q

    def lambdas(self) -> tuple[float, ...]:
        from bpve.limits import lambda_from_q

        return lambda_from_q(self.q, len(self.q) + 1).values


@lru_cache(maxsize=1 << 16)
def _finite_support_law(fam: FiniteSupport, d: float) -> Pmf:
    total = d * math.fsum(fam.q)
    if total > 1.0 + 1e-15:
        raise FamilyError(f"d_n * sum(q) = {total} exceeds 1")
    return Pmf([max(1.0 - total, 0.0)] + [qj * d for qj in fam.q])


@dataclass(frozen=True)
class PoissonMean:
    """eps_n ~ Poisson(lambda1 * d_n)."""

    lambda1: float

    def __post_init__(self):
        if self.lambda1 <= 0:
            raise FamilyError("lambda1 must be positive")

    def law(self, n: int, d: float) -> Pmf:
        return _poisson_law(self.lambda1 * d)

    def q_sequence(self) -> tuple[float, ...]:
        return (self.lambda1,)

    def lambdas(self) -> tuple[float, ...]:
        return (self.lambda1, 0.0)


@lru_cache(maxsize=1 << 16)
def _poisson_law(mean: float) -> Pmf:
    return Pmf.poisson(mean)


@dataclass(frozen=True)
class ExplicitImmigration:
    """A fixed list of immigration laws, decoupled from d_n."""

    laws: tuple[Pmf, ...]
    periodic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "laws", tuple(self.laws))

    def law(self, n: int, d: float) -> Pmf:
        if self.periodic:
            return self.laws[(n - 1) % len(self.laws)]
        if n > len(self.laws):
            raise FamilyError(f"no immigration law configured for generation {n}")
        return self.laws[n - 1]

    def q_sequence(self) -> tuple[float, ...]:
        raise NotImplementedError("explicit immigration declares no asymptotics")

    def lambdas(self) -> tuple[float, ...]:
        raise NotImplementedError("explicit immigration declares no asymptotics")


ImmigrationFamily = FiniteSupport | PoissonMean | ExplicitImmigration


@dataclass(frozen=True)
class EnvironmentSpec:
    offspring: OffspringFamily
    immigration: ImmigrationFamily | None = None
    nu: float | None = None

    def __post_init__(self):
        if self.nu is None and isinstance(self.offspring, QuadraticFamily):
            object.__setattr__(self, "nu", self.offspring.nu)
        if isinstance(self.immigration, FiniteSupport) and isinstance(
            self.offspring, QuadraticFamily
        ):
            # harmonic d_n is maximal at n = 1
            self.immigration.law(1, self.offspring.decay(1))

    def offspring_at(self, n: int) -> OffspringLaw:
        return self.offspring.law(n)

    def decay(self, n: int) -> float:
        return self.offspring.decay(n)

    def immigration_at(self, n: int) -> Pmf:
        if self.immigration is None:
            raise FamilyError("environment has no immigration family")
        if n < 1:
            raise ValueError(f"generation index must be >= 1, got {n}")
        return self.immigration.law(n, self.decay(n))


def offspring_at(env: EnvironmentSpec, n: int) -> OffspringLaw:
    return env.offspring_at(n)


def immigration_at(env: EnvironmentSpec, n: int) -> Pmf:
    return env.immigration_at(n)


def _log_means(env: EnvironmentSpec, n: int) -> np.ndarray:
    """log fbar_i for i = 1..n (index 0 unused)."""
    out = np.zeros(n + 1)
    for i in range(1, n + 1):
        out[i] = math.log(env.offspring_at(i).mean)
    return out


def toeplitz_weights(env: EnvironmentSpec, n: int, k: int) -> np.ndarray:
    """a_{n,j}^{(k)} = (1 - fbar_j) prod_{i=j+1}^n fbar_i^k for j = 1..n (array index j-1)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    logs = _log_means(env, n)
    # suffix[j] = sum_{i>j} log fbar_i
    suffix = np.concatenate([np.cumsum(logs[::-1])[::-1][1:], [0.0]])
    d = np.array([env.decay(j) for j in range(1, n + 1)])
    return d * np.exp(k * suffix[1:])


def toeplitz_weight(env: EnvironmentSpec, n: int, j: int, k: int) -> float:
    if not 1 <= j <= n:
        raise ValueError(f"need 1 <= j <= n, got j={j}, n={n}")
    if k < 1:
        raise ValueError("k must be >= 1")
    return env.decay(j) * math.prod(env.offspring_at(i).mean ** k for i in range(j + 1, n + 1))


@dataclass
class ConditionReport:
    """Finite-horizon diagnostics of the nearly critical conditions."""

    horizon: int
    max_mean: float
    decay_partial_sum: float
    second_ratio: np.ndarray  # f_n''(1) / (1 - fbar_n), n = 1..horizon
    third_ratio: np.ndarray  # f_n'''(1) / (1 - fbar_n)
    nu_declared: float | None
    nu_terminal_deviation: float | None
    lambda_declared: tuple[float, ...] = ()
    lambda_ratio: dict[int, np.ndarray] = field(default_factory=dict)
    lambda_terminal_deviation: dict[int, float] = field(default_factory=dict)
    divergence: str = "by construction"

    @property
    def subcritical(self) -> bool:
        return self.max_mean < 1.0


def check_conditions(env: EnvironmentSpec, horizon: int) -> ConditionReport:
    if horizon < 10:
        raise ValueError("horizon must be >= 10")
    ns = range(1, horizon + 1)
    laws = [env.offspring_at(n) for n in ns]
    d = np.array([env.decay(n) for n in ns])
    with np.errstate(divide="ignore", invalid="ignore"):
        # a critical generation (d_n = 0) has no defined ratio
        second = np.array([law.second_factorial for law in laws]) / d
        third = np.array([law.third_factorial for law in laws]) / d
    nu_dev = None if env.nu is None else float(abs(second[-1] - env.nu))
    report = ConditionReport(
        horizon=horizon,
        max_mean=max(law.mean for law in laws),
        decay_partial_sum=math.fsum(d),
        second_ratio=second,
        third_ratio=third,
        nu_declared=env.nu,
        nu_terminal_deviation=nu_dev,
    )
    if isinstance(env.offspring, ExplicitFamily):
        report.divergence = "not asserted (explicit family)"
    if env.immigration is not None and not isinstance(env.immigration, ExplicitImmigration):
        lam = tuple(env.immigration.lambdas())
        report.lambda_declared = lam
        imm = [env.immigration_at(n) for n in ns]
        for k in range(1, len(lam) + 1):
            ratio = np.array(
                [factorial_moment(p, k) for p in imm]
            ) / (math.factorial(k) * d)
            report.lambda_ratio[k] = ratio
            report.lambda_terminal_deviation[k] = float(abs(ratio[-1] - lam[k - 1]))
    return report


def random_explicit_family(
    rng: np.random.Generator, length: int, max_support: int = 5, periodic: bool = False
) -> ExplicitFamily:
    """Random finite-support laws with pmf[0] < 1 (used by property tests)."""
    laws: list[OffspringLaw] = []
    for _ in range(length):
        size = int(rng.integers(2, max_support + 1))
        p = rng.dirichlet(np.ones(size))
        laws.append(OffspringLaw(Pmf(p)))
    return ExplicitFamily(tuple(laws), periodic=periodic)


def identity_family() -> ExplicitFamily:
    """f_n(s) = s for every n."""
    return ExplicitFamily((OffspringLaw(Pmf.point(1)),), periodic=True)


def constant_environment(probs: Sequence[float]) -> EnvironmentSpec:
    return EnvironmentSpec(ExplicitFamily((OffspringLaw(Pmf(probs)),), periodic=True))
