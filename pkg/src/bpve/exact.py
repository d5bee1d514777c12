"""Exact forward evolution of the laws of X_n and Y_n by truncated convolution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from bpve.environment import EnvironmentSpec
from bpve.pgf import Pmf

# mixture weights of remaining convolution powers below this are dropped (to lost mass)
EARLY_EXIT = 1e-16
DEFAULT_MAX_LOST = 0.01


class TruncationError(RuntimeError):
    """Accumulated truncation loss exceeded the configured budget; raise the cap."""

    def __init__(self, generation: int, lost: float, cap: int):
        super().__init__(
            f"lost mass {lost:.3g} at generation {generation} exceeds budget with cap M={cap}"
        )
        self.generation = generation
        self.lost = lost
        self.cap = cap


class ExtinctionError(ArithmeticError):
    """Survival probability underflowed; no conditional law exists."""


@dataclass(frozen=True)
class EvolutionResult:
    pmf: Pmf
    generation: int
    lost_mass_bound: float
    survival: float | None = None


def _branch(p: np.ndarray, offspring: np.ndarray, cap: int) -> tuple[np.ndarray, float]:
    """Law of sum_{i<=X} xi_i for X ~ p, truncated at cap. Returns (law, mass lost)."""
    out = np.zeros(cap + 1)
    out[0] = p[0]
    # tail[k] = P(X >= k), to stop once the remaining mixture weight is negligible
    tail = np.cumsum(p[::-1])[::-1]
    dropped = 0.0
    missing = 0.0  # mass of the k-fold convolution already cut beyond the cap
    power = np.array([1.0])
    for k in range(1, p.size):
        if tail[k] < EARLY_EXIT:
            dropped += tail[k]
            break
        power = np.convolve(power, offspring)
        if power.size > cap + 1:
            missing += math.fsum(power[cap + 1 :])
            power = power[: cap + 1]
        if p[k]:
            out[: power.size] += p[k] * power
            dropped += p[k] * missing
    return out, dropped


def _trim(p: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(p)
    top = int(nz[-1]) if nz.size else 0
    return p[: top + 1]


def _padded(p: np.ndarray, cap: int) -> np.ndarray:
    out = np.zeros(cap + 1)
    out[: p.size] = p
    return out


def _iterate(env: EnvironmentSpec, cap: int, immigration: bool, max_lost: float
             ) -> Iterator[tuple[int, np.ndarray, float]]:
    if cap < 8:
        raise ValueError("cap M must be >= 8")
    p = np.array([0.0, 1.0]) if not immigration else np.array([1.0])
    lost = 0.0
    n = 0
    yield n, p, lost
    while True:
        n += 1
        off = env.offspring_at(n)
        if off.pmf.lost_mass:
            # a family of k loses 1 - (1 - l)^k of its mass through the offspring tail
            k = np.arange(p.size)
            lost += float(np.dot(p, -np.expm1(k * np.log1p(-off.pmf.lost_mass))))
        q, dropped = _branch(p, np.asarray(off.probs), cap)
        lost += dropped
        if immigration:
            eps = env.immigration_at(n)
            q = np.convolve(_trim(q), eps.probs)
            lost += eps.lost_mass
            if q.size > cap + 1:
                lost += math.fsum(q[cap + 1 :])
                q = q[: cap + 1]
        if lost > max_lost:
            raise TruncationError(n, lost, cap)
        p = _trim(q)
        yield n, p, lost


def _result(p: np.ndarray, n: int, lost: float, cap: int, branching: bool) -> EvolutionResult:
    probs = _padded(p, cap)
    # repair rounding so that sum + lost == 1 to machine precision
    lost = max(lost, 0.0)
    pmf = Pmf(probs, lost)
    survival = math.fsum(probs[1:]) + lost if branching else None
    return EvolutionResult(pmf, n, lost, survival)


def evolve_x_many(env: EnvironmentSpec, ns: Iterable[int], cap: int,
                  max_lost: float = DEFAULT_MAX_LOST) -> list[EvolutionResult]:
    """Laws of X_n (X_0 = 1) at every n in ``ns`` from a single forward pass."""
    wanted = sorted(set(int(n) for n in ns))
    if not wanted:
        return []
    if wanted[0] < 0:
        raise ValueError("generations must be >= 0")
    out = {}
    for n, p, lost in _iterate(env, cap, immigration=False, max_lost=max_lost):
        if n in wanted:
            out[n] = _result(p, n, lost, cap, branching=True)
        if n >= wanted[-1]:
            break
    return [out[int(n)] for n in ns]


def evolve_x(env: EnvironmentSpec, n: int, cap: int = 512,
             max_lost: float = DEFAULT_MAX_LOST) -> EvolutionResult:
    return evolve_x_many(env, [n], cap, max_lost)[0]


def evolve_y_many(env: EnvironmentSpec, ns: Iterable[int], cap: int,
                  max_lost: float = DEFAULT_MAX_LOST) -> list[EvolutionResult]:
    """Laws of Y_n (Y_0 = 0): branching step, then the generation's immigrants."""
    if env.immigration is None:
        raise ValueError("evolve_y needs an environment with immigration")
    wanted = sorted(set(int(n) for n in ns))
    if not wanted:
        return []
    if wanted[0] < 0:
        raise ValueError("generations must be >= 0")
    out = {}
    for n, p, lost in _iterate(env, cap, immigration=True, max_lost=max_lost):
        if n in wanted:
            out[n] = _result(p, n, lost, cap, branching=False)
        if n >= wanted[-1]:
            break
    return [out[int(n)] for n in ns]


def evolve_y(env: EnvironmentSpec, n: int, cap: int = 512,
             max_lost: float = DEFAULT_MAX_LOST) -> EvolutionResult:
    return evolve_y_many(env, [n], cap, max_lost)[0]


def conditional_law(result: EvolutionResult) -> Pmf:
    """Law of X_n given X_n > 0."""
    surv = _survival(result)
    probs = np.array(result.pmf.probs) / surv
    probs[0] = 0.0
    return Pmf(probs, result.pmf.lost_mass / surv)


def _survival(result: EvolutionResult) -> float:
    surv = result.survival
    if surv is None:
        surv = math.fsum(result.pmf.probs[1:]) + result.pmf.lost_mass
    if surv <= 1e-300:
        raise ExtinctionError(f"survival {surv!r} at generation {result.generation}")
    return surv


def conditional_mean(result: EvolutionResult) -> float:
    """E[X_n | X_n > 0] over the stored support."""
    surv = _survival(result)
    return result.pmf.mean() / surv


def tv_with_correction(p: Pmf, q: Pmf) -> tuple[float, float]:
    """(TV over stored supports, upper-bound correction (lost_p + lost_q) / 2)."""
    size = max(p.probs.size, q.probs.size)
    a = _padded(p.probs, size - 1)
    b = _padded(q.probs, size - 1)
    return 0.5 * math.fsum(np.abs(a - b)), 0.5 * (p.lost_mass + q.lost_mass)


def tv_distance(p: Pmf, q: Pmf) -> float:
    """Total variation distance over the union of stored supports."""
    return tv_with_correction(p, q)[0]


def regularity_ratio(result: EvolutionResult) -> float:
    """E[X^2; X >= 2] / (E[X; X >= 2] E[X | X >= 1]); bounded in n for regular processes."""
    p = result.pmf.probs
    k = np.arange(p.size, dtype=float)
    hi = k >= 2
    num = float(np.dot(k[hi] ** 2, p[hi]))
    den = float(np.dot(k[hi], p[hi])) * conditional_mean(result)
    return num / den if den > 0 else 0.0
