"""Seeded trajectory simulation of X_n and Y_n.

Every uniform is a pure function of (seed, stream, replicate, generation,
individual) through a SplitMix64-style hash, so the output does not depend
on how replicates are chunked or on how many threads run them.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from bpve.environment import EnvironmentSpec
from bpve.exact import tv_distance
from bpve.pgf import Pmf

CHUNK = 8192
STREAM_OFFSPRING = 1
STREAM_IMMIGRATION = 2

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(v) for v in (30, 27, 31, 11))


class PopulationCapError(RuntimeError):
    """A trajectory outgrew the configured population cap."""


class EmptyConditionalError(ValueError):
    """No surviving replicate to condition on."""


def _mix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def uniforms(seed: int, stream: int, replicate, generation: int, individual) -> np.ndarray:
    """Counter-based uniforms on [0, 1) keyed by the full index tuple (vectorized)."""
    rep = np.asarray(replicate, dtype=np.uint64)
    ind = np.asarray(individual, dtype=np.uint64)
    shape = np.broadcast_shapes(rep.shape, ind.shape)
    h = np.full(shape, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix(h)
        h = _mix(h ^ np.uint64(stream))
        h = _mix(h ^ rep)
        h = _mix(h ^ np.uint64(generation))
        h = _mix(h ^ ind)
    return (h >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class SimConfig:
    seed: int
    replicates: int
    horizon: int
    population_cap: int = 1_000_000
    threads: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.population_cap < 1:
            raise ValueError("population_cap must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class EmpiricalLaw:
    counts: dict[int, int]
    replicates_total: int
    survivors: int

    def to_pmf(self, conditional: bool = False) -> Pmf:
        if conditional:
            if self.survivors == 0:
                raise EmptyConditionalError("no surviving replicate")
            items = {k: c for k, c in self.counts.items() if k > 0}
            denom = self.survivors
        else:
            items = self.counts
            denom = self.replicates_total
        top = max(items, default=0)
        probs = np.zeros(top + 1)
        for k, c in items.items():
            probs[k] = c / denom
        return Pmf(probs)

    def mean(self) -> float:
        return math.fsum(k * c for k, c in self.counts.items()) / self.replicates_total

    def survival_fraction(self) -> float:
        return self.survivors / self.replicates_total


def _inverse_transform(pmf: Pmf, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(pmf.probs)
    # u beyond the stored mass lands on the cap, matching eval_pgf's convention
    return np.minimum(np.searchsorted(cdf, u, side="right"), pmf.cap)


def _run_chunk(env: EnvironmentSpec, cfg: SimConfig, start: int, stop: int,
               immigration: bool) -> np.ndarray:
    size = stop - start
    rep_ids = np.arange(start, stop, dtype=np.int64)
    pops = np.zeros(size, dtype=np.int64) if immigration else np.ones(size, dtype=np.int64)
    for m in range(1, cfg.horizon + 1):
        total = int(pops.sum())
        if total:
            off = env.offspring_at(m).pmf
            local = np.repeat(np.arange(size), pops)
            offsets = np.cumsum(pops) - pops
            indiv = np.arange(total, dtype=np.int64) - np.repeat(offsets, pops)
            u = uniforms(cfg.seed, STREAM_OFFSPRING, rep_ids[local], m, indiv)
            kids = _inverse_transform(off, u)
            pops = np.bincount(local, weights=kids, minlength=size).astype(np.int64)
        if immigration:
            u = uniforms(cfg.seed, STREAM_IMMIGRATION, rep_ids, m, 0)
            pops = pops + _inverse_transform(env.immigration_at(m), u)
        if pops.size and int(pops.max()) > cfg.population_cap:
            worst = int(np.argmax(pops)) + start
            raise PopulationCapError(
                f"replicate {worst} reached {int(pops.max())} > cap {cfg.population_cap} at generation {m}"
            )
    return pops


def _simulate(env: EnvironmentSpec, cfg: SimConfig, immigration: bool) -> EmpiricalLaw:
    bounds = [(a, min(a + CHUNK, cfg.replicates)) for a in range(0, cfg.replicates, CHUNK)]
    if cfg.threads == 1:
        finals = [_run_chunk(env, cfg, a, b, immigration) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            finals = list(pool.map(lambda ab: _run_chunk(env, cfg, ab[0], ab[1], immigration), bounds))
    values = np.concatenate(finals)
    counts = Counter(values.tolist())
    return EmpiricalLaw(dict(sorted(counts.items())), cfg.replicates, int(np.count_nonzero(values)))


def simulate_x(env: EnvironmentSpec, config: SimConfig) -> EmpiricalLaw:
    """R independent trajectories of X from X_0 = 1."""
    return _simulate(env, config, immigration=False)


def simulate_y(env: EnvironmentSpec, config: SimConfig) -> EmpiricalLaw:
    """R independent trajectories of Y from Y_0 = 0."""
    if env.immigration is None:
        raise ValueError("simulate_y needs an environment with immigration")
    return _simulate(env, config, immigration=True)


def empirical_tv(emp: EmpiricalLaw, exact: Pmf, conditional: bool = False) -> float:
    """TV between normalized empirical counts and an exact law."""
    if emp.replicates_total == 0:
        raise ValueError("empty empirical law")
    return tv_distance(emp.to_pmf(conditional), exact)
