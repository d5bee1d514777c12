"""Batch experiments: config schema, presets, runners and report files."""

from __future__ import annotations

import copy
import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from bpve.environment import EnvironmentSpec, FiniteSupport, PoissonMean, QuadraticFamily
from bpve.exact import (
    conditional_law,
    conditional_mean,
    evolve_x_many,
    evolve_y_many,
    tv_with_correction,
)
from bpve.limits import (
    A_coefficients,
    cp_pmf,
    fY_closed_form,
    geometric_limit,
    lambda_from_q,
    negbin_limit,
)
from bpve.montecarlo import SimConfig, empirical_tv, simulate_x
from bpve.oracles import product_pgf, run_identity_suite
from bpve.pgf import eval_pgf, mean_product, tail_compose

CONFIG_SCHEMA = "bpve-experiment/1"
REPORT_SCHEMA = "bpve-report/1"

CSV_COLUMNS = {
    "yaglom": ["n", "tv_to_limit", "tv_correction", "lost_mass", "survival", "conditional_mean"],
    "immigration": ["n", "tv_to_limit", "tv_correction", "lost_mass", "total_mass", "mean",
                    "pgf_product_gap"],
    "montecarlo-xcheck": ["n", "tv_to_limit", "lost_mass", "survival", "exact_survival",
                          "survival_se", "mean", "exact_mean"],
    "identities": ["check", "cases", "failures", "passed"],
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Tolerances(_Strict):
    tv_terminal_max: float = 0.05
    conditional_mean_tol: float = 0.1
    negbin_tv_max: float = 1e-10
    representation_tol: float = 1e-10
    pgf_product_tol: float = 1e-8
    mc_tv_max: float = 0.02
    mc_survival_sigmas: float = 4.0


class ImmigrationConfig(_Strict):
    variant: Literal["finite", "poisson"]
    q: list[float] | None = None
    lambda1: float | None = None

    @model_validator(mode="after")
    def _fields_match_variant(self):
        if self.variant == "finite" and not self.q:
            raise ValueError("finite immigration needs a nonempty q")
        if self.variant == "poisson" and self.lambda1 is None:
            raise ValueError("poisson immigration needs lambda1")
        return self


class ExperimentConfig(_Strict):
    schema_: Literal["bpve-experiment/1"] = Field(alias="schema")
    experiment: Literal["yaglom", "immigration", "identities", "montecarlo-xcheck"]
    name: str | None = None
    a: float = 1.0
    n0: int = 2
    nu: float = 2.0
    immigration: ImmigrationConfig | None = None
    n_grid: list[int] = Field(default_factory=list)
    cap: int = 512
    tolerances: Tolerances = Field(default_factory=Tolerances)
    output: str | None = None
    seed: int = 0
    replicates: int = 100_000
    determinism_threads: list[int] = Field(default_factory=lambda: [1])
    max_k: int = 12
    max_ln: int = 10
    samples: int = 50

    @field_validator("n_grid")
    @classmethod
    def _increasing(cls, v: list[int]) -> list[int]:
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if any(n < 0 for n in v):
            raise ValueError("n_grid entries must be >= 0")
        return v

    @field_validator("cap")
    @classmethod
    def _cap(cls, v: int) -> int:
        if v < 8:
            raise ValueError("cap M must be >= 8")
        return v

    @model_validator(mode="after")
    def _experiment_needs(self):
        if self.experiment != "identities" and not self.n_grid:
            raise ValueError(f"{self.experiment} needs a nonempty n_grid")
        if self.experiment == "immigration" and self.immigration is None:
            raise ValueError("immigration experiment needs an immigration block")
        return self

    @property
    def label(self) -> str:
        return self.name or self.experiment

    def environment(self) -> EnvironmentSpec:
        fam = QuadraticFamily(self.a, self.n0, self.nu)
        imm = None
        if self.immigration is not None:
            if self.immigration.variant == "finite":
                imm = FiniteSupport(tuple(self.immigration.q))
            else:
                imm = PoissonMean(self.immigration.lambda1)
        return EnvironmentSpec(fam, imm)

    def echo(self) -> dict[str, Any]:
        return self.model_dump(by_alias=True, mode="json")


PRESETS: dict[str, dict[str, Any]] = {
    "identities": {
        "schema": CONFIG_SCHEMA, "experiment": "identities", "name": "identities",
        "max_k": 12, "max_ln": 10, "samples": 50, "seed": 20240229,
    },
    "yaglom": {
        "schema": CONFIG_SCHEMA, "experiment": "yaglom", "name": "yaglom",
        "a": 1.0, "n0": 2, "nu": 2.0, "n_grid": [10, 100, 1000, 5000], "cap": 512,
        "tolerances": {"tv_terminal_max": 0.05, "conditional_mean_tol": 0.1},
    },
    "immigration-q1": {
        "schema": CONFIG_SCHEMA, "experiment": "immigration", "name": "immigration-q1",
        "a": 1.0, "n0": 2, "nu": 2.0, "immigration": {"variant": "finite", "q": [1.0]},
        "n_grid": [10, 100, 1000, 5000], "cap": 512,
        "tolerances": {"tv_terminal_max": 0.05, "negbin_tv_max": 1e-10,
                       "representation_tol": 1e-10, "pgf_product_tol": 1e-8},
    },
    "immigration-q3": {
        "schema": CONFIG_SCHEMA, "experiment": "immigration", "name": "immigration-q3",
        "a": 1.0, "n0": 2, "nu": 2.0, "immigration": {"variant": "finite", "q": [1.0, 0.5, 0.25]},
        "n_grid": [10, 100, 1000, 5000], "cap": 512,
        "tolerances": {"tv_terminal_max": 0.05, "representation_tol": 1e-10,
                       "pgf_product_tol": 1e-8},
    },
    "montecarlo-xcheck": {
        "schema": CONFIG_SCHEMA, "experiment": "montecarlo-xcheck", "name": "montecarlo-xcheck",
        "a": 1.0, "n0": 2, "nu": 2.0, "n_grid": [100], "cap": 512, "seed": 20240229,
        "replicates": 100_000, "determinism_threads": [1, 8],
        "tolerances": {"mc_tv_max": 0.02, "mc_survival_sigmas": 4.0},
    },
}


def preset(name: str) -> ExperimentConfig:
    return ExperimentConfig.model_validate(copy.deepcopy(PRESETS[name]))


def apply_overrides(raw: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """``key=value`` pairs; dotted keys reach nested blocks, values parse as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    columns: list[str]
    rows: list[dict[str, Any]]
    checks: list[Check] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def metadata(self, timing: bool = False) -> dict[str, Any]:
        meta = {
            "schema": REPORT_SCHEMA,
            "config": self.config.echo(),
            "columns": self.columns,
            "passed": self.passed,
            "checks": [c.__dict__ for c in self.checks],
        }
        if timing:
            meta["wall_time_s"] = self.wall_time
        return meta

    def write(self, out_dir: str | Path, timing: bool = False) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.config.label}.csv"
        json_path = out / f"{self.config.label}.json"
        with csv_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.columns, lineterminator="\n")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _fmt(row[k]) for k in self.columns})
        json_path.write_text(json.dumps(self.metadata(timing), indent=2, default=_json_default) + "\n",
                             encoding="utf-8")
        return csv_path, json_path


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_default(v: Any):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(f"cannot serialize {type(v)}")


def _strictly_decreasing(xs: list[float]) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def _run_yaglom(cfg: ExperimentConfig) -> ExperimentReport:
    env = cfg.environment()
    limit = geometric_limit(cfg.nu, cfg.cap)
    rows = []
    for res in evolve_x_many(env, cfg.n_grid, cfg.cap):
        tv, corr = tv_with_correction(conditional_law(res), limit)
        rows.append({
            "n": res.generation, "tv_to_limit": tv, "tv_correction": corr,
            "lost_mass": res.lost_mass_bound, "survival": res.survival,
            "conditional_mean": conditional_mean(res),
        })
    tol = cfg.tolerances
    tvs = [r["tv_to_limit"] for r in rows]
    target = 1.0 + cfg.nu / 2.0
    cmean_dev = abs(rows[-1]["conditional_mean"] - target)
    checks = [
        Check("tv_strictly_decreasing", float(_strictly_decreasing(tvs)), 1.0, _strictly_decreasing(tvs)),
        Check("tv_terminal", tvs[-1], tol.tv_terminal_max, tvs[-1] < tol.tv_terminal_max),
        Check("conditional_mean_terminal_deviation", cmean_dev, tol.conditional_mean_tol,
              cmean_dev <= tol.conditional_mean_tol),
    ]
    return ExperimentReport(cfg, CSV_COLUMNS["yaglom"], rows, checks)


def _run_immigration(cfg: ExperimentConfig) -> ExperimentReport:
    env = cfg.environment()
    q = tuple(env.immigration.q_sequence())
    law = A_coefficients(q, cfg.nu)
    limit = cp_pmf(law, cfg.cap)
    rows = []
    for res in evolve_y_many(env, cfg.n_grid, cfg.cap):
        tv, corr = tv_with_correction(res.pmf, limit)
        gaps = [
            abs(eval_pgf(res.pmf, s) - product_pgf(env, res.generation, s))
            for s in (0.2, 0.5, 0.8)
        ]
        rows.append({
            "n": res.generation, "tv_to_limit": tv, "tv_correction": corr,
            "lost_mass": res.lost_mass_bound, "total_mass": res.pmf.total(),
            "mean": res.pmf.mean(), "pgf_product_gap": max(gaps),
        })
    tol = cfg.tolerances
    tvs = [r["tv_to_limit"] for r in rows]
    checks = [
        Check("tv_strictly_decreasing", float(_strictly_decreasing(tvs)), 1.0, _strictly_decreasing(tvs)),
        Check("tv_terminal", tvs[-1], tol.tv_terminal_max, tvs[-1] < tol.tv_terminal_max),
    ]
    worst_pgf = max(r["pgf_product_gap"] - r["lost_mass"] for r in rows)
    checks.append(Check("pgf_product_gap", worst_pgf, tol.pgf_product_tol, worst_pgf <= tol.pgf_product_tol))
    lam = lambda_from_q(q, len(q) + 1)
    rep = max(
        abs(fY_closed_form(lam, cfg.nu, s) - float(law.pgf(s))) for s in np.arange(10) / 10
    )
    checks.append(Check("closed_form_vs_series", rep, tol.representation_tol, rep <= tol.representation_tol))
    if len(q) == 1:
        nb = negbin_limit(q[0], cfg.nu, cfg.cap)
        tv_nb = tv_with_correction(limit, nb)[0]
        checks.append(Check("negbin_tv", tv_nb, tol.negbin_tv_max, tv_nb <= tol.negbin_tv_max))
    return ExperimentReport(cfg, CSV_COLUMNS["immigration"], rows, checks)


def _run_identities(cfg: ExperimentConfig) -> ExperimentReport:
    results = run_identity_suite(cfg.max_k, cfg.max_ln, cfg.samples, cfg.seed)
    rows = [
        {"check": r.name, "cases": r.cases, "failures": r.failures, "passed": r.passed}
        for r in results
    ]
    checks = [Check(r.name, float(r.failures), 0.0, r.passed) for r in results]
    return ExperimentReport(cfg, CSV_COLUMNS["identities"], rows, checks)


def _run_montecarlo(cfg: ExperimentConfig) -> ExperimentReport:
    env = cfg.environment()
    tol = cfg.tolerances
    exact = evolve_x_many(env, cfg.n_grid, cfg.cap)
    rows, checks = [], []
    for n, res in zip(cfg.n_grid, exact):
        runs = [
            simulate_x(env, SimConfig(cfg.seed, cfg.replicates, n, threads=t))
            for t in cfg.determinism_threads
        ]
        emp = runs[0]
        identical = all(r == emp for r in runs[1:])
        p = 1.0 - tail_compose(env, 0, n, 0.0)
        se = math.sqrt(p * (1.0 - p) / cfg.replicates)
        tv = empirical_tv(emp, res.pmf)
        rows.append({
            "n": n, "tv_to_limit": tv, "lost_mass": res.lost_mass_bound,
            "survival": emp.survival_fraction(), "exact_survival": p, "survival_se": se,
            "mean": emp.mean(), "exact_mean": mean_product(env, 0, n),
        })
        z = abs(emp.survival_fraction() - p) / se if se > 0 else 0.0
        checks += [
            Check(f"empirical_tv_n{n}", tv, tol.mc_tv_max, tv <= tol.mc_tv_max),
            Check(f"survival_sigmas_n{n}", z, tol.mc_survival_sigmas, z <= tol.mc_survival_sigmas),
            Check(f"thread_determinism_n{n}", float(identical), 1.0, identical),
        ]
    return ExperimentReport(cfg, CSV_COLUMNS["montecarlo-xcheck"], rows, checks)


RUNNERS = {
    "yaglom": _run_yaglom,
    "immigration": _run_immigration,
    "identities": _run_identities,
    "montecarlo-xcheck": _run_montecarlo,
}


def run(config: ExperimentConfig) -> ExperimentReport:
    t0 = time.perf_counter()
    report = RUNNERS[config.experiment](config)
    report.wall_time = time.perf_counter() - t0
    return report


def load_config(path: str | Path, overrides: list[str] | None = None) -> ExperimentConfig:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return ExperimentConfig.model_validate(apply_overrides(raw, overrides or []))
