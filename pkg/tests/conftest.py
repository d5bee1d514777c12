import math

import numpy as np
import pytest

from bpve.environment import EnvironmentSpec, QuadraticFamily, random_explicit_family
from bpve.pgf import OffspringLaw, Pmf

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def quad22():
    return EnvironmentSpec(QuadraticFamily(a=1.0, n0=2, nu=2.0))


@pytest.fixture
def quad20():
    return EnvironmentSpec(QuadraticFamily(a=1.0, n0=2, nu=0.0))


def random_env(seed: int, length: int, max_support: int = 5) -> EnvironmentSpec:
    return EnvironmentSpec(random_explicit_family(np.random.default_rng(seed), length, max_support))


def quadratic_shape_exact(law: OffspringLaw, s: float) -> float:
    """Closed form for support {0,1,2}: phi(s) = f2 / (fbar (fbar - f2 (1 - s)))."""
    f2 = law.pmf[2]
    m = law.mean
    return f2 / (m * (m - f2 * (1.0 - s)))


def compose_polynomial(env: EnvironmentSpec, n: int) -> np.ndarray:
    """Coefficients of f_1(f_2(... f_n(s))) by exact polynomial substitution."""
    P = np.polynomial.Polynomial
    poly = P([0.0, 1.0])
    for k in range(n, 0, -1):
        coeffs = env.offspring_at(k).probs
        acc = P([0.0])
        power = P([1.0])
        for c in coeffs:
            acc = acc + c * power
            power = power * poly
        poly = acc
    return poly.coef


def poisson_pmf(mu: float, cap: int) -> Pmf:
    return Pmf.poisson(mu, cap)


def harmonic(n: int) -> float:
    return math.fsum(1.0 / k for k in range(1, n + 1))
