import math

import numpy as np
import pytest

from bpve.environment import (
    EnvironmentSpec,
    ExplicitImmigration,
    FiniteSupport,
    PoissonMean,
    QuadraticFamily,
    constant_environment,
    identity_family,
)
from bpve.exact import (
    ExtinctionError,
    EvolutionResult,
    TruncationError,
    conditional_law,
    conditional_mean,
    evolve_x,
    evolve_x_many,
    evolve_y,
    evolve_y_many,
    regularity_ratio,
    tv_distance,
    tv_with_correction,
)
from bpve.oracles import product_pgf
from bpve.pgf import Pmf, eval_pgf, mean_product, tail_compose
from conftest import compose_polynomial, random_env


def _result(probs, lost=0.0):
    pmf = Pmf(probs, lost)
    return EvolutionResult(pmf, 1, lost, math.fsum(pmf.probs[1:]) + lost)


class TestEvolveX:
    def test_initial(self, quad22):
        r = evolve_x(quad22, 0, cap=16)
        assert r.pmf[1] == 1.0 and r.survival == 1.0

    def test_identity_environment(self):
        r = evolve_x(EnvironmentSpec(identity_family()), 25, cap=16)
        assert r.pmf[1] == 1.0 and r.lost_mass_bound == 0.0

    def test_extinction_probability_small_n(self, quad22):
        r = evolve_x(quad22, 3, cap=64)
        assert abs(r.pmf[0] - tail_compose(quad22, 0, 3, 0.0)) <= 1e-12

    @pytest.mark.parametrize("seed", range(6))
    def test_full_law_against_polynomial_composition(self, seed):
        env = random_env(seed, 4, max_support=4)
        coef = compose_polynomial(env, 4)
        r = evolve_x(env, 4, cap=300)
        assert r.lost_mass_bound <= 1e-15  # only the early-exit tail
        np.testing.assert_allclose(r.pmf.probs[: coef.size], coef, atol=1e-14)
        assert np.all(r.pmf.probs[coef.size:] == 0)

    def test_quadratic_against_polynomial_composition(self, quad22):
        coef = compose_polynomial(quad22, 6)
        r = evolve_x(quad22, 6, cap=128)
        np.testing.assert_allclose(r.pmf.probs[: coef.size], coef, atol=1e-15)

    def test_oracle_agreement_up_to_200(self, quad22):
        ns = list(range(0, 201, 10))
        for n, r in zip(ns, evolve_x_many(quad22, ns, cap=512)):
            assert abs(r.pmf[0] - tail_compose(quad22, 0, n, 0.0)) <= 1e-9 + r.lost_mass_bound
            assert r.survival == pytest.approx(1 - tail_compose(quad22, 0, n, 0.0), abs=1e-12)

    def test_mean_and_monotone_extinction(self, quad22):
        ns = list(range(0, 301, 25))
        res = evolve_x_many(quad22, ns, cap=512)
        zeros = [r.pmf[0] for r in res]
        assert all(b >= a for a, b in zip(zeros, zeros[1:]))
        for n, r in zip(ns, res):
            m = mean_product(quad22, 0, n)
            assert r.pmf.mean() <= m + 1e-12
            assert r.pmf.mean() >= m - r.lost_mass_bound * 512 - 1e-12
        lost = [r.lost_mass_bound for r in res]
        assert all(b >= a for a, b in zip(lost, lost[1:]))

    def test_many_matches_single(self, quad22):
        a = evolve_x_many(quad22, [7, 3], cap=64)
        assert a[1].pmf.probs.tolist() == evolve_x(quad22, 3, cap=64).pmf.probs.tolist()
        assert a[0].generation == 7

    def test_truncation_error(self, quad20):
        doubling = constant_environment([0.0, 0.0, 1.0])
        with pytest.raises(TruncationError) as info:
            evolve_x(doubling, 10, cap=16)
        assert info.value.cap == 16
        assert evolve_x(quad20, 10, cap=16).lost_mass_bound == 0.0

    def test_cap_lower_bound(self, quad22):
        with pytest.raises(ValueError):
            evolve_x(quad22, 1, cap=4)

    def test_tightness_proxy(self, quad22):
        ns = [10, 100, 1000, 5000, 10_000]
        for r in evolve_x_many(quad22, ns, cap=512):
            assert conditional_mean(r) <= 1 + 2.0 / 2 + 0.5

    def test_nu_zero_conditional_law_is_degenerate(self, quad20):
        # Bernoulli offspring: a surviving line is a single individual
        for r in evolve_x_many(quad20, [10, 100, 1000], cap=64):
            assert conditional_mean(r) == pytest.approx(1.0, abs=1e-12)
            assert conditional_law(r)[1] == pytest.approx(1.0, abs=1e-12)

    def test_conditional_mean_matches_composition(self, quad22):
        # E[X_n | X_n > 0] = fbar_{0,n} / (1 - f_{0,n}(0))
        r = evolve_x(quad22, 500, cap=512)
        want = mean_product(quad22, 0, 500) / (1 - tail_compose(quad22, 0, 500, 0.0))
        assert conditional_mean(r) == pytest.approx(want, rel=1e-10)

    def test_regularity_bounded(self, quad22):
        vals = [regularity_ratio(r) for r in evolve_x_many(quad22, [10, 100, 1000], cap=512)]
        assert max(vals) < 10


class TestConditional:
    def test_point_mass(self):
        assert conditional_law(_result([0.0, 1.0]))[1] == 1.0

    def test_drop_zero(self):
        assert conditional_law(_result([0.75, 0.25]))[1] == 1.0

    def test_normalization(self):
        law = conditional_law(_result([0.5, 0.25, 0.25]))
        assert (law[0], law[1], law[2]) == (0.0, 0.5, 0.5)

    def test_extinction(self):
        with pytest.raises(ExtinctionError):
            conditional_law(_result([1.0]))
        with pytest.raises(ExtinctionError):
            conditional_mean(_result([1.0]))

    def test_mean(self):
        assert conditional_mean(_result([0.0, 1.0])) == 1.0
        assert conditional_mean(_result([0.5, 0.25, 0.25])) == 1.5


class TestEvolveY:
    def test_initial(self):
        env = EnvironmentSpec(QuadraticFamily(), FiniteSupport((1.0,)))
        assert evolve_y(env, 0, cap=16).pmf[0] == 1.0

    def test_no_immigration(self):
        env = EnvironmentSpec(QuadraticFamily(), ExplicitImmigration((Pmf.point(0),), periodic=True))
        assert evolve_y(env, 30, cap=16).pmf[0] == 1.0

    def test_one_generation(self):
        env = EnvironmentSpec(QuadraticFamily(), ExplicitImmigration((Pmf([0.9, 0.1]),), periodic=True))
        r = evolve_y(env, 1, cap=16)
        assert (r.pmf[0], r.pmf[1]) == pytest.approx((0.9, 0.1), abs=1e-16)
        assert r.survival is None

    def test_requires_immigration(self, quad22):
        with pytest.raises(ValueError):
            evolve_y(quad22, 3, cap=16)

    @pytest.mark.parametrize("q", [(1.0,), (1.0, 0.5, 0.25)])
    def test_pgf_product(self, q):
        env = EnvironmentSpec(QuadraticFamily(), FiniteSupport(q))
        ns = [1, 5, 50, 300]
        for n, r in zip(ns, evolve_y_many(env, ns, cap=512)):
            for s in (0.2, 0.5, 0.8):
                gap = abs(eval_pgf(r.pmf, s) - product_pgf(env, n, s))
                assert gap <= 1e-8 + r.lost_mass_bound

    def test_poisson_pgf_product(self):
        env = EnvironmentSpec(QuadraticFamily(), PoissonMean(1.0))
        r = evolve_y(env, 100, cap=256)
        for s in (0.2, 0.5, 0.8):
            assert abs(eval_pgf(r.pmf, s) - product_pgf(env, 100, s)) <= 1e-8 + r.lost_mass_bound

    def test_small_n_against_polynomials(self):
        # Y_2 = sum_{i<=eps_1} xi_{2,i} + eps_2, with generating function h_1(f_2(s)) h_2(s)
        env = EnvironmentSpec(QuadraticFamily(), FiniteSupport((1.0, 0.5)))
        P = np.polynomial.Polynomial
        f2 = P(env.offspring_at(2).probs)
        h1 = env.immigration_at(1).probs
        h2 = P(env.immigration_at(2).probs)
        want = sum(c * f2**k for k, c in enumerate(h1)) * h2
        got = evolve_y(env, 2, cap=32).pmf.probs
        np.testing.assert_allclose(got[: want.coef.size], want.coef, atol=1e-16)


class TestTV:
    def test_self(self):
        p = Pmf([0.2, 0.3, 0.5])
        assert tv_distance(p, p) == 0.0

    def test_disjoint(self):
        assert tv_distance(Pmf.point(0), Pmf.point(1)) == 1.0

    def test_direct(self):
        assert tv_distance(Pmf([0.5, 0.5]), Pmf([0.75, 0.25])) == 0.25

    def test_correction(self):
        tv, corr = tv_with_correction(Pmf([0.5, 0.4], 0.1), Pmf([0.5, 0.5]))
        assert tv == pytest.approx(0.05) and corr == pytest.approx(0.05)

    def test_different_lengths(self):
        assert tv_distance(Pmf([0.5, 0.5]), Pmf([0.5, 0.0, 0.0, 0.5])) == 0.5


def test_truncated_mass_is_fully_accounted():
    # a doubling population outgrows the cap; sum + lost must stay exactly 1
    env = constant_environment([0.25, 0.25, 0.5])
    for r in evolve_x_many(env, [5, 6, 7], cap=32, max_lost=1.0):
        assert r.pmf.total() + r.lost_mass_bound == pytest.approx(1.0, abs=1e-12)
        assert r.pmf[0] == pytest.approx(tail_compose(env, 0, r.generation, 0.0), abs=1e-14)
