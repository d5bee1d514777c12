import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bpve.environment import (
    EnvironmentSpec,
    ExplicitFamily,
    ExplicitImmigration,
    FamilyError,
    FiniteSupport,
    PoissonMean,
    QuadraticFamily,
    check_conditions,
    constant_environment,
    identity_family,
    immigration_at,
    offspring_at,
    toeplitz_weight,
    toeplitz_weights,
)
from bpve.pgf import OffspringLaw, Pmf, factorial_moment


class TestQuadraticFamily:
    def test_first_generation(self, quad22):
        law = offspring_at(quad22, 1)
        assert quad22.decay(1) == pytest.approx(1 / 3)
        np.testing.assert_allclose(law.probs, [2 / 3, 0.0, 1 / 3], atol=1e-15)

    @pytest.mark.parametrize("n", [1, 5, 100])
    def test_nu_zero_is_bernoulli(self, quad20, n):
        law = offspring_at(quad20, n)
        assert law.pmf[2] == 0.0
        assert law.mean == pytest.approx(1 - 1 / (n + 2), rel=1e-15)

    @pytest.mark.parametrize("n", [1, 7, 1000, 10**6])
    def test_defining_ratios(self, quad22, n):
        law = offspring_at(quad22, n)
        d = quad22.decay(n)
        assert 1 - law.mean == pytest.approx(d, rel=1e-12)
        assert law.second_factorial / d == pytest.approx(2.0, rel=1e-12)
        p = law.probs
        assert 2 * p[2] / (p[0] - p[2]) == pytest.approx(2.0, rel=1e-12)

    def test_rejects_negative_middle_mass(self):
        with pytest.raises(FamilyError):
            QuadraticFamily(a=1.0, n0=2, nu=3.0)

    def test_rejects_supercritical_decay(self):
        with pytest.raises(FamilyError):
            QuadraticFamily(a=5.0, n0=1, nu=0.0)

    def test_rejects_negative_nu(self):
        with pytest.raises(FamilyError):
            QuadraticFamily(nu=-1.0)

    def test_generation_zero(self, quad22):
        with pytest.raises(ValueError):
            offspring_at(quad22, 0)


class TestExplicit:
    def test_finite_list(self):
        fam = ExplicitFamily((OffspringLaw(Pmf([0.5, 0.5])),))
        env = EnvironmentSpec(fam)
        assert env.decay(1) == 0.5
        with pytest.raises(FamilyError):
            env.offspring_at(2)

    def test_periodic(self):
        env = constant_environment([0.25, 0.5, 0.25])
        assert env.offspring_at(17).mean == 1.0

    def test_identity(self):
        assert identity_family().law(99).mean == 1.0


class TestImmigration:
    def test_finite_support_pmf(self):
        np.testing.assert_allclose(FiniteSupport((1.5,)).law(3, 0.1).probs, [0.85, 0.15])

    def test_poisson_pmf(self):
        p = PoissonMean(1.0).law(3, 0.1)
        assert p[0] == pytest.approx(math.exp(-0.1), rel=1e-15)
        assert p[2] == pytest.approx(math.exp(-0.1) * 0.005, rel=1e-13)

    def test_overfull_rejected(self):
        with pytest.raises(FamilyError):
            EnvironmentSpec(QuadraticFamily(), FiniteSupport((2.0, 0.0, 3.0)))

    def test_missing_family(self, quad22):
        with pytest.raises(FamilyError):
            immigration_at(quad22, 1)

    def test_rejects_negative_q(self):
        with pytest.raises(FamilyError):
            FiniteSupport((1.0, -0.5))

    def test_explicit(self):
        fam = ExplicitImmigration((Pmf([0.5, 0.5]), Pmf([1.0])), periodic=True)
        env = EnvironmentSpec(QuadraticFamily(), fam)
        assert env.immigration_at(3)[1] == 0.5
        assert env.immigration_at(4)[0] == 1.0

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=8), st.integers(1, 40))
    def test_factorial_moments_exact(self, q_int, n):
        # d_1 = 1/3, so sum(q) <= 3 keeps every generation a valid law
        q = tuple(v / 8 for v in q_int)
        env = EnvironmentSpec(QuadraticFamily(a=1.0, n0=2, nu=2.0), FiniteSupport(q))
        d = env.decay(n)
        pmf = env.immigration_at(n)
        for k in range(1, len(q) + 1):
            # lambda_k = sum_j C(j,k) q_j, summed in exact rationals
            lam = float(sum(Fraction(math.comb(j, k)) * Fraction(qj) for j, qj in enumerate(q, 1)))
            got = factorial_moment(pmf, k) / (math.factorial(k) * d)
            assert got == pytest.approx(lam, rel=1e-12, abs=1e-15)

    def test_lambdas_match_binomial_sums(self):
        assert FiniteSupport((1.0, 0.5, 0.25)).lambdas()[:3] == pytest.approx((2.75, 1.25, 0.25))
        assert PoissonMean(1.5).lambdas()[0] == 1.5


class TestToeplitz:
    @pytest.mark.parametrize("n", [1, 5, 50, 400])
    def test_k1_telescoping(self, quad22, n):
        w = toeplitz_weights(quad22, n, 1)
        j = np.arange(1, n + 1)
        np.testing.assert_allclose(w, (j + 2) / (n + 2) / (j + 2), rtol=1e-12)

    def test_k1_sums_to_limit(self, quad22):
        # for a = 1 the rows sum to n / (n + 2)
        assert toeplitz_weights(quad22, 1000, 1).sum() == pytest.approx(1000 / 1002, rel=1e-12)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_vector_matches_scalar(self, quad22, k):
        w = toeplitz_weights(quad22, 30, k)
        for j in (1, 10, 30):
            assert w[j - 1] == pytest.approx(toeplitz_weight(quad22, 30, j, k), rel=1e-12)

    @pytest.mark.parametrize("k", [2, 3])
    def test_higher_k_row_sum(self, quad22, k):
        # sum_j (1/(j+2)) ((j+2)/(n+2))^k  against direct fsum
        n = 200
        want = math.fsum((j + 2) ** (k - 1) / (n + 2) ** k for j in range(1, n + 1))
        assert toeplitz_weights(quad22, n, k).sum() == pytest.approx(want, rel=1e-12)
        assert want == pytest.approx(1 / k, rel=2e-2)

    def test_bad_indices(self, quad22):
        with pytest.raises(ValueError):
            toeplitz_weight(quad22, 5, 6, 1)
        with pytest.raises(ValueError):
            toeplitz_weights(quad22, 5, 0)


class TestConditions:
    def test_quadratic_nu_exact(self):
        env = EnvironmentSpec(QuadraticFamily(a=1.0, n0=2, nu=2.0), FiniteSupport((1.0, 0.5)))
        rep = check_conditions(env, 10_000)
        assert rep.nu_terminal_deviation < 1e-9
        assert rep.subcritical
        assert rep.divergence == "by construction"
        assert rep.lambda_terminal_deviation[1] < 1e-9
        assert rep.lambda_terminal_deviation[2] < 1e-9
        assert np.all(np.abs(rep.third_ratio) < 1e-12)

    def test_poisson_second_lambda_vanishes(self):
        env = EnvironmentSpec(QuadraticFamily(), PoissonMean(1.0))
        rep = check_conditions(env, 1000)
        d = env.decay(1000)
        assert rep.lambda_ratio[2][-1] == pytest.approx(d / 2, rel=1e-9)
        assert rep.lambda_terminal_deviation[1] < 1e-12

    def test_partial_sum_harmonic(self, quad22):
        rep = check_conditions(quad22, 100)
        assert rep.decay_partial_sum == pytest.approx(math.fsum(1 / (n + 2) for n in range(1, 101)))

    def test_explicit_family_flagged(self):
        rep = check_conditions(constant_environment([0.3, 0.4, 0.3]), 10)
        assert rep.divergence != "by construction"

    def test_short_horizon(self, quad22):
        with pytest.raises(ValueError):
            check_conditions(quad22, 5)
