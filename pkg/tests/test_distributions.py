import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats
from scipy.integrate import trapezoid as scipy_trapezoid

from divest.distributions import (
    Beta,
    Gaussian,
    GaussianMixture,
    Product,
    TruncatedGaussian,
    analytic_chi2,
    analytic_kl,
    chi2_truth,
    density,
    derive_seed,
    kl_truth,
    parse_dist,
    sample,
    true_ratio,
)
from divest.errors import ArgumentError, ParseError, SamplingError

N01 = Gaussian((0.0,), (1.0,))
N11 = Gaussian((1.0,), (1.0,))

# Beta(2,2) vs Beta(1,1): integral of 6t(1-t) log(6t(1-t)) over [0,1] = log 6 - 5/3
BETA22_VS_UNIFORM_KL = 0.12509280256138822


def quad_density(fn, lo, hi):
    return integrate.quad(fn, lo, hi, limit=200, epsabs=1e-12, epsrel=1e-12)[0]


SHIPPED = [
    ("gauss:0,1", -12, 12),
    ("gauss:1.5,4", -30, 30),
    ("beta:2,2", 0, 1),
    ("beta:0.5,3", 0, 1),
    ("mix:0.5*gauss:-2,1+0.5*gauss:2,1", -20, 20),
    ("tgauss:1,1", -2, 4),
    ("tgauss:0,1,0,inf", 0, 40),
]


# ---------------------------------------------------------------- sampling


def test_gaussian_sample_mean_clt():
    n = 10**5
    x = sample(N01, n, 123)
    assert x.shape == (n, 1)
    assert abs(x.mean()) <= 4 / math.sqrt(n)


def test_truncated_half_line_support():
    spec = parse_dist("tgauss:0,2,0,inf")
    x = sample(spec, 5000, 1)
    assert x.shape == (5000, 2)
    assert np.all(x >= 0)


def test_truncated_default_box():
    spec = TruncatedGaussian.centered(1.0, 3)
    assert spec.support() == [(-2.0, 4.0)] * 3
    x = sample(spec, 2000, 2)
    assert np.all((x >= -2) & (x <= 4))


def test_same_seed_identical():
    for text, *_ in SHIPPED:
        spec = parse_dist(text)
        np.testing.assert_array_equal(sample(spec, 50, 99), sample(spec, 50, 99))


def test_distinct_seeds_distinct_streams():
    assert not np.array_equal(sample(N01, 20, 1), sample(N01, 20, 2))


def test_rejection_acceptance_too_low():
    spec = TruncatedGaussian((0.0,), 40.0, 41.0)
    with pytest.raises(SamplingError):
        sample(spec, 10, 0)


def test_sample_rejects_nonpositive_n():
    with pytest.raises(ArgumentError):
        sample(N01, 0, 0)


def test_mixture_and_product_sample_moments():
    mix = parse_dist("mix:0.25*gauss:-2,1+0.75*gauss:2,1")
    x = sample(mix, 200_000, 3)
    assert x.mean() == pytest.approx(1.0, abs=0.02)
    prod = parse_dist("prod:beta:2,2&gauss:3,1")
    z = sample(prod, 100_000, 4)
    assert z.shape == (100_000, 2)
    assert z[:, 0].mean() == pytest.approx(0.5, abs=0.01)
    assert z[:, 1].mean() == pytest.approx(3.0, abs=0.02)


def test_derive_seed_properties():
    a = derive_seed(0, "M2", 100, 3, 0)
    assert a == derive_seed(0, "M2", 100, 3, 0)
    assert a != derive_seed(0, "M2", 100, 3, 1)
    assert a != derive_seed(0, "M1", 100, 3, 0)
    assert a != derive_seed(1, "M2", 100, 3, 0)
    assert 0 <= a < 2**64
    with pytest.raises(ArgumentError):
        derive_seed(-1)


# ---------------------------------------------------------------- densities


def test_standard_normal_mode():
    assert density(N01, [0.0]) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert density(N01, 0.0) == pytest.approx(0.3989423, abs=1e-7)


def test_uniform_beta():
    assert density(Beta(1, 1), [0.5]) == pytest.approx(1.0, rel=1e-14)


def test_density_outside_support_is_zero():
    assert density(Beta(2, 2), [1.5]) == 0.0
    assert density(parse_dist("tgauss:0,1"), [3.5]) == 0.0
    assert density(parse_dist("tgauss:0,2"), [0.0, -4.0]) == 0.0


def test_density_matches_scipy():
    t = np.linspace(-3, 3, 13)[:, None]
    np.testing.assert_allclose(density(Gaussian((1.0,), (2.0,)), t),
                               stats.norm.pdf(t[:, 0], 1, math.sqrt(2)), rtol=1e-13)
    u = np.linspace(0.01, 0.99, 13)[:, None]
    np.testing.assert_allclose(density(Beta(2, 5), u), stats.beta.pdf(u[:, 0], 2, 5), rtol=1e-12)
    tg = parse_dist("tgauss:0.5,1,-1,2")
    ref = stats.truncnorm.pdf(t[:, 0], -1.5, 1.5, loc=0.5)
    np.testing.assert_allclose(density(tg, t), ref, rtol=1e-12, atol=1e-300)


def test_density_dimension_mismatch():
    with pytest.raises(ArgumentError):
        density(N01, [0.0, 1.0])


@pytest.mark.parametrize("text,lo,hi", SHIPPED)
def test_density_integrates_to_one_1d(text, lo, hi):
    spec = parse_dist(text)
    assert spec.dim == 1
    mass = quad_density(lambda t: density(spec, [t]), lo, hi)
    assert mass == pytest.approx(1.0, abs=1e-3)


def test_density_integrates_to_one_2d():
    for spec in (parse_dist("tgauss:1,2"), parse_dist("gauss:0,1|1,2"), parse_dist("prod:beta:2,2&gauss:0,1")):
        (lo1, hi1), (lo2, hi2) = [(max(a, -12), min(b, 12)) for a, b in spec.support()]
        g1, g2 = np.linspace(lo1, hi1, 1201), np.linspace(lo2, hi2, 1201)
        T = np.stack(np.meshgrid(g1, g2, indexing="ij"), axis=-1).reshape(-1, 2)
        vals = density(spec, T).reshape(1201, 1201)
        mass = scipy_trapezoid(scipy_trapezoid(vals, g2, axis=1), g1)
        assert mass == pytest.approx(1.0, abs=1e-3)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50))
def test_density_nonnegative(t):
    for text, *_ in SHIPPED:
        spec = parse_dist(text)
        if spec.dim == 1:
            assert density(spec, [t]) >= 0.0


# ---------------------------------------------------------------- ratios


def test_ratio_equal_distributions_is_one():
    g0 = true_ratio(N01, N01)
    np.testing.assert_array_equal(g0(np.linspace(-4, 4, 9)[:, None]), np.ones(9))


def test_ratio_shifted_gaussians():
    g0 = true_ratio(N11, N01)
    t = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(g0(t[:, None]), np.exp(t - 0.5), rtol=1e-13)
    assert g0.log(0.3) == pytest.approx(0.3 - 0.5, abs=1e-15)


def test_ratio_is_density_quotient_bitwise():
    p, q = parse_dist("mix:0.5*gauss:-2,1+0.5*gauss:2,1"), parse_dist("gauss:0,5")
    g0 = true_ratio(p, q)
    for t in np.linspace(-5, 5, 21):
        assert g0([t]) == density(p, [t]) / density(q, [t])


def test_ratio_normalisation_under_q():
    g0 = true_ratio(Beta(2, 3), Beta(1.5, 1.5))
    q = Beta(1.5, 1.5)
    total = quad_density(lambda t: g0([t]) * density(q, [t]), 0, 1)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_ratio_support_mismatch():
    with pytest.raises(ArgumentError):
        true_ratio(parse_dist("tgauss:0,1,-3,3"), parse_dist("tgauss:0,1,-2,3"))
    with pytest.raises(ArgumentError):
        true_ratio(Beta(2, 2), N01)
    with pytest.raises(ArgumentError):
        true_ratio(parse_dist("gauss:0,1|0,1"), N01)


# ---------------------------------------------------------------- truths


def test_kl_gaussian_shift():
    assert analytic_kl(N01, N11) == pytest.approx(0.5, abs=1e-15)
    assert not kl_truth(N01, N11).approximate


def test_kl_equal_is_zero():
    for text, *_ in SHIPPED:
        spec = parse_dist(text)
        assert analytic_kl(spec, spec) == pytest.approx(0.0, abs=1e-9)


def test_kl_beta_against_quadrature_oracle():
    def integrand(t):
        p = stats.beta.pdf(t, 2, 2)
        return p * math.log(p) if p > 0 else 0.0

    oracle = quad_density(integrand, 0, 1)
    assert oracle == pytest.approx(BETA22_VS_UNIFORM_KL, abs=1e-10)
    assert analytic_kl(Beta(2, 2), Beta(1, 1)) == pytest.approx(oracle, abs=1e-6)


def test_kl_gaussian_general_against_quadrature():
    p, q = Gaussian((0.3,), (0.5,)), Gaussian((-1.0,), (2.0,))
    f = lambda t: stats.norm.pdf(t, 0.3, math.sqrt(0.5)) * (
        stats.norm.logpdf(t, 0.3, math.sqrt(0.5)) - stats.norm.logpdf(t, -1, math.sqrt(2)))
    assert analytic_kl(p, q) == pytest.approx(quad_density(f, -20, 20), abs=1e-9)


def test_kl_mixture_quadrature_path():
    p, q = parse_dist("mix:0.5*gauss:-2,1+0.5*gauss:2,1"), parse_dist("gauss:0,5")
    pdf = lambda t: 0.5 * stats.norm.pdf(t, -2) + 0.5 * stats.norm.pdf(t, 2)
    f = lambda t: pdf(t) * (math.log(pdf(t)) - stats.norm.logpdf(t, 0, math.sqrt(5)))
    truth = kl_truth(p, q)
    assert not truth.approximate
    assert truth.value == pytest.approx(quad_density(f, -25, 25), abs=1e-6)


def test_kl_truncated_product_decomposes():
    p, q = parse_dist("tgauss:1,2,-3,4"), parse_dist("tgauss:0,2,-3,4")
    p1, q1 = parse_dist("tgauss:1,1,-3,4"), parse_dist("tgauss:0,1,-3,4")
    lp = lambda t: stats.truncnorm.logpdf(t, -4, 3, loc=1)
    lq = lambda t: stats.truncnorm.logpdf(t, -3, 4, loc=0)
    one = quad_density(lambda t: math.exp(lp(t)) * (lp(t) - lq(t)), -3, 4)
    assert analytic_kl(p1, q1) == pytest.approx(one, abs=1e-8)
    assert analytic_kl(p, q) == pytest.approx(2 * one, abs=1e-8)


def test_kl_monte_carlo_path_flagged():
    p = Product((parse_dist("beta:2,2"), parse_dist("gauss:0,1")))
    q = parse_dist("prod:beta:1,1&gauss:1,1")
    truth = kl_truth(p, q)
    assert truth.value == pytest.approx(BETA22_VS_UNIFORM_KL + 0.5, abs=1e-6)

    # a diagonal Gaussian against a product has no shared structure: Monte Carlo
    mc = kl_truth(Gaussian((0.0, 0.0), (1.0, 1.0)), Product((N01, N11)))
    assert mc.approximate
    assert mc.value == pytest.approx(0.5, abs=5e-3)


def test_kl_nonnegative_on_closed_forms():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m1, m2 = rng.normal(size=2)
        v1, v2 = rng.uniform(0.2, 3, size=2)
        assert analytic_kl(Gaussian((m1,), (v1,)), Gaussian((m2,), (v2,))) > 0
        a1, b1, a2, b2 = rng.uniform(0.5, 5, size=4)
        assert analytic_kl(Beta(a1, b1), Beta(a2, b2)) > 0


def test_chi2_equal_is_one():
    for text, *_ in SHIPPED:
        spec = parse_dist(text)
        assert analytic_chi2(spec, spec) == pytest.approx(1.0, abs=1e-8)


def test_chi2_gaussian_shift_against_quadrature():
    oracle = quad_density(lambda t: stats.norm.pdf(t) ** 2 / stats.norm.pdf(t, 0.5), -30, 30)
    assert oracle == pytest.approx(math.exp(0.25), rel=1e-10)
    assert analytic_chi2(N01, Gaussian((0.5,), (1.0,))) == pytest.approx(math.exp(0.25), rel=1e-14)
    assert analytic_chi2(N01, Gaussian((0.5,), (1.0,))) == pytest.approx(1.2840, abs=1e-4)


def test_chi2_general_gaussian_against_quadrature():
    p, q = Gaussian((0.2,), (0.8,)), Gaussian((-0.4,), (1.5,))
    oracle = quad_density(lambda t: stats.norm.pdf(t, 0.2, math.sqrt(0.8)) ** 2
                          / stats.norm.pdf(t, -0.4, math.sqrt(1.5)), -30, 30)
    assert analytic_chi2(p, q) == pytest.approx(oracle, rel=1e-9)


def test_chi2_beta_and_mixture_against_quadrature():
    oracle = quad_density(lambda t: stats.beta.pdf(t, 2, 3) ** 2 / stats.beta.pdf(t, 1.5, 2), 0, 1)
    assert analytic_chi2(Beta(2, 3), Beta(1.5, 2)) == pytest.approx(oracle, rel=1e-8)
    p, q = parse_dist("mix:0.5*gauss:-2,1+0.5*gauss:2,1"), parse_dist("gauss:0,5")
    pdf = lambda t: 0.5 * stats.norm.pdf(t, -2) + 0.5 * stats.norm.pdf(t, 2)
    oracle = quad_density(lambda t: pdf(t) ** 2 / stats.norm.pdf(t, 0, math.sqrt(5)), -30, 30)
    assert analytic_chi2(p, q) == pytest.approx(oracle, rel=1e-8)


def test_chi2_heavier_p_tail_diverges():
    with pytest.raises(ArgumentError):
        analytic_chi2(Gaussian((0.0,), (4.0,)), N01)
    with pytest.raises(ArgumentError):
        analytic_chi2(parse_dist("mix:0.5*gauss:0,1+0.5*gauss:0,3"), N01)
    with pytest.raises(ArgumentError):
        analytic_chi2(Beta(1, 1), Beta(3, 1))


# ---------------------------------------------------------------- text form


def test_parse_forms():
    assert parse_dist("gauss:0,1") == N01
    g2 = parse_dist("gauss2:1,1|0,1")
    assert g2 == Gaussian((1.0, 0.0), (1.0, 1.0))
    assert parse_dist("beta:2,2") == Beta(2.0, 2.0)
    mix = parse_dist("mix:0.5*gauss:0,1+0.5*gauss:3,1")
    assert mix == GaussianMixture((0.5, 0.5), (0.0, 3.0), (1.0, 1.0))
    tg = parse_dist("tgauss:1,3")
    assert tg == TruncatedGaussian((1.0, 1.0, 1.0), -2.0, 4.0)
    assert parse_dist("prod:beta:2,2&gauss:0,1") == Product((Beta(2.0, 2.0), N01))


@pytest.mark.parametrize("text", [
    "gauss:0,1", "gauss:1,1|0,2", "tgauss:1,2,-3,4", "beta:0.5,3",
    "mix:0.5*gauss:-2,1+0.5*gauss:2,1", "prod:beta:2,2&gauss:0,1",
])
def test_format_round_trip(text):
    spec = parse_dist(text)
    assert parse_dist(str(spec)) == spec


@pytest.mark.parametrize("text", [
    "gauss", "gauss:0", "gauss:a,b", "gauss3:0,1|0,1", "tgauss:0", "tgauss:0,1.5",
    "beta:1", "mix:0.5*beta:1,1", "cauchy:0,1",
])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_dist(text)


@pytest.mark.parametrize("text", ["gauss:0,-1", "beta:0,1", "mix:0.3*gauss:0,1+0.3*gauss:1,1", "tgauss:0,1,3,2"])
def test_invalid_parameters(text):
    with pytest.raises(ArgumentError):
        parse_dist(text)
