import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frogsim import ConfigError, EtaSpec, RngStream, SimParams
from frogsim.aux_chain import aux_vinf_counts
from frogsim.errors import SizeError
from frogsim.exact_oracle import (
    OffspringPmf, aggregate_lifetime_check, branching_extinction, coupon_band_probability, coupon_cdf,
    coupon_tau_moments, coupon_trials, exact_vinf_distribution, make_z_pmf, quadratic_extinction,
    simulate_coupon, simulate_star, star_vinf_counts,
)


def linear_solve_law(m, p, pmf, start):
    """Absorption law of (v, a) by one dense solve of (I - Q) N = R, self-loops kept."""
    K = len(pmf) - 1
    a_top = start + K * (m - 1)
    states = [(v, a) for v in range(1, m + 1) for a in range(1, a_top + 1)]
    idx = {s: i for i, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    R = np.zeros((len(states), m))
    for (v, a), i in idx.items():
        def go(v2, a2, w):
            if w == 0:
                return
            if a2 == 0:
                R[i, v2 - 1] += w
            else:
                Q[i, idx[(v2, min(a2, a_top))]] += w
        go(v, a - 1, 1 - p)
        go(v, a, p * (v - 1) / (m - 1))
        for j, q in enumerate(pmf):
            go(v + 1, a + j, p * (m - v) / (m - 1) * q)
    law = np.linalg.solve(np.eye(len(states)) - Q, R)
    return law[idx[(1, start)]]


def test_pinned_values():
    d = exact_vinf_distribution(3, 0.5, EtaSpec.constant(1))
    assert d.masses == pytest.approx([1 / 4, 7 / 27, 53 / 108], abs=1e-12)


def test_pinned_values_hand_recursion():
    # v = 2 layer: reaching V = 3 from (2, a) has g(a) = 1/3 + (2/3) g(a - 1); f = 1 - g = (2/3)^a
    p = Fraction(1, 2)
    stay = 1 - p / 2
    f = [Fraction(1)]
    for _ in range(4):
        f.append((1 - p) / stay * f[-1])
    # from (1, a): die w.p. 1 - p, else move to (2, a + 1); P(V = 1) = (1/2)^2 from a = 2
    p_v1 = (1 - p) ** 2
    p_v2 = p * f[3] + (1 - p) * p * f[2]
    assert float(p_v1) == pytest.approx(exact_vinf_distribution(3, 0.5, EtaSpec.constant(1)).prob(1))
    assert p_v2 == Fraction(7, 27)


@pytest.mark.parametrize("m,p,eta", [
    (3, 0.5, EtaSpec.constant(1)), (5, 0.6, EtaSpec.bernoulli(0.5)), (6, 0.3, EtaSpec.constant(2)),
    (7, 0.8, EtaSpec.table([0.1, 0.2, 0.3, 0.2, 0.2])), (4, 0.95, EtaSpec.constant(0)),
])
def test_dp_matches_linear_solve(m, p, eta):
    pmf = [eta.pmf(j) for j in range(eta.support_max + 1)]
    want = sum(q * linear_solve_law(m, p, pmf, 1 + j) for j, q in enumerate(pmf) if q > 0)
    assert exact_vinf_distribution(m, p, eta).masses == pytest.approx(want, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 7), st.floats(0.01, 0.99), st.lists(st.floats(0, 1), min_size=1, max_size=3))
def test_dp_matches_linear_solve_random(m, p, raw):
    total = sum(raw) + 0.1
    pmf = [x / total for x in raw] + [0.1 / total]
    top = max(range(len(pmf)), key=pmf.__getitem__)
    pmf[top] += 1.0 - math.fsum(pmf)
    eta = EtaSpec.table(pmf)
    d = exact_vinf_distribution(m, p, eta)
    want = sum(q * linear_solve_law(m, p, pmf, 1 + j) for j, q in enumerate(pmf) if q > 0)
    assert d.masses == pytest.approx(want, abs=1e-10)
    assert d.masses.sum() == pytest.approx(1.0, abs=1e-12)


def test_m2_eta_zero():
    d = exact_vinf_distribution(2, 0.3, EtaSpec.constant(0))
    assert d.masses == pytest.approx([0.7, 0.3], abs=1e-15)


def test_degenerate_cases():
    assert exact_vinf_distribution(6, 0.0, EtaSpec.constant(1)).prob(1) == 1.0
    assert exact_vinf_distribution(6, 1.0, EtaSpec.constant(1)).prob(6) == 1.0
    assert exact_vinf_distribution(1, 0.5, EtaSpec.constant(1)).prob(1) == 1.0


def test_fixed_a0_and_conditional_root():
    eta = EtaSpec.bernoulli(0.5)
    cond = exact_vinf_distribution(5, 0.6, eta, conditional_root=True).masses
    assert cond == pytest.approx(exact_vinf_distribution(5, 0.6, eta, a0=1).masses)
    assert cond == pytest.approx(linear_solve_law(5, 0.6, [0.5, 0.5], 1), abs=1e-10)


def test_survival():
    d = exact_vinf_distribution(4, 0.5, EtaSpec.constant(1))
    assert d.survival()[0] == pytest.approx(1.0)
    assert d.survival()[-1] == pytest.approx(d.prob(4))


@pytest.mark.parametrize("m,eta", [(17, EtaSpec.constant(1)), (5, EtaSpec.poisson(1.0)), (5, EtaSpec.constant(5))])
def test_size_limits(m, eta):
    with pytest.raises(SizeError):
        exact_vinf_distribution(m, 0.5, eta)


def test_coupon_moments():
    assert coupon_tau_moments(1) == (1.0, 0.0)
    assert coupon_tau_moments(2) == pytest.approx((3.0, 2.0))
    assert coupon_tau_moments(3)[0] == pytest.approx(5.5)


def test_coupon_moments_brute_force():
    # exact law of tau for n = 3 by enumerating draw sequences up to a long horizon
    n, horizon = 3, 120
    mean = 0.0
    for t in range(n, horizon):
        # P(tau = t): first t - 1 draws cover exactly n - 1 coupons, the t-th draw is the missing one
        cover = sum((-1) ** j * math.comb(n - 1, j) * ((n - 1 - j) / n) ** (t - 1) for j in range(n - 1))
        mean += t * n * cover * (1 / n)
    assert mean == pytest.approx(coupon_tau_moments(3)[0], rel=1e-6)


def test_simulate_coupon_single():
    assert simulate_coupon(1, [1], RngStream(0)) == (1, {1: 1})


def test_simulate_coupon_partial_times_ordered():
    tau, part = simulate_coupon(100, [10, 50, 90, 100], RngStream(1))
    assert part[10] < part[50] < part[90] <= part[100] == tau
    assert part[10] >= 10


def test_coupon_mean():
    n = 10**4
    taus = coupon_trials(n, [], 1000, seed=2)[:, 0]
    mean, var = coupon_tau_moments(n)
    assert mean == pytest.approx(n * sum(1 / k for k in range(1, n + 1)))
    assert abs(taus.mean() - mean) <= 3 * math.sqrt(var / 1000)


def test_coupon_partial_bound():
    n, eps = 10**5, 0.1
    i = math.ceil(round((1 - eps) * n, 9))
    tau_i = coupon_trials(n, [i], 1000, seed=3)[:, 1]
    assert np.mean(tau_i <= 2 * (1 - eps) / eps * n) >= 0.99


@pytest.mark.parametrize("n", [12, 100, 300])
def test_coupon_cdf_against_inclusion_exclusion(n):
    for c in (0.8, 1.0, 1.2, 1.5):
        t = int(c * n * math.log(n))
        exact = float(sum((-1) ** k * math.comb(n, k) * Fraction(n - k, n) ** t for k in range(n + 1)))
        approx = coupon_cdf(n, t)
        assert approx >= exact - 1e-12
        assert approx - exact <= 2 * math.log(n) / n


def test_coupon_band_probability_gumbel_limit():
    n, eps = 10**5, 0.2
    assert coupon_band_probability(n, eps) == pytest.approx(math.exp(-n**-eps), abs=2e-3)


def test_extinction_examples():
    assert branching_extinction(OffspringPmf((0.6, 0.4))) == 1.0
    assert branching_extinction(OffspringPmf((0.1, 0.45, 0.45))) == pytest.approx(2 / 9, abs=1e-12)
    assert branching_extinction(OffspringPmf((0.0, 1.0))) == 0.0
    assert branching_extinction(OffspringPmf((0.0, 0.5, 0.5))) == 0.0
    assert branching_extinction(OffspringPmf((0.5, 0.0, 0.5))) == 1.0  # critical


def test_extinction_poisson_fixed_point():
    lam = 1.5
    pmf = [math.exp(-lam) * lam**k / math.factorial(k) for k in range(60)]
    pmf[0] += 1 - math.fsum(pmf)
    q = branching_extinction(OffspringPmf(tuple(pmf)))
    assert q == pytest.approx(math.exp(lam * (q - 1)), abs=1e-12)
    assert 0 < q < 1


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_iterate_matches_quadratic(a, b, c):
    total = a + b + c
    if total == 0:
        return
    q0, q1 = a / total, b / total
    q2 = max(0.0, 1.0 - q0 - q1)
    pmf = OffspringPmf((q0, q1, q2))
    if abs(pmf.mean() - 1.0) < 1e-3:
        return  # near-critical: convergence is sublinear
    assert branching_extinction(pmf) == pytest.approx(quadratic_extinction(q0, q1, q2), abs=1e-10)


def test_z_pmf():
    assert make_z_pmf(0.9, 0.5, EtaSpec.constant(1)).masses == pytest.approx((0.1, 0.45, 0.45))
    assert make_z_pmf(1.0, 0.5, EtaSpec.constant(0)).masses == pytest.approx((0.0, 1.0, 0.0))
    for p, c, q in itertools.product([0.0, 0.3, 1.0], [0.1, 0.9], [0.0, 0.4, 1.0]):
        assert math.fsum(make_z_pmf(p, c, EtaSpec.bernoulli(q)).masses) == pytest.approx(1.0)
    with pytest.raises(ConfigError, match="c"):
        make_z_pmf(0.5, 1.0, EtaSpec.constant(1))


def test_star_p_zero():
    assert simulate_star(SimParams(5, 0.0, EtaSpec.constant(1))).v_infty == 1


def test_star_eta_zero_equals_original():
    params = SimParams(2, 0.4, EtaSpec.constant(0), seed=4)
    a, _ = star_vinf_counts(params, 50_000)
    b, _, _ = aux_vinf_counts(params, 50_000)
    assert np.array_equal(a, b)  # same initial configuration, same draws


def test_star_dominates():
    eta = EtaSpec.constant(1)
    star, _ = star_vinf_counts(SimParams(8, 0.6, eta, seed=5), 100_000)
    orig, _, _ = aux_vinf_counts(SimParams(8, 0.6, eta, seed=6), 100_000)
    s = np.cumsum(star[::-1])[::-1] / star.sum()
    o = np.cumsum(orig[::-1])[::-1] / orig.sum()
    assert np.all(s[1:] >= o[1:] - 0.02)


def test_lifetime_sum_one_particle():
    rep = aggregate_lifetime_check(1, 0.5, 100_000, RngStream(7))
    assert abs(rep.mean - 1.0) <= 3 * rep.std_error


def test_lifetime_sum_p_zero():
    rep = aggregate_lifetime_check(50, 0.0, 100, RngStream(8))
    assert np.all(rep.sums == 0)


def test_lifetime_concentration():
    rep = aggregate_lifetime_check(10**4, 0.99, 1000, RngStream(9), 0.1)
    assert rep.inside_fraction >= 0.99
    assert abs(rep.z_score) <= 4
