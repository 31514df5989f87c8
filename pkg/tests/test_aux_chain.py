import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frogsim import ConfigError, EtaSpec, RngStream, SimParams
from frogsim.aux_chain import (
    AuxState, aux_vinf_counts, cohort_trials, event_successes, simulate_aux, simulate_aux_injected,
    simulate_cohort, step_aux, x_pmf,
)
from frogsim.exact_oracle import exact_vinf_distribution

ONE = EtaSpec.constant(1)


def tv(counts, masses):
    emp = np.asarray(counts[1:], float) / np.sum(counts)
    return 0.5 * np.abs(emp - masses).sum()


def test_x_pmf_all_visited_revisits():
    assert x_pmf(11, 1.0, 11, ONE).prob(1) == 1.0


def test_x_pmf_example():
    d = x_pmf(3, 0.5, 1, EtaSpec.bernoulli(0.5))
    assert [d.prob(x) for x in range(4)] == pytest.approx([0.5, 0.25, 0.25, 0.0], abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 200), st.floats(0, 1), st.data(),
       st.sampled_from([ONE, EtaSpec.bernoulli(0.3), EtaSpec.poisson(2.0), EtaSpec.geometric(0.5)]))
def test_x_pmf_normalized(m, p, data, eta):
    v = data.draw(st.integers(1, m))
    d = x_pmf(m, p, v, eta)
    total = math.fsum(d.prob(x) for x in range(200))
    assert total == pytest.approx(1.0, abs=1e-12)
    assert d.new_mass == pytest.approx(p * (m - v) / (m - 1))


def test_step_p_zero_kills():
    s = step_aux(AuxState.initial(3), 5, 0.0, ONE, RngStream(0))
    assert (s.v, s.a_prime, s.k) == (1, 2, 1)


def test_step_example_from_one_two():
    rng = RngStream(1)
    seen = {(1, 1): 0, (2, 3): 0}
    n = 20_000
    for _ in range(n):
        s = step_aux(AuxState(0, 1, 2), 3, 0.5, ONE, rng)
        seen[(s.v, s.a_prime)] += 1
    assert sum(seen.values()) == n
    assert abs(seen[(2, 3)] / n - 0.5) <= 4 * math.sqrt(0.25 / n)


def test_step_absorbed_rejected():
    with pytest.raises(ConfigError):
        step_aux(AuxState(3, 2, 0, True), 5, 0.5, ONE, RngStream(0))


def test_m2_eta_zero_law():
    p = 0.37
    counts, capped, _ = aux_vinf_counts(SimParams(2, p, EtaSpec.constant(0), seed=2), 100_000)
    assert capped == 0
    assert abs(counts[2] / 100_000 - p) <= 4 * math.sqrt(p * (1 - p) / 100_000)


def test_hand_law():
    counts, _, _ = aux_vinf_counts(SimParams(3, 0.5, ONE, seed=3), 100_000)
    assert tv(counts, [1 / 4, 7 / 27, 53 / 108]) <= 0.02


def test_bernoulli_law():
    eta = EtaSpec.bernoulli(0.5)
    counts, _, _ = aux_vinf_counts(SimParams(5, 0.6, eta, seed=4), 100_000)
    assert tv(counts, exact_vinf_distribution(5, 0.6, eta).masses) <= 0.02


@pytest.mark.parametrize("k1", [1, 2, 5])
def test_cohort_rule_same_law(k1):
    eta = EtaSpec.bernoulli(0.5)
    counts, _, _ = aux_vinf_counts(SimParams(6, 0.7, eta, seed=5), 100_000, rule="cohort", k1=k1)
    assert tv(counts, exact_vinf_distribution(6, 0.7, eta).masses) <= 0.02


def test_trace_identities():
    params = SimParams(30, 0.9, EtaSpec.poisson(1.0))
    for i in range(200):
        out = simulate_aux(params, record_trace=True, rng=RngStream(6, i))
        t = out.trace
        steps = np.arange(1, len(t.a_prime))
        assert np.array_equal(t.a_prime[steps], t.a_prime[steps - 1] + t.x[steps] - 1)
        # absorbed exactly at the first zero
        zeros = np.flatnonzero(t.a_prime == 0)
        assert zeros.size <= 1 and (zeros.size == 0 or zeros[0] == len(t.a_prime) - 1)
        assert out.rounds_elapsed == len(t.a_prime) - 1
        dv = np.diff(t.v_prime)
        assert set(np.unique(dv)) <= {0, 1}
        assert np.all(t.x[steps][dv == 1] >= 1)
        assert t.v_prime[-1] == out.v_infty


def test_trace_uses_same_draws():
    params = SimParams(40, 0.85, EtaSpec.bernoulli(0.7))
    for i in range(100):
        a = simulate_aux(params, rng=RngStream(7, i))
        b = simulate_aux(params, record_trace=True, rng=RngStream(7, i))
        assert (a.v_infty, a.total_steps, a.rounds_elapsed) == (b.v_infty, b.total_steps, b.rounds_elapsed)


def test_trace_csv(tmp_path):
    out = simulate_aux(SimParams(5, 0.5, ONE, seed=1), record_trace=True)
    path = tmp_path / "trace.csv"
    out.trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,X_k,A_prime_k,V_prime_k"
    assert len(lines) == out.rounds_elapsed + 2


def test_injected_run_definitions():
    params = SimParams(3, 0.5, ONE)
    saw_absorption = False
    for i in range(300):
        run = simulate_aux_injected(params, 10_000, rng=RngStream(8, i))
        r = run.r
        assert r is not None  # on K_3 the original process dies well before 10^4 rounds
        saw_absorption = True
        assert np.array_equal(run.running[:r], run.actual[:r])
        assert run.running[r] == 0 and run.actual[r] == 1
        assert np.all(run.actual >= 1)
        assert np.all(run.active[r:] == 0) and np.array_equal(run.active[:r], run.running[:r])
        assert np.all(run.visited[r:] == run.v_prime[r])
        assert np.all(run.v_prime[r:] >= run.visited[r:])
        run_sum = run.running[0] + np.concatenate([[0], np.cumsum(run.x[1:] - 1)])
        assert np.array_equal(run.running, run_sum)
    assert saw_absorption


def test_injected_extras_keep_visiting():
    # after R the extras still discover vertices, so V'_k can pass V_R
    params = SimParams(3, 0.5, ONE)
    grew = 0
    for i in range(300):
        run = simulate_aux_injected(params, 10_000, rng=RngStream(9, i))
        grew += run.v_prime[-1] > run.v_prime[run.r]
    assert grew > 0


def test_cohort_died_before_k1():
    params = SimParams(50, 0.5, ONE)
    hits = 0
    for i in range(200):
        tr = simulate_cohort(params, 30, 40, rng=RngStream(10, i))
        if tr.died_before_k1:
            hits += 1
            assert tr.a_k1 == 0 and tr.t_k1 == 0
    assert hits > 0


def test_cohort_p_zero():
    for i in range(20):
        tr = simulate_cohort(SimParams(10, 0.0, ONE), 5, 5, rng=RngStream(11, i))
        assert tr.r == 2 and tr.t_k1 == 0 and tr.v_final == 1


def test_cohort_run_to_end_law():
    eta = EtaSpec.bernoulli(0.5)
    params = SimParams(5, 0.6, eta)
    vals = [simulate_cohort(params, 2, 5, rng=RngStream(12, i), run_to_end=True).v_final for i in range(30_000)]
    counts = np.bincount(vals, minlength=6)
    assert tv(counts, exact_vinf_distribution(5, 0.6, eta).masses) <= 0.025


def test_cohort_trials_match_single_runs():
    params = SimParams(200, 0.95, ONE, seed=13)
    batch = cohort_trials(params, 20, 150, 50)
    for i, tr in enumerate(batch[:10]):
        assert tr == simulate_cohort(params, 20, 150, rng=RngStream(13, i))


def test_cohort_argument_checks():
    with pytest.raises(ConfigError, match="k1"):
        simulate_cohort(SimParams(5, 0.5, ONE), 0, 3)
    with pytest.raises(ConfigError, match="target"):
        simulate_cohort(SimParams(5, 0.5, ONE), 1, 9)


def test_event_successes_consistent_with_counts():
    params = SimParams(12, 0.75, EtaSpec.bernoulli(0.5), seed=14)
    counts, _, _ = aux_vinf_counts(params, 20_000)
    for threshold in (1, 6, 12):
        succ, _ = event_successes(params, threshold, 20_000)
        assert succ == counts[threshold:].sum()  # same streams, early stop changes nothing


def test_p_one_convention():
    out = simulate_aux(SimParams(7, 1.0, ONE))
    assert out.v_infty == 7 and out.by_convention


def test_threads_do_not_change_counts():
    params = SimParams(30, 0.8, EtaSpec.poisson(1.0), seed=15)
    assert np.array_equal(aux_vinf_counts(params, 9000, threads=1)[0], aux_vinf_counts(params, 9000, threads=3)[0])
