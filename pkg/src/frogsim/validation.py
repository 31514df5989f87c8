"""The desk-scale validation battery behind ``frogsim validate``.

Each check returns a :class:`~frogsim.experiments.CheckResult`. The full
battery reproduces every exit criterion; ``quick`` runs a reduced subset in
well under a minute.
"""

from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from .aux_chain import aux_vinf_counts
from .dists import EtaSpec
from .exact_oracle import (
    OffspringPmf, branching_extinction, exact_vinf_distribution, quadratic_extinction,
    star_vinf_counts,
)
from .experiments import (
    CheckResult, Event, FiniteNConfig, SweepConfig, cohort_checks, coupon_band_law_check, coupon_concentration_check,
    coupon_partial_check, early_survival_check, estimate_event, lifetime_check,
    monotone_within_slack, monotonicity_check, phase_sweep, wilson_interval, write_results,
)
from .frog_sync import sync_vinf_counts
from .model import SimParams
from .rng import RngStream, derive_seed

GRID_M = (3, 5, 8)
GRID_P = (0.3, 0.6)
GRID_ETA = (EtaSpec.constant(1), EtaSpec.bernoulli(0.5))


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def empirical(counts) -> np.ndarray:
    """Histogram over v = 0..m to masses over v = 1..m."""
    counts = np.asarray(counts, dtype=float)
    return counts[1:] / counts.sum()


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def check_oracle_pin() -> CheckResult:
    d = exact_vinf_distribution(3, 0.5, EtaSpec.constant(1))
    want = np.array([1 / 4, 7 / 27, 53 / 108])
    err = float(np.max(np.abs(d.masses - want)))
    return CheckResult("oracle_pin", err, 1e-10, _status(err <= 1e-10),
                       f"m=3 p=0.5 eta=constant:1 -> {', '.join(f'{x:.12g}' for x in d.masses)}; "
                       f"max error {err:.2e}")


def check_equivalence(trials: int, tol: float, seed: int, ms=GRID_M, ps=GRID_P, etas=GRID_ETA,
                      threads=None) -> CheckResult:
    """frog_sync, the collapsed chain and the cohort-priority rule against the exact law."""
    worst, worst_at = 0.0, ""
    for i, m in enumerate(ms):
        for j, p in enumerate(ps):
            for k, eta in enumerate(etas):
                exact = exact_vinf_distribution(m, p, eta).masses
                base = derive_seed(seed, i, j, k)
                runs = {
                    "sync": sync_vinf_counts(SimParams(m, p, eta, derive_seed(base, 0)), trials, threads)[0],
                    "aux": aux_vinf_counts(SimParams(m, p, eta, derive_seed(base, 1)), trials, threads)[0],
                    "cohort": aux_vinf_counts(SimParams(m, p, eta, derive_seed(base, 2)), trials, threads,
                                              rule="cohort", k1=2)[0],
                }
                for name, counts in runs.items():
                    tv = tv_distance(empirical(counts), exact)
                    if tv > worst:
                        worst, worst_at = tv, f"{name} m={m} p={p} eta={eta}"
    return CheckResult("oracle_equivalence", worst, tol, _status(worst <= tol),
                       f"{len(ms) * len(ps) * len(etas)} grid points x 3 simulators, {trials} trials each: "
                       f"max TV {worst:.4f} at {worst_at} (need <= {tol})")


def check_extinction(n_random: int = 100, seed: int = 7) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_random):
        q = rng.dirichlet(np.ones(3))
        q = q / q.sum()
        pmf = OffspringPmf((q[0], q[1], 1.0 - q[0] - q[1]))
        worst = max(worst, abs(branching_extinction(pmf) - quadratic_extinction(*pmf.masses)))
    pinned = branching_extinction(OffspringPmf((0.1, 0.45, 0.45)))
    pin_err = abs(pinned - 2 / 9)
    ok = worst <= 1e-10 and pin_err <= 1e-10
    return CheckResult("extinction_solver", max(worst, pin_err), 1e-10, _status(ok),
                       f"{n_random} random pmfs: max |iterate - closed form| {worst:.2e}; "
                       f"(0.1, 0.45, 0.45) -> {pinned:.12f}")


def check_high_proportion(m: int, p: float, eps: float, trials: int, seed: int, min_phat: float,
                   threads=None) -> CheckResult:
    row = estimate_event(SimParams(m, p, EtaSpec.constant(1)), Event.proportion(eps), trials, seed, threads)
    ok = row.valid and row.p_hat >= min_phat
    return CheckResult("high_proportion", row.p_hat, min_phat, _status(ok),
                       f"m={m} p={p} eps={eps} trials={trials}: p_hat {row.p_hat:.4f} "
                       f"[{row.ci_low:.4f}, {row.ci_high:.4f}] (need >= {min_phat})")


def separation_verdict(rows, alphas=(0.5, 2.0), min_gap=0.5) -> CheckResult:
    lo_a, hi_a = alphas
    below = [r for r in rows if r.alpha == lo_a]
    above = [r for r in rows if r.alpha == hi_a]
    bad_up = monotone_within_slack(below, increasing=True)
    bad_down = monotone_within_slack(above, increasing=False)
    gap = below[-1].p_hat - above[-1].p_hat
    ok = not bad_up and not bad_down and gap >= min_gap and all(r.valid for r in rows)
    table = "; ".join(f"n={r.n} a={r.alpha:g} p_hat={r.p_hat:.3f}" for r in rows)
    return CheckResult("threshold_separation", gap, min_gap, _status(ok),
                       f"{table}; gap at n={below[-1].n}: {gap:.3f} (need >= {min_gap}); "
                       f"trend violations: {bad_up + bad_down or 'none'}")


def check_threshold_separation(n_values, trials: int, seed: int, min_gap=0.5, threads=None) -> CheckResult:
    cfg = SweepConfig(list(n_values), [0.5, 2.0], EtaSpec.constant(1), seed=seed, trials=trials)
    return separation_verdict(phase_sweep(cfg, threads), min_gap=min_gap)


def check_star(m: int, p: float, trials: int, tol: float, seed: int, threads=None) -> CheckResult:
    eta = EtaSpec.constant(1)
    star = empirical(star_vinf_counts(SimParams(m, p, eta, derive_seed(seed, 0)), trials, threads)[0])
    orig = empirical(aux_vinf_counts(SimParams(m, p, eta, derive_seed(seed, 1)), trials, threads)[0])
    deficit = float(np.max(np.cumsum(orig[::-1])[::-1] - np.cumsum(star[::-1])[::-1]))
    return CheckResult("star_dominance", deficit, tol, _status(deficit <= tol),
                       f"m={m} p={p} trials={trials}: max_v [P(V >= v) - P(V* >= v)] = {deficit:.4f} "
                       f"(need <= {tol})")


def check_determinism(seed: int) -> CheckResult:
    cfg = SweepConfig([64, 128], [0.5, 2.0], EtaSpec.bernoulli(0.5), seed=seed, trials=5000)
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for threads in (1, 3):
            path = os.path.join(tmp, f"t{threads}.csv")
            write_results(phase_sweep(cfg, threads), path)
            with open(path, "rb") as fh:
                blobs.append(fh.read())
    same = blobs[0] == blobs[1]
    return CheckResult("determinism", float(same), 1.0, _status(same),
                       "sweep CSV with threads=1 and threads=3 is " + ("byte-identical" if same else "DIFFERENT"))


def rounds_benchmark(target_rounds: int, seed: int = 11) -> tuple[int, float]:
    """Play whole auxiliary-chain trials until ``target_rounds`` rounds are done."""
    params = SimParams(10**4, 0.999, EtaSpec.constant(1), seed)
    aux_vinf_counts(SimParams(8, 0.5, EtaSpec.constant(1)), 10, threads=1)  # compile outside the clock
    done, t0, batch = 0, time.perf_counter(), 0
    while done < target_rounds:
        p = SimParams(params.m, params.p, params.eta, derive_seed(seed, batch))
        done += aux_vinf_counts(p, 4, threads=1)[2]
        batch += 1
    return done, time.perf_counter() - t0


def check_performance(target_rounds: int = 10**8, budget_s: float = 60.0) -> CheckResult:
    done, secs = rounds_benchmark(target_rounds)
    return CheckResult("performance", secs, budget_s, _status(secs <= budget_s),
                       f"{done:.3g} aux-chain rounds in {secs:.2f} s single-threaded "
                       f"({done / secs:.3g} rounds/s; need {target_rounds:.0e} in <= {budget_s:g} s)")


def check_wilson_coverage(batches: int = 1000, size: int = 1000, q: float = 0.3, seed: int = 3) -> CheckResult:
    rng = RngStream(seed, 0)
    hits = 0
    for _ in range(batches):
        succ = sum(rng.random() < q for _ in range(size))
        lo, hi = wilson_interval(succ, size)
        hits += lo <= q <= hi
    frac = hits / batches
    return CheckResult("wilson_coverage", frac, 0.93, _status(frac >= 0.93),
                       f"{batches} Bernoulli({q}) batches of {size}: coverage {frac:.3f} (need >= 0.93)")


def check_monotonicity(m, p_grid, trials, seed, threads=None) -> CheckResult:
    rep = monotonicity_check(m, p_grid, EtaSpec.constant(1), trials, seed, threads)
    est = ", ".join(f"p={r.p_n:g}: {r.p_hat:.4f}" for r in rep.rows)
    return CheckResult("monotonicity_in_p", float(len(rep.violations)), 0.0, _status(rep.passed),
                       f"m={m} full coverage {est}; violations {rep.violations or 'none'}")


@dataclass
class Battery:
    quick: bool = False
    seed: int = 20240701
    threads: int | None = None

    def checks(self):
        s, th = self.seed, self.threads
        fin = FiniteNConfig(seed=derive_seed(s, 50))
        if self.quick:
            fin.coupon_n, fin.coupon_trials = 10**4, 200
            return [
                check_oracle_pin,
                lambda: check_equivalence(20000, 0.03, derive_seed(s, 1), ms=(3, 5), threads=th),
                lambda: coupon_band_law_check(fin.coupon_n, 0.2, fin.coupon_trials, derive_seed(s, 2),
                                              threads=th),
                lambda: coupon_partial_check(fin.coupon_n, 0.1, fin.coupon_trials, derive_seed(s, 3), 0.95, th),
                lambda: lifetime_check(10**4, 0.99, 200, derive_seed(s, 4), 0.1, 0.95),
                lambda: early_survival_check(fin, th),
                lambda: cohort_checks(fin, th),
                check_extinction,
                lambda: check_star(8, 0.6, 20000, 0.03, derive_seed(s, 9), th),
                lambda: check_performance(10**7, 6.0),
            ]
        return [
            check_oracle_pin,
            lambda: check_equivalence(10**5, 0.02, derive_seed(s, 1), threads=th),
            lambda: coupon_concentration_check(10**5, 0.2, 1000, derive_seed(s, 2), 0.99, th),
            lambda: coupon_band_law_check(10**5, 0.2, 1000, derive_seed(s, 2), threads=th),
            lambda: coupon_partial_check(10**5, 0.1, 1000, derive_seed(s, 3), 0.99, th),
            lambda: lifetime_check(10**4, 0.99, 1000, derive_seed(s, 4), 0.1, 0.99),
            lambda: early_survival_check(fin, th),
            check_extinction,
            lambda: check_high_proportion(10**5, 0.99, 0.1, 200, derive_seed(s, 7), 0.95, th),
            lambda: check_threshold_separation([2**10, 2**12, 2**14, 2**16], 1000, derive_seed(s, 8), threads=th),
            lambda: check_star(8, 0.6, 10**5, 0.02, derive_seed(s, 9), th),
            lambda: check_determinism(derive_seed(s, 10)),
            check_performance,
            lambda: cohort_checks(fin, th),
            lambda: check_monotonicity(8, [0.3, 0.5, 0.7, 0.9], 10**5, derive_seed(s, 11), th),
            check_wilson_coverage,
        ]

    def run(self, progress=None) -> list[CheckResult]:
        results = []
        for check in self.checks():
            t0 = time.perf_counter()
            out = check()
            secs = time.perf_counter() - t0
            for res in out if isinstance(out, list) else [out]:
                res.detail += f" [{secs:.1f} s]"
                results.append(res)
                if progress:
                    progress(res)
        return results


def report_dict(results, quick: bool, seed: int) -> dict:
    return {
        "quick": quick,
        "seed": seed,
        "passed": all(r.passed for r in results),
        "checks": [{"name": r.name, "statistic": None if math.isnan(r.statistic) else r.statistic,
                    "threshold": r.threshold, "status": r.status, "detail": r.detail} for r in results],
    }
