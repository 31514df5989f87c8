"""Coverage-probability estimation, the (n, alpha) sweep and finite-n checks.

Asymptotic statements are only ever checked as finite-n trends and
separations with declared thresholds. Logarithms are natural throughout:
``p_n = max(0, 1 - alpha / ln n)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numpy as np

from . import __version__
from .aux_chain import cohort_trials, event_successes
from .dists import EtaSpec, sample_eta
from .errors import ConfigError
from .exact_oracle import (
    aggregate_lifetime_check, branching_extinction, coupon_band_probability, coupon_trials, make_z_pmf,
)
from .model import SimParams
from .rng import RngStream, derive_seed

Z95 = NormalDist().inv_cdf(0.975)

CSV_FIELDS = ("n", "alpha", "p_n", "event", "trials", "successes", "p_hat",
              "ci_low", "ci_high", "seed", "wall_time_ms")


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials < 1:
        raise ConfigError("trials", f"must be >= 1, got {trials}")
    n = trials
    phat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom
    return max(0.0, min(center - half, phat)), min(1.0, max(center + half, phat))


def p_of_alpha(n: int, alpha: float) -> float:
    """(1 - alpha / ln n)^+."""
    if n < 2:
        raise ConfigError("n", f"needs n >= 2 for ln n > 0, got {n}")
    return max(0.0, 1.0 - alpha / math.log(n))


@dataclass(frozen=True)
class Event:
    """``full_coverage`` (V_infinity = m) or ``proportion`` (V_infinity >= (1 - eps) m)."""

    kind: str = "full_coverage"
    epsilon: float | None = None

    def __post_init__(self):
        if self.kind == "full_coverage":
            if self.epsilon is not None:
                raise ConfigError("event.epsilon", "only applies to proportion events")
        elif self.kind == "proportion":
            if self.epsilon is None or not 0.0 < self.epsilon < 1.0:
                raise ConfigError("event.epsilon", f"must lie in (0, 1), got {self.epsilon}")
        else:
            raise ConfigError("event.kind", f"expected full_coverage or proportion, got {self.kind!r}")

    @classmethod
    def full(cls) -> "Event":
        return cls("full_coverage")

    @classmethod
    def proportion(cls, epsilon: float) -> "Event":
        return cls("proportion", float(epsilon))

    def threshold(self, m: int) -> int:
        """Smallest visited count satisfying the event."""
        if self.kind == "full_coverage":
            return m
        # round away float noise such as 0.9 * 10 = 9.000000000000002
        return max(1, math.ceil(round((1.0 - self.epsilon) * m, 9)))

    def __str__(self):
        return self.kind if self.kind == "full_coverage" else f"proportion({self.epsilon:g})"

    def to_dict(self) -> dict:
        return {"kind": self.kind} if self.epsilon is None else {"kind": self.kind, "epsilon": self.epsilon}


@dataclass
class ResultRow:
    n: int
    alpha: float | None
    p_n: float
    event: str
    trials: int
    successes: int
    p_hat: float
    ci_low: float
    ci_high: float
    seed: int
    wall_time_ms: float | None = None
    capped: int = 0

    @property
    def valid(self) -> bool:
        return self.capped == 0

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0


def estimate_event(params: SimParams, event: Event, trials: int, seed: int | None = None,
                   threads: int | None = None, alpha: float | None = None) -> ResultRow:
    """Fraction of auxiliary-chain trials satisfying ``event`` with a 95% Wilson interval.

    Trial i uses stream (seed, i); ``seed`` defaults to ``params.seed``.
    """
    if isinstance(trials, bool) or int(trials) != trials or trials < 1:
        raise ConfigError("trials", f"must be an integer >= 1, got {trials}")
    seed = params.seed if seed is None else seed
    t0 = time.perf_counter()
    sp = SimParams(params.m, params.p, params.eta, seed, 0, params.conditional_root)
    succ, n_capped = event_successes(sp, event.threshold(params.m), int(trials), threads)
    wall = (time.perf_counter() - t0) * 1000.0
    lo, hi = wilson_interval(succ, trials)
    return ResultRow(params.m, alpha, params.p, str(event), int(trials), succ, succ / trials,
                     lo, hi, int(seed), wall, n_capped)


def default_trials(n: int) -> int:
    """Trial budget balancing the ~n log n cost of a trial."""
    if n <= 2**8:
        return 10**5
    if n >= 2**14:
        return 10**3
    return 10**4


@dataclass
class SweepConfig:
    n_values: list
    alpha_values: list
    eta: EtaSpec
    seed: int = 0
    trials: int | None = None
    event: Event = field(default_factory=Event.full)
    conditional_root: bool = False

    def __post_init__(self):
        if not self.n_values:
            raise ConfigError("n_values", "must be non-empty")
        if not self.alpha_values:
            raise ConfigError("alpha_values", "must be non-empty")
        for n in self.n_values:
            if isinstance(n, bool) or int(n) != n or n < 2:
                raise ConfigError("n_values", f"entries must be integers >= 2, got {n}")
        for a in self.alpha_values:
            if not a > 0:
                raise ConfigError("alpha_values", f"entries must be > 0, got {a}")
        if self.trials is not None and (int(self.trials) != self.trials or self.trials < 1):
            raise ConfigError("trials", f"must be an integer >= 1, got {self.trials}")

    def trials_for(self, n: int) -> int:
        return self.trials if self.trials is not None else default_trials(n)

    def to_dict(self) -> dict:
        return {"n_values": list(self.n_values), "alpha_values": list(self.alpha_values),
                "eta": self.eta.to_dict(), "seed": self.seed, "trials": self.trials,
                "event": self.event.to_dict(), "conditional_root": self.conditional_root}


def phase_sweep(config: SweepConfig, threads: int | None = None, progress=None) -> list[ResultRow]:
    """One row per (n, alpha), n-major. Point (i, j) uses seed derive_seed(seed, i, j)."""
    rows = []
    for i, n in enumerate(config.n_values):
        for j, alpha in enumerate(config.alpha_values):
            params = SimParams(int(n), p_of_alpha(int(n), alpha), config.eta,
                               conditional_root=config.conditional_root)
            row = estimate_event(params, config.event, config.trials_for(int(n)),
                                 derive_seed(config.seed, i, j), threads, alpha=float(alpha))
            rows.append(row)
            if progress:
                progress(row)
    return rows


@dataclass
class MonotonicityReport:
    rows: list
    violations: list  # (i, i + 1) index pairs breaking the slack rule

    @property
    def passed(self) -> bool:
        return not self.violations


def monotone_within_slack(rows, increasing: bool = True) -> list:
    bad = []
    for i in range(len(rows) - 1):
        a, b = rows[i], rows[i + 1]
        slack = a.half_width + b.half_width
        ok = a.p_hat <= b.p_hat + slack if increasing else a.p_hat + slack >= b.p_hat
        if not ok:
            bad.append((i, i + 1))
    return bad


def monotonicity_check(m: int, p_grid, eta: EtaSpec, trials: int, seed: int,
                       threads: int | None = None) -> MonotonicityReport:
    """Full-coverage estimates along an increasing p grid (same seed at every p)."""
    p_grid = [float(p) for p in p_grid]
    if any(b <= a for a, b in zip(p_grid, p_grid[1:])):
        raise ConfigError("p_grid", "must be strictly increasing")
    rows = [estimate_event(SimParams(m, p, eta), Event.full(), trials, seed, threads) for p in p_grid]
    return MonotonicityReport(rows, monotone_within_slack(rows, increasing=True))


# -- finite-n checks --------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    statistic: float
    threshold: float
    status: str  # "pass", "fail" or "n/a"
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def line(self) -> str:
        return f"[{self.status.upper():4}] {self.name}: {self.detail}"


@dataclass
class FiniteNConfig:
    """Desk-scale defaults for the finite-n checks."""

    seed: int = 20240701
    coupon_n: int = 10**5
    coupon_trials: int = 1000
    coupon_eps_full: float = 0.2
    coupon_eps_partial: float = 0.1
    coupon_min_fraction: float = 0.99
    lifetime_count: int = 10**4
    lifetime_p: float = 0.99
    lifetime_delta: float = 0.1
    lifetime_trials: int = 1000
    lifetime_min_fraction: float = 0.99
    # early survival and cohort checks run on K_{n+1}
    cohort_n: int = 10**4
    cohort_c: float = 0.2
    cohort_eps: float = 0.5
    cohort_p: float | None = None  # None -> 1 - 1 / ln n
    cohort_eta: EtaSpec = field(default_factory=lambda: EtaSpec.constant(1))
    cohort_trials: int = 200
    early_death_max_fraction: float = 0.05
    cohort_dominance_tol: float = 0.05
    cohort_lifetime_delta: float = 0.1
    cohort_lifetime_min_fraction: float = 0.95
    extinction_c: float = 0.5
    extinction_p_grid: tuple = (0.9, 0.99, 0.999)


def coupon_concentration_check(n, eps, trials, seed, min_fraction=0.99, threads=None) -> CheckResult:
    taus = coupon_trials(n, [], trials, seed, threads)[:, 0]
    lo, hi = (1 - eps) * n * math.log(n), (1 + eps) * n * math.log(n)
    frac = float(np.mean((taus >= lo) & (taus <= hi)))
    return CheckResult("coupon_concentration", frac, min_fraction,
                       "pass" if frac >= min_fraction else "fail",
                       f"n={n} eps={eps} trials={trials}: in-band fraction {frac:.4f} (need >= {min_fraction}; "
                       f"predicted {coupon_band_probability(n, eps):.4f})")


def coupon_band_law_check(n, eps, trials, seed, z=4.0, threads=None) -> CheckResult:
    """Simulated in-band fraction against the predicted finite-n probability, within z standard errors."""
    taus = coupon_trials(n, [], trials, seed, threads)[:, 0]
    lo, hi = (1 - eps) * n * math.log(n), (1 + eps) * n * math.log(n)
    frac = float(np.mean((taus >= lo) & (taus <= hi)))
    want = coupon_band_probability(n, eps)
    se = math.sqrt(max(want * (1 - want), 1e-12) / trials)
    dev = abs(frac - want) / se
    return CheckResult("coupon_band_law", dev, z, "pass" if dev <= z else "fail",
                       f"n={n} eps={eps} trials={trials}: in-band fraction {frac:.4f} vs predicted {want:.4f} "
                       f"({dev:.2f} standard errors; need <= {z:g})")


def coupon_partial_check(n, eps, trials, seed, min_fraction=0.99, threads=None) -> CheckResult:
    i = math.ceil(round((1 - eps) * n, 9))
    tau_i = coupon_trials(n, [i], trials, seed, threads)[:, 1]
    bound = 2 * (1 - eps) / eps * n
    frac = float(np.mean(tau_i <= bound))
    return CheckResult("coupon_partial", frac, min_fraction,
                       "pass" if frac >= min_fraction else "fail",
                       f"n={n} eps={eps} trials={trials}: fraction tau_{i} <= {bound:.6g} is {frac:.4f}")


def lifetime_check(count, p, trials, seed, delta=0.1, min_fraction=0.99) -> CheckResult:
    rep = aggregate_lifetime_check(count, p, trials, RngStream(seed, 0), delta)
    return CheckResult("aggregate_lifetime", rep.inside_fraction, min_fraction,
                       "pass" if rep.inside_fraction >= min_fraction else "fail",
                       f"count={count} p={p}: fraction within (1 +/- {delta}) * {rep.expected:.6g} "
                       f"is {rep.inside_fraction:.4f}; mean z-score {rep.z_score:.2f}")


def cohort_setup(n: int, c: float, eps: float, p: float | None):
    """(m, p, k1, target) on K_{n+1}: k1 = floor(c n) - 1, target = ceil((1 - eps) n) + 1."""
    m = n + 1
    p = 1.0 - 1.0 / math.log(n) if p is None else p
    k1 = math.floor(c * n) - 1
    target = math.ceil(round((1 - eps) * n, 9)) + 1
    return m, p, k1, target


def early_survival_check(cfg: FiniteNConfig, threads=None, traces=None) -> CheckResult:
    m, p, k1, target = cohort_setup(cfg.cohort_n, cfg.cohort_c, cfg.cohort_eps, cfg.cohort_p)
    if traces is None:
        traces = cohort_trials(SimParams(m, p, cfg.cohort_eta, cfg.seed), k1, target, cfg.cohort_trials, threads)
    frac = float(np.mean([t.died_before_k1 for t in traces]))
    return CheckResult("early_survival", frac, cfg.early_death_max_fraction,
                       "pass" if frac <= cfg.early_death_max_fraction else "fail",
                       f"m={m} p={p:.6f} k1={k1} trials={len(traces)}: fraction R < k1 is {frac:.4f} "
                       f"(need <= {cfg.early_death_max_fraction})")


def _window_sums(eta: EtaSpec, width: int, trials: int, seed: int) -> np.ndarray:
    rng = RngStream(seed, 1)
    if width <= 0:
        return np.zeros(trials, dtype=np.int64)
    return sample_eta(eta, rng, size=trials * width).reshape(trials, width).sum(axis=1)


def cohort_checks(cfg: FiniteNConfig, threads=None, traces=None) -> list[CheckResult]:
    """Lifetime pool of the k1 cohort and actives at k2 versus eta over the window.

    Trials where the process died before k1 are excluded; if every trial did,
    both checks are reported as not applicable.
    """
    m, p, k1, target = cohort_setup(cfg.cohort_n, cfg.cohort_c, cfg.cohort_eps, cfg.cohort_p)
    if traces is None:
        traces = cohort_trials(SimParams(m, p, cfg.cohort_eta, cfg.seed), k1, target, cfg.cohort_trials, threads)
    alive = [t for t in traces if not t.died_before_k1]
    if not alive or p <= 0.0:
        na = f"process died before k1 in all {len(traces)} trials"
        return [CheckResult("cohort_lifetime", float("nan"), cfg.cohort_lifetime_min_fraction, "n/a", na),
                CheckResult("cohort_window", float("nan"), cfg.cohort_dominance_tol, "n/a", na)]
    q = p / (1.0 - p)
    d = cfg.cohort_lifetime_delta
    inside = float(np.mean([abs(t.t_k1 - t.a_k1 * q) <= d * t.a_k1 * q for t in alive]))
    life = CheckResult("cohort_lifetime", inside, cfg.cohort_lifetime_min_fraction,
                       "pass" if inside >= cfg.cohort_lifetime_min_fraction else "fail",
                       f"fraction of T(k1) within (1 +/- {d}) A_k1 p/(1-p): {inside:.4f}")
    # A_k2 (0 when k2 was never reached) against sum of eta over the window k1+1..ceil((1-eps)n)
    width = (target - 1) - k1
    a_k2 = np.array([t.a_k2 if t.k2 is not None else 0 for t in alive])
    window = _window_sums(cfg.cohort_eta, width, len(alive), cfg.seed)
    grid = np.union1d(a_k2, window)
    gap = max(float(np.mean(window >= x) - np.mean(a_k2 >= x)) for x in grid)
    reached = float(np.mean([t.k2 is not None for t in alive]))
    win = CheckResult("cohort_window", gap, cfg.cohort_dominance_tol,
                      "pass" if gap <= cfg.cohort_dominance_tol else "fail",
                      f"k1={k1} target={target}: P(k2 < inf) = {reached:.4f}; "
                      f"max_x [P(S >= x) - P(A_k2 >= x)] = {gap:.4f} (need <= {cfg.cohort_dominance_tol})")
    return [life, win]


def extinction_trend_check(cfg: FiniteNConfig) -> CheckResult:
    qs = [branching_extinction(make_z_pmf(p, cfg.extinction_c, cfg.cohort_eta)) for p in cfg.extinction_p_grid]
    ok = all(b < a for a, b in zip(qs, qs[1:]))
    return CheckResult("extinction_trend", qs[-1], qs[0], "pass" if ok else "fail",
                       "extinction probabilities " + ", ".join(
                           f"p={p}: {q:.3g}" for p, q in zip(cfg.extinction_p_grid, qs)) + " (must decrease)")


def finite_n_suite(cfg: FiniteNConfig | None = None, threads: int | None = None) -> list[CheckResult]:
    cfg = cfg or FiniteNConfig()
    out = [
        coupon_concentration_check(cfg.coupon_n, cfg.coupon_eps_full, cfg.coupon_trials,
                                   derive_seed(cfg.seed, 1), cfg.coupon_min_fraction, threads),
        coupon_band_law_check(cfg.coupon_n, cfg.coupon_eps_full, cfg.coupon_trials, derive_seed(cfg.seed, 1),
                              threads=threads),
        coupon_partial_check(cfg.coupon_n, cfg.coupon_eps_partial, cfg.coupon_trials,
                             derive_seed(cfg.seed, 2), cfg.coupon_min_fraction, threads),
        lifetime_check(cfg.lifetime_count, cfg.lifetime_p, cfg.lifetime_trials, derive_seed(cfg.seed, 3),
                       cfg.lifetime_delta, cfg.lifetime_min_fraction),
        extinction_trend_check(cfg),
    ]
    m, p, k1, target = cohort_setup(cfg.cohort_n, cfg.cohort_c, cfg.cohort_eps, cfg.cohort_p)
    traces = cohort_trials(SimParams(m, p, cfg.cohort_eta, derive_seed(cfg.seed, 4)), k1, target,
                           cfg.cohort_trials, threads)
    early = early_survival_check(cfg, threads, traces)
    if all(t.died_before_k1 for t in traces):
        early.status = "n/a"
    out.append(early)
    out.extend(cohort_checks(cfg, threads, traces))
    return out


# -- persistence -----------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".9g")
    return str(x)


def row_record(row: ResultRow, include_timing: bool = True) -> dict:
    d = {k: getattr(row, k) for k in CSV_FIELDS}
    if not include_timing:
        d["wall_time_ms"] = None
    return d


def write_results(rows, path, fmt: str = "csv", include_timing: bool = False):
    """Write rows as CSV (fixed header, reals at 9 significant digits) or JSON.

    Wall times are left empty unless ``include_timing``, which keeps the file
    byte-identical across reruns; the sweep sidecar always records them.
    """
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in rows:
            rec = row_record(r, include_timing)
            w.writerow([_fmt(rec[k]) for k in CSV_FIELDS])
        text = buf.getvalue()
    elif fmt == "json":
        recs = [row_record(r, include_timing) for r in rows]
        text = json.dumps(recs, indent=2) + "\n"
    else:
        raise ConfigError("format", f"expected csv or json, got {fmt!r}")
    try:
        if path == "-":
            sys.stdout.write(text)
        else:
            with open(path, "w", newline="") as fh:
                fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc


def read_results(path, fmt: str = "csv") -> list[dict]:
    with open(path) as fh:
        if fmt == "json":
            return json.load(fh)
        return list(csv.DictReader(fh))


def write_metadata(path, config: dict, rows, wall_time_s: float, threads: int):
    meta = {
        "code_version": __version__,
        "config": config,
        "threads": threads,
        "wall_time_s": wall_time_s,
        "rows": [{"n": r.n, "alpha": r.alpha, "seed": r.seed, "wall_time_ms": r.wall_time_ms,
                  "capped": r.capped} for r in rows],
        "created_unix": time.time(),
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def rows_to_dicts(rows) -> list[dict]:
    return [asdict(r) for r in rows]
