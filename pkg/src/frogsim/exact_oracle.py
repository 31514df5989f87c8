"""Exact and semi-analytic ground truths.

- :func:`exact_vinf_distribution`: law of V_infinity on small instances by an
  absorption dynamic program over the collapsed (v, a) chain.
- coupon collector moments and a direct draw-by-draw simulator.
- extinction probability of a Galton-Watson process.
- the star configuration (every particle starts active at the root), whose
  coverage stochastically dominates the original one.
- sums of independent geometric lifetimes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .aux_chain import _run_aux, x_pmf
from .dists import (
    CONSTANT, EtaSpec, check_conditional_root, draw_eta, draw_initial_actives, draw_lifetime,
)
from .errors import ConfigError, NumericalError, SizeError
from .model import SimParams, TrialOutcome, round_cap
from .rng import RngStream, master_u64, seed_state, below
from .trials import concat_chunked, run_chunked

DP_MAX_M = 16
DP_MAX_K = 4
EXTINCTION_TOL = 1e-12
EXTINCTION_MAX_ITER = 10**6


@dataclass
class VinfDistribution:
    m: int
    masses: np.ndarray  # masses[i] = P(V_infinity = i + 1)

    def prob(self, v: int) -> float:
        return float(self.masses[v - 1]) if 1 <= v <= self.m else 0.0

    def survival(self) -> np.ndarray:
        """P(V_infinity >= v) for v = 1..m."""
        return np.cumsum(self.masses[::-1])[::-1]

    def to_record(self, p: float, eta: EtaSpec) -> dict:
        return {"m": self.m, "p": p, "eta": eta.to_dict(), "masses": [float(x) for x in self.masses]}


def _root_law(eta: EtaSpec, conditional_root: bool, a0: int | None) -> dict[int, float]:
    if a0 is not None:
        if a0 < 1:
            raise ConfigError("a0", f"must be >= 1, got {a0}")
        return {a0: 1.0}
    K = eta.support_max
    if conditional_root:
        check_conditional_root(eta)
        tail = 1.0 - eta.pmf(0)
        return {j: eta.pmf(j) / tail for j in range(1, K + 1) if eta.pmf(j) > 0}
    return {1 + j: eta.pmf(j) for j in range(K + 1) if eta.pmf(j) > 0}


def exact_vinf_distribution(m: int, p: float, eta: EtaSpec, conditional_root: bool = False,
                            a0: int | None = None) -> VinfDistribution:
    """Absorption probabilities of the (v, a) chain.

    From (v, a > 0): to (v, a - 1) w.p. 1 - p; stay w.p. p (v - 1)/(m - 1);
    to (v + 1, a + j) w.p. p (m - v)/(m - 1) P(eta = j). The self-loop changes
    nothing, so it is removed by renormalizing the other masses. States are
    solved for decreasing v, then increasing a, in a single pass.

    ``a0`` fixes the initial number of active particles instead of mixing
    over the law of 1 + eta_o.
    """
    if m < 1:
        raise ConfigError("m", f"must be >= 1, got {m}")
    if m > DP_MAX_M:
        raise SizeError("m", f"exact distribution supports m <= {DP_MAX_M}, got {m}")
    if not 0.0 <= p <= 1.0:
        raise ConfigError("p", f"must lie in [0, 1], got {p}")
    K = eta.support_max
    if K is None:
        raise SizeError("eta", f"{eta} has unbounded support; use EtaSpec.truncated(K) for a table law")
    if K > DP_MAX_K:
        raise SizeError("eta", f"exact distribution supports eta <= {DP_MAX_K}, got support up to {K}")
    root = _root_law(eta, conditional_root, a0)
    if p >= 1.0 or m == 1:
        masses = np.zeros(m)
        masses[m - 1 if p >= 1.0 else 0] = 1.0
        return VinfDistribution(m, masses)

    a_top = max(root) + K * (m - 1)
    # h[v, a, :] is the law of the final visited count from state (v, a)
    h = np.zeros((m + 2, a_top + 1, m))
    eta_mass = [eta.pmf(j) for j in range(K + 1)]
    for v in range(m, 0, -1):
        xp = x_pmf(m, p, v, eta)
        stay = 1.0 - xp.revisit_mass
        h[v, 0, v - 1] = 1.0
        for a in range(1, a_top + 1):
            acc = xp.death_mass * h[v, a - 1]
            if v < m:
                for j, w in enumerate(eta_mass):
                    if w > 0.0 and a + j <= a_top:
                        acc = acc + xp.new_mass * w * h[v + 1, a + j]
            h[v, a] = acc / stay
    masses = np.zeros(m)
    for start, w in root.items():
        masses += w * h[1, start]
    return VinfDistribution(m, masses)


# -- coupon collector ------------------------------------------------------------


def coupon_tau_moments(n: int) -> tuple[float, float]:
    """Mean and variance of the full-collection time for n coupons.

    tau is a sum of independent Geo_1((n - j)/n), j = 0..n-1.
    """
    if n < 1:
        raise ConfigError("n", f"must be >= 1, got {n}")
    mean = math.fsum(n / (n - j) for j in range(n))
    var = math.fsum((1.0 - q) / (q * q) for q in ((n - j) / n for j in range(n)))
    return mean, var



def coupon_cdf(n: int, t: float) -> float:
    """P(tau <= t) under the independent-coupon approximation (1 - (1 - 1/n)**t)**n.

    The events "coupon j has been drawn" are negatively associated, so this
    is an upper bound; the gap shrinks like log(n) / n.
    """
    if t < n:
        return 0.0
    miss = math.exp(math.floor(t) * math.log1p(-1.0 / n))
    return math.exp(n * math.log1p(-miss)) if miss < 1.0 else 0.0


def coupon_band_probability(n: int, eps: float) -> float:
    """Approximate P((1 - eps) n ln n <= tau <= (1 + eps) n ln n)."""
    base = n * math.log(n)
    lo, hi = (1 - eps) * base, (1 + eps) * base
    return coupon_cdf(n, hi) - coupon_cdf(n, math.ceil(lo) - 1)

@nb.njit(cache=True, nogil=True)
def _coupon_one(n, targets, s, seen, out):
    for i in range(n):
        seen[i] = False
    got = 0
    draws = 0
    t = 0
    n_targets = targets.shape[0]
    while got < n:
        draws += 1
        c = below(s, n)
        if not seen[c]:
            seen[c] = True
            got += 1
            while t < n_targets and targets[t] == got:
                out[t] = draws
                t += 1
    return draws


@nb.njit(cache=True, nogil=True)
def _coupon_rows(n, targets, master, lo, hi):
    out = np.empty((hi - lo, targets.shape[0] + 1), dtype=np.int64)
    s = np.empty(4, dtype=np.uint64)
    seen = np.zeros(n, dtype=np.bool_)
    for i in range(lo, hi):
        seed_state(master, np.uint64(i), s)
        out[i - lo, 0] = _coupon_one(n, targets, s, seen, out[i - lo, 1:])
    return out


def _coupon_targets(n, targets):
    targets = sorted(int(i) for i in targets)
    for i in targets:
        if not 1 <= i <= n:
            raise ConfigError("targets", f"collection sizes must lie in [1, {n}], got {i}")
    return np.asarray(targets, dtype=np.int64)


def simulate_coupon(n: int, targets, rng: RngStream) -> tuple[int, dict[int, int]]:
    """Draw uniform coupons until all n are seen; returns (tau, {i: tau_i})."""
    if n < 1:
        raise ConfigError("n", f"must be >= 1, got {n}")
    tg = _coupon_targets(n, targets)
    out = np.empty(len(tg), dtype=np.int64)
    tau = _coupon_one(n, tg, rng.state, np.zeros(n, dtype=np.bool_), out)
    return int(tau), {int(i): int(t) for i, t in zip(tg, out)}


def coupon_trials(n: int, targets, trials: int, seed: int, threads: int | None = None) -> np.ndarray:
    """Array of shape (trials, 1 + len(targets)): tau then tau_i for sorted targets."""
    tg = _coupon_targets(n, targets)
    master = master_u64(seed)
    rows = concat_chunked(lambda lo, hi: _coupon_rows(n, tg, master, lo, hi), trials, threads)
    return rows.reshape(trials, len(tg) + 1)


# -- branching processes ---------------------------------------------------------


@dataclass(frozen=True)
class OffspringPmf:
    masses: tuple

    def __post_init__(self):
        ms = tuple(float(x) for x in self.masses)
        if not ms or any(not x >= 0 for x in ms):
            raise ConfigError("pmf", "masses must be non-empty and >= 0")
        if abs(math.fsum(ms) - 1.0) > 1e-12:
            raise ConfigError("pmf", f"masses sum to {math.fsum(ms)!r}, not 1")
        object.__setattr__(self, "masses", ms)

    def pgf(self, s: float) -> float:
        acc = 0.0
        for q in reversed(self.masses):
            acc = acc * s + q
        return acc

    def mean(self) -> float:
        return math.fsum(j * q for j, q in enumerate(self.masses))


def branching_extinction(offspring: OffspringPmf) -> float:
    """Smallest fixed point of the generating function on [0, 1].

    Mean <= 1 (and not the degenerate P(Z = 1) = 1 case) means certain
    extinction. Otherwise s <- f(s) is iterated from 0; the iterates increase
    to the extinction probability and contract geometrically near it, so the
    loop stops once the a-posteriori error bound step / (1 - ratio) drops
    below 1e-12.
    """
    qs = offspring.masses
    if len(qs) > 1 and qs[1] == 1.0:
        return 0.0
    if offspring.mean() <= 1.0:
        return 1.0
    s = 0.0
    prev_step = None
    for _ in range(EXTINCTION_MAX_ITER):
        nxt = offspring.pgf(s)
        step = nxt - s
        s = nxt
        if step <= 0.0:
            return s
        if prev_step is not None:
            ratio = step / prev_step
            if ratio < 1.0 and step / (1.0 - ratio) < EXTINCTION_TOL:
                return s
        prev_step = step
    raise NumericalError(f"fixed-point iteration did not converge in {EXTINCTION_MAX_ITER} steps")


def quadratic_extinction(q0: float, q1: float, q2: float) -> float:
    """Closed form for offspring supported on {0, 1, 2}: smaller root of
    q2 s^2 + (q1 - 1) s + q0 = 0 in [0, 1]."""
    if q2 == 0.0:
        return 0.0 if q1 == 1.0 else 1.0
    b = 1.0 - q1
    disc = max(b * b - 4.0 * q2 * q0, 0.0)
    # root via the numerically stable product form
    big = (b + math.sqrt(disc)) / (2.0 * q2)
    small = q0 / (q2 * big) if big > 0 else 0.0
    return min(1.0, small)


def make_z_pmf(p: float, c: float, eta: EtaSpec) -> OffspringPmf:
    """Three-point comparison law on {0, 1, 2}:
    (1 - p, p c + p (1 - c) P(eta = 0), p (1 - c) P(eta >= 1))."""
    if not 0.0 < c < 1.0:
        raise ConfigError("c", f"must lie in (0, 1), got {c}")
    if not 0.0 <= p <= 1.0:
        raise ConfigError("p", f"must lie in [0, 1], got {p}")
    p0 = eta.p_zero
    return OffspringPmf((1.0 - p, p * c + p * (1.0 - c) * p0, p * (1.0 - c) * (1.0 - p0)))


# -- star configuration ----------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _star_a0(m, kind, prm, cond_root, s):
    a0 = draw_initial_actives(kind, prm, cond_root, s)
    for _ in range(m - 1):
        a0 += draw_eta(kind, prm, s)
    return a0


@nb.njit(cache=True, nogil=True)
def _star_counts(m, p, kind, prm, cond_root, master, lo, hi, cap):
    counts = np.zeros(m + 1, dtype=np.int64)
    n_capped = 0
    s = np.empty(4, dtype=np.uint64)
    zero = np.zeros(1, dtype=np.float64)
    for i in range(lo, hi):
        seed_state(master, np.uint64(i), s)
        a0 = _star_a0(m, kind, prm, cond_root, s)
        v, _, _, capped = _run_aux(m, p, CONSTANT, zero, a0, s, cap, m + 1)
        if capped:
            n_capped += 1
        else:
            counts[v] += 1
    return counts, n_capped


def simulate_star(params: SimParams, rng: RngStream | None = None) -> TrialOutcome:
    """Auxiliary chain with all 1 + sum_v eta_v particles active at the root."""
    if params.conditional_root:
        check_conditional_root(params.eta)
    if params.p >= 1.0:
        return TrialOutcome(params.m, 0, 0, by_convention=True)
    rng = rng or RngStream(params.seed, params.stream)
    kind, prm = params.eta.encode()
    a0 = _star_a0(params.m, kind, prm, params.conditional_root, rng.state)
    v, moves, k, capped = _run_aux(params.m, params.p, CONSTANT, np.zeros(1), a0, rng.state,
                                   round_cap(params.m, params.p), params.m + 1)
    return TrialOutcome(int(v), int(moves), int(k), bool(capped))


def star_vinf_counts(params: SimParams, trials: int, threads: int | None = None):
    if params.conditional_root:
        check_conditional_root(params.eta)
    m = params.m
    if params.p >= 1.0:
        counts = np.zeros(m + 1, dtype=np.int64)
        counts[m] = trials
        return counts, 0
    kind, prm = params.eta.encode()
    master = master_u64(params.seed)
    cap = round_cap(m, params.p)
    counts, n_capped = run_chunked(
        lambda lo, hi: _star_counts(m, params.p, kind, prm, params.conditional_root, master, lo, hi, cap),
        trials, threads)
    return counts, int(n_capped)


# -- aggregate lifetimes ---------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _lifetime_sums(count, p, trials, s):
    out = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        acc = 0
        for _ in range(count):
            acc += draw_lifetime(p, s)
        out[t] = acc
    return out


@dataclass
class LifetimeReport:
    count: int
    p: float
    trials: int
    delta: float
    expected: float
    mean: float
    std_error: float
    inside_fraction: float
    sums: np.ndarray

    @property
    def z_score(self) -> float:
        return (self.mean - self.expected) / self.std_error if self.std_error > 0 else 0.0


def aggregate_lifetime_check(count: int, p: float, trials: int, rng: RngStream,
                             delta: float = 0.1) -> LifetimeReport:
    """Sums of ``count`` independent Geo_0(1 - p) lifetimes against count p / (1 - p).

    ``std_error`` uses the exact variance count p / (1 - p)^2 of the sum.
    """
    if count < 1:
        raise ConfigError("count", f"must be >= 1, got {count}")
    if not 0.0 <= p < 1.0:
        raise ConfigError("p", f"must satisfy 0 <= p < 1, got {p}")
    if trials < 1:
        raise ConfigError("trials", f"must be >= 1, got {trials}")
    sums = _lifetime_sums(int(count), float(p), int(trials), rng.state)
    expected = count * p / (1.0 - p)
    se = math.sqrt(count * p / (1.0 - p) ** 2 / trials)
    lo, hi = (1 - delta) * expected, (1 + delta) * expected
    inside = float(np.mean((sums >= lo) & (sums <= hi)))
    return LifetimeReport(count, p, trials, delta, expected, float(sums.mean()), se, inside, sums)


def write_oracle_json(records: list[dict], path: str):
    with open(path, "w") as fh:
        json.dump(records, fh, indent=2)
        fh.write("\n")
