"""The one-particle-per-round auxiliary process, collapsed to a Markov chain.

On K_m a particle standing on a visited vertex jumps to an unvisited one with
probability (m - v) / (m - 1), whatever vertex it stands on, so the process is
fully described by the round k, the visited count v = V'_k and the running
count of potentially active particles a' = A'_k. Each round one particle is
chosen and produces X_k descendants:

- X = 0 if it dies (probability 1 - p),
- X = 1 if it survives and lands on a visited vertex, or on a new vertex
  holding no sleepers,
- X = 1 + eta if it lands on a new vertex holding eta sleepers,

and ``a' <- a' + X - 1``. The original process ends at R, the first round
with a' = 0, and V_infinity = V'_R.

Sampling is structural (survive, then new-or-revisit, then eta), so
unbounded eta laws need no truncation. :func:`x_pmf` exposes the explicit
masses for tests and for the exact oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .dists import EtaSpec, check_conditional_root, draw_eta, draw_initial_actives, draw_lifetime
from .errors import ConfigError
from .model import AuxTrace, SimParams, TrialOutcome, round_cap
from .rng import RngStream, below, master_u64, seed_state, uniform
from .trials import concat_chunked, run_chunked

NEVER = -1  # sentinel for "did not happen" in kernel returns (R, k2)


@dataclass(frozen=True)
class XPmf:
    """Law of the descendant count X given the visited count v.

    ``death_mass + revisit_mass + new_mass == 1``; the new-vertex mass is
    split over eta: P(X = 1 + j, new vertex) = new_mass * P(eta = j).
    """

    m: int
    p: float
    v: int
    eta: EtaSpec
    death_mass: float
    revisit_mass: float
    new_mass: float

    def prob(self, x: int) -> float:
        if x < 0:
            return 0.0
        if x == 0:
            return self.death_mass
        if x == 1:
            return self.revisit_mass + self.new_mass * self.eta.pmf(0)
        return self.new_mass * self.eta.pmf(x - 1)

    def masses(self, upto: int) -> np.ndarray:
        return np.array([self.prob(x) for x in range(upto + 1)])


def x_pmf(m: int, p: float, v: int, eta: EtaSpec) -> XPmf:
    if not 1 <= v <= m:
        raise ConfigError("v", f"visited count must satisfy 1 <= v <= m = {m}, got {v}")
    if not 0.0 <= p <= 1.0:
        raise ConfigError("p", f"must lie in [0, 1], got {p}")
    if m == 1:
        return XPmf(m, p, v, eta, 1.0 - p, p, 0.0)
    return XPmf(m, p, v, eta, 1.0 - p, p * (v - 1) / (m - 1), p * (m - v) / (m - 1))


@dataclass(frozen=True)
class AuxState:
    k: int
    v: int
    a_prime: int
    absorbed: bool = False

    @property
    def active(self) -> int:
        """A_k = A'_k while the original process is alive, 0 afterwards."""
        return 0 if self.absorbed else self.a_prime

    @classmethod
    def initial(cls, a0: int) -> "AuxState":
        return cls(0, 1, a0, a0 == 0)


def step_aux(state: AuxState, m: int, p: float, eta: EtaSpec, rng: RngStream) -> AuxState:
    """Play one round from a non-absorbed state."""
    if state.absorbed:
        raise ConfigError("state", "cannot step an absorbed state without injection")
    x, new = _round(m, p, state.v, *eta.encode(), rng.state)
    a = state.a_prime + x - 1
    return AuxState(state.k + 1, state.v + int(new), a, a == 0)


@nb.njit(cache=True, nogil=True)
def _round(m, p, v, kind, prm, s):
    """Descendant count X and whether a new vertex was found."""
    if uniform(s) >= p:
        return 0, False
    if v < m and below(s, m - 1) < m - v:
        return 1 + draw_eta(kind, prm, s), True
    return 1, False


@nb.njit(cache=True, nogil=True)
def _run_aux(m, p, kind, prm, a0, s, cap, stop_v):
    """Hot loop. Runs until absorption, until v >= stop_v, or until the cap.

    Returns (v, moves, rounds, capped).
    """
    if m == 1:
        return 1, 0, 0, False
    v = 1
    a = a0
    k = 0
    moves = 0
    unseen = m - 1
    while a > 0 and v < stop_v:
        if k >= cap:
            return v, moves, k, True
        k += 1
        if uniform(s) < p:
            moves += 1
            if v < m and below(s, unseen) < m - v:
                v += 1
                a += draw_eta(kind, prm, s)
        else:
            a -= 1
    return v, moves, k, False


@nb.njit(cache=True, nogil=True)
def _grow(arr, n):
    out = np.empty(max(2 * arr.shape[0], n), dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@nb.njit(cache=True, nogil=True)
def _run_aux_trace(m, p, kind, prm, a0, s, cap):
    """Same draws as :func:`_run_aux`, recording (X_k, A'_k, V'_k) each round."""
    xs = np.empty(64, dtype=np.int64)
    ap = np.empty(64, dtype=np.int64)
    vp = np.empty(64, dtype=np.int64)
    xs[0] = -1
    ap[0] = a0
    vp[0] = 1
    if m == 1:
        return 1, 0, 0, False, xs[:1], ap[:1], vp[:1]
    v = 1
    a = a0
    k = 0
    moves = 0
    capped = False
    while a > 0:
        if k >= cap:
            capped = True
            break
        k += 1
        if k >= xs.shape[0]:
            xs = _grow(xs, k + 1)
            ap = _grow(ap, k + 1)
            vp = _grow(vp, k + 1)
        x = 0
        if uniform(s) < p:
            moves += 1
            x = 1
            if v < m and below(s, m - 1) < m - v:
                v += 1
                x += draw_eta(kind, prm, s)
        a += x - 1
        xs[k] = x
        ap[k] = a
        vp[k] = v
    return v, moves, k, capped, xs[: k + 1], ap[: k + 1], vp[: k + 1]


@nb.njit(cache=True, nogil=True)
def _run_injected(m, p, kind, prm, a0, s, k_max):
    """Auxiliary process with extra particles injected at the root after R.

    Returns (X, running sum A'_k, actual actives, V'_k, R) over k = 0..k_max.
    """
    xs = np.full(k_max + 1, -1, dtype=np.int64)
    running = np.empty(k_max + 1, dtype=np.int64)
    actual = np.empty(k_max + 1, dtype=np.int64)
    vp = np.empty(k_max + 1, dtype=np.int64)
    running[0] = a0
    actual[0] = a0
    vp[0] = 1
    r = NEVER
    a_run = a0
    a_act = a0
    v = 1
    if a0 == 0:
        r = 0
        a_act = 1
        actual[0] = 1
    for k in range(1, k_max + 1):
        x, new = _round(m, p, v, kind, prm, s)
        if new:
            v += 1
        a_run += x - 1
        a_act += x - 1
        if r == NEVER and a_run == 0:
            r = k
        if a_act == 0:
            a_act = 1  # the only living particle died: inject an extra at the root
        xs[k] = x
        running[k] = a_run
        actual[k] = a_act
        vp[k] = v
    return xs, running, actual, vp, r


@nb.njit(cache=True, nogil=True)
def _run_cohort(m, p, kind, prm, a0, s, k1, target, cap, run_to_end):
    """Auxiliary process with cohort-priority selection from round k1 on.

    Rounds 1..k1 use lazy per-round survival checks. At k1 every living
    particle receives its whole residual lifetime (memorylessness) and the
    cohort moves first, one particle at a time until it dies; particles woken
    after k1 wait for the cohort to be exhausted.

    Returns (A_k1, T_k1, k2, A_k2, R, v, moves, rounds, capped).
    """
    v = 1
    a = a0
    k = 0
    moves = 0
    k2 = NEVER
    a_k2 = 0
    if v >= target:
        k2 = 0
        a_k2 = a
    # phase 1: plain chain up to round k1
    while a > 0 and k < k1:
        if k >= cap:
            return 0, 0, k2, a_k2, NEVER, v, moves, k, True
        k += 1
        if uniform(s) < p:
            moves += 1
            if v < m and below(s, m - 1) < m - v:
                v += 1
                a += draw_eta(kind, prm, s)
        else:
            a -= 1
        if k2 == NEVER and v >= target:
            k2 = k
            a_k2 = a
    if a == 0:
        return 0, 0, k2, a_k2, k, v, moves, k, False
    a_k1 = a
    life = np.empty(a_k1, dtype=np.int64)
    t_k1 = 0
    for i in range(a_k1):
        life[i] = draw_lifetime(p, s)
        t_k1 += life[i]
    if k2 != NEVER and not run_to_end:
        return a_k1, t_k1, k2, a_k2, NEVER, v, moves, k, False
    # phase 2: the cohort, one particle at a time
    for i in range(a_k1):
        for j in range(life[i] + 1):
            if k >= cap:
                return a_k1, t_k1, k2, a_k2, NEVER, v, moves, k, True
            k += 1
            if j == life[i]:
                a -= 1
            else:
                moves += 1
                if v < m and below(s, m - 1) < m - v:
                    v += 1
                    a += draw_eta(kind, prm, s)
            if k2 == NEVER and v >= target:
                k2 = k
                a_k2 = a
                if not run_to_end:
                    return a_k1, t_k1, k2, a_k2, NEVER, v, moves, k, False
    # phase 3: particles woken after k1 (fresh, so lazy checks are exact)
    while a > 0:
        if k >= cap:
            return a_k1, t_k1, k2, a_k2, NEVER, v, moves, k, True
        k += 1
        if uniform(s) < p:
            moves += 1
            if v < m and below(s, m - 1) < m - v:
                v += 1
                a += draw_eta(kind, prm, s)
        else:
            a -= 1
        if k2 == NEVER and v >= target:
            k2 = k
            a_k2 = a
            if not run_to_end:
                return a_k1, t_k1, k2, a_k2, NEVER, v, moves, k, False
    return a_k1, t_k1, k2, a_k2, k, v, moves, k, False


# -- multi-trial kernels ---------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _aux_counts(m, p, kind, prm, cond_root, master, lo, hi, cap):
    counts = np.zeros(m + 1, dtype=np.int64)
    n_capped = 0
    rounds = 0
    s = np.empty(4, dtype=np.uint64)
    for i in range(lo, hi):
        seed_state(master, np.uint64(i), s)
        a0 = draw_initial_actives(kind, prm, cond_root, s)
        v, _, k, capped = _run_aux(m, p, kind, prm, a0, s, cap, m + 1)
        rounds += k
        if capped:
            n_capped += 1
        else:
            counts[v] += 1
    return counts, n_capped, rounds


@nb.njit(cache=True, nogil=True)
def _cohort_counts(m, p, kind, prm, cond_root, master, lo, hi, cap, k1):
    counts = np.zeros(m + 1, dtype=np.int64)
    n_capped = 0
    s = np.empty(4, dtype=np.uint64)
    for i in range(lo, hi):
        seed_state(master, np.uint64(i), s)
        a0 = draw_initial_actives(kind, prm, cond_root, s)
        res = _run_cohort(m, p, kind, prm, a0, s, k1, m + 1, cap, True)
        if res[8]:
            n_capped += 1
        else:
            counts[res[5]] += 1
    return counts, n_capped


@nb.njit(cache=True, nogil=True)
def _cohort_rows(m, p, kind, prm, cond_root, master, lo, hi, cap, k1, target):
    out = np.empty((hi - lo, 9), dtype=np.int64)
    s = np.empty(4, dtype=np.uint64)
    for i in range(lo, hi):
        seed_state(master, np.uint64(i), s)
        a0 = draw_initial_actives(kind, prm, cond_root, s)
        a_k1, t_k1, k2, a_k2, r, v, moves, k, capped = _run_cohort(m, p, kind, prm, a0, s, k1, target,
                                                                    cap, False)
        out[i - lo, 0] = a_k1
        out[i - lo, 1] = t_k1
        out[i - lo, 2] = k2
        out[i - lo, 3] = a_k2
        out[i - lo, 4] = r
        out[i - lo, 5] = v
        out[i - lo, 6] = moves
        out[i - lo, 7] = k
        out[i - lo, 8] = 1 if capped else 0
    return out


@nb.njit(cache=True, nogil=True)
def _event_counts(m, p, kind, prm, cond_root, master, lo, hi, cap, threshold):
    """Trials in [lo, hi) whose visited count reaches ``threshold``.

    A trial stops as soon as the event is decided.
    """
    successes = 0
    n_capped = 0
    s = np.empty(4, dtype=np.uint64)
    for i in range(lo, hi):
        seed_state(master, np.uint64(i), s)
        a0 = draw_initial_actives(kind, prm, cond_root, s)
        v, _, _, capped = _run_aux(m, p, kind, prm, a0, s, cap, threshold)
        if capped:
            n_capped += 1
        elif v >= threshold:
            successes += 1
    return successes, n_capped


# -- Python API ------------------------------------------------------------------


def _prepare(params: SimParams):
    if params.conditional_root:
        check_conditional_root(params.eta)
    kind, prm = params.eta.encode()
    return kind, prm


def simulate_aux(params: SimParams, record_trace: bool = False, rng: RngStream | None = None) -> TrialOutcome:
    """One trial of the auxiliary chain until absorption; V_infinity = V'_R."""
    kind, prm = _prepare(params)
    if params.p >= 1.0:
        return TrialOutcome(params.m, 0, 0, by_convention=True)
    rng = rng or RngStream(params.seed, params.stream)
    a0 = draw_initial_actives(kind, prm, params.conditional_root, rng.state)
    cap = round_cap(params.m, params.p)
    if not record_trace:
        v, moves, k, capped = _run_aux(params.m, params.p, kind, prm, a0, rng.state, cap, params.m + 1)
        return TrialOutcome(int(v), int(moves), int(k), bool(capped))
    v, moves, k, capped, xs, ap, vp = _run_aux_trace(params.m, params.p, kind, prm, a0, rng.state, cap)
    return TrialOutcome(int(v), int(moves), int(k), bool(capped), trace=AuxTrace(xs, ap, vp))


@dataclass
class InjectedRun:
    """Trajectory of the auxiliary process with extra particles, k = 0..k_max.

    ``running`` is the running sum A'_k = 1 + eta_o + sum_j (X_j - 1);
    ``actual`` counts living particles including injected extras.
    """

    x: np.ndarray
    running: np.ndarray
    actual: np.ndarray
    v_prime: np.ndarray
    r: int | None

    @property
    def active(self) -> np.ndarray:
        """A_k = A'_k 1(k < R)."""
        a = self.running.copy()
        if self.r is not None:
            a[self.r:] = 0
        return a

    @property
    def visited(self) -> np.ndarray:
        """V_k = V'_k for k < R and V'_R afterwards."""
        v = self.v_prime.copy()
        if self.r is not None:
            v[self.r:] = self.v_prime[self.r]
        return v


def simulate_aux_injected(params: SimParams, k_max: int, rng: RngStream | None = None) -> InjectedRun:
    kind, prm = _prepare(params)
    if k_max < 0:
        raise ConfigError("k_max", f"must be >= 0, got {k_max}")
    rng = rng or RngStream(params.seed, params.stream)
    a0 = draw_initial_actives(kind, prm, params.conditional_root, rng.state)
    xs, running, actual, vp, r = _run_injected(params.m, params.p, kind, prm, a0, rng.state, int(k_max))
    return InjectedRun(xs, running, actual, vp, None if r == NEVER else int(r))


@dataclass
class CohortTrace:
    """Observables of one cohort-priority run.

    ``r`` is the absorption round when the run reached it (always when the
    process died before k1), else None. ``k2`` is None when the target was
    never reached.
    """

    k1: int
    a_k1: int
    t_k1: int
    k2: int | None
    a_k2: int
    target: int
    r: int | None
    v_final: int
    capped: bool = False

    @property
    def died_before_k1(self) -> bool:
        return self.r is not None and self.r < self.k1


def _cohort_from_row(row, k1, target) -> CohortTrace:
    a_k1, t_k1, k2, a_k2, r, v, _, _, capped = (int(x) for x in row)
    return CohortTrace(k1, a_k1, t_k1, None if k2 == NEVER else k2, a_k2, target,
                       None if r == NEVER else r, v, bool(capped))


def _check_cohort_args(params: SimParams, k1: int, target: int):
    if k1 < 1:
        raise ConfigError("k1", f"must be >= 1, got {k1}")
    if not 1 <= target <= params.m:
        raise ConfigError("target", f"must satisfy 1 <= target <= m = {params.m}, got {target}")
    if params.p >= 1.0:
        raise ConfigError("p", "cohort runs need p < 1 (finite residual lifetimes)")


def simulate_cohort(params: SimParams, k1: int, target: int, rng: RngStream | None = None,
                    run_to_end: bool = False) -> CohortTrace:
    """Record A_k1, T(k1), k2 and A_k2 under cohort-priority selection.

    Stops at k2 unless ``run_to_end``; with ``run_to_end`` the run continues
    to absorption and ``v_final`` is V_infinity.
    """
    _check_cohort_args(params, k1, target)
    kind, prm = _prepare(params)
    rng = rng or RngStream(params.seed, params.stream)
    a0 = draw_initial_actives(kind, prm, params.conditional_root, rng.state)
    row = _run_cohort(params.m, params.p, kind, prm, a0, rng.state, int(k1), int(target),
                      round_cap(params.m, params.p), run_to_end)
    return _cohort_from_row(row, k1, target)


def cohort_trials(params: SimParams, k1: int, target: int, trials: int,
                  threads: int | None = None) -> list[CohortTrace]:
    """Independent cohort runs on streams ``(params.seed, i)``, stopping at k2."""
    _check_cohort_args(params, k1, target)
    kind, prm = _prepare(params)
    master = master_u64(params.seed)
    cap = round_cap(params.m, params.p)
    rows = concat_chunked(
        lambda lo, hi: _cohort_rows(params.m, params.p, kind, prm, params.conditional_root,
                                    master, lo, hi, cap, int(k1), int(target)),
        trials, threads)
    return [_cohort_from_row(r, k1, target) for r in rows.reshape(-1, 9)]


def aux_vinf_counts(params: SimParams, trials: int, threads: int | None = None, rule: str = "random",
                    k1: int = 1):
    """Histogram of V_infinity over trials on streams ``(params.seed, i)``.

    ``rule`` is ``"random"`` (collapsed chain) or ``"cohort"`` (cohort
    priority from round ``k1``). Returns ``(counts, n_capped, rounds)``;
    ``rounds`` is the total number of chain rounds played (0 for the cohort rule).
    """
    kind, prm = _prepare(params)
    m = params.m
    if params.p >= 1.0:
        counts = np.zeros(m + 1, dtype=np.int64)
        counts[m] = trials
        return counts, 0, 0
    master = master_u64(params.seed)
    cap = round_cap(m, params.p)
    if rule == "random":
        counts, n_capped, rounds = run_chunked(
            lambda lo, hi: _aux_counts(m, params.p, kind, prm, params.conditional_root, master, lo, hi, cap),
            trials, threads)
        return counts, int(n_capped), int(rounds)
    if rule == "cohort":
        counts, n_capped = run_chunked(
            lambda lo, hi: _cohort_counts(m, params.p, kind, prm, params.conditional_root, master, lo, hi,
                                          cap, int(k1)),
            trials, threads)
        return counts, int(n_capped), 0
    raise ConfigError("rule", f"unknown selection rule {rule!r}")


def event_successes(params: SimParams, threshold: int, trials: int, threads: int | None = None):
    """(successes, n_capped): trials with V_infinity >= threshold, seeds ``(params.seed, i)``."""
    kind, prm = _prepare(params)
    if params.p >= 1.0:
        return trials, 0
    master = master_u64(params.seed)
    cap = round_cap(params.m, params.p)
    succ, n_capped = run_chunked(
        lambda lo, hi: _event_counts(params.m, params.p, kind, prm, params.conditional_root, master,
                                     lo, hi, cap, int(threshold)),
        trials, threads)
    return int(succ), int(n_capped)
