"""Reference synchronous simulator of the frog model on K_m.

Every time step, all living active particles first decide whether they die
(probability 1 - p); each survivor then jumps to a vertex drawn uniformly
from the other m - 1 vertices; finally every vertex hit for the first time
releases its sleeping particles, which start moving at the next step.

Particles on a vertex are exchangeable, so only per-vertex counts of active
particles are stored. Simultaneous first visits to one vertex by several
particles are resolved per vertex: the vertex wakes its sleepers once.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from .dists import check_conditional_root, draw_eta, draw_initial_actives
from .model import SimParams, TrialOutcome, round_cap
from .rng import RngStream, below, master_u64, seed_state, uniform
from .trials import run_chunked


@nb.njit(cache=True, nogil=True)
def _run_sync(m, p, kind, prm, cond_root, s, cap, cur, nxt, occ, new_occ, visited):
    """One trial; work arrays have length m and must be zeroed / False on entry.

    Returns (v_infty, total_steps, steps_elapsed, capped).
    """
    a0 = draw_initial_actives(kind, prm, cond_root, s)
    if m == 1:
        return 1, 0, 0, False
    visited[0] = True
    cur[0] = a0
    occ[0] = 0
    n_occ = 1
    v = 1
    moves = 0
    t = 0
    capped = False
    while n_occ > 0:
        if t >= cap:
            capped = True
            break
        t += 1
        n_new = 0
        for i in range(n_occ):
            x = occ[i]
            c = cur[x]
            cur[x] = 0
            for _ in range(c):
                if uniform(s) < p:
                    y = below(s, m - 1)
                    if y >= x:
                        y += 1
                    moves += 1
                    if nxt[y] == 0:
                        new_occ[n_new] = y
                        n_new += 1
                    nxt[y] += 1
        for i in range(n_new):
            y = new_occ[i]
            if not visited[y]:
                visited[y] = True
                v += 1
                nxt[y] += draw_eta(kind, prm, s)
        # swap buffers; cur is all zero again at this point
        cur, nxt = nxt, cur
        occ, new_occ = new_occ, occ
        n_occ = n_new
    # leave the work arrays clean for the next trial
    for i in range(n_occ):
        cur[occ[i]] = 0
    for i in range(m):
        visited[i] = False
    return v, moves, t, capped


@nb.njit(cache=True, nogil=True)
def _sync_counts(m, p, kind, prm, cond_root, master, lo, hi, cap):
    counts = np.zeros(m + 1, dtype=np.int64)
    n_capped = 0
    s = np.empty(4, dtype=np.uint64)
    cur = np.zeros(m, dtype=np.int64)
    nxt = np.zeros(m, dtype=np.int64)
    occ = np.empty(m, dtype=np.int64)
    new_occ = np.empty(m, dtype=np.int64)
    visited = np.zeros(m, dtype=np.bool_)
    for i in range(lo, hi):
        seed_state(master, np.uint64(i), s)
        v, _, _, capped = _run_sync(m, p, kind, prm, cond_root, s, cap, cur, nxt, occ, new_occ, visited)
        if capped:
            n_capped += 1
        else:
            counts[v] += 1
    return counts, n_capped


def simulate_frog_sync(params: SimParams, rng: RngStream | None = None) -> TrialOutcome:
    """Run one trial. ``rng`` defaults to the stream ``(params.seed, params.stream)``."""
    if params.conditional_root:
        check_conditional_root(params.eta)
    if params.p >= 1.0:
        return TrialOutcome(params.m, 0, 0, by_convention=True)
    rng = rng or RngStream(params.seed, params.stream)
    m = params.m
    kind, prm = params.eta.encode()
    v, moves, t, capped = _run_sync(
        m, params.p, kind, prm, params.conditional_root, rng.state, round_cap(m, params.p),
        np.zeros(m, np.int64), np.zeros(m, np.int64), np.empty(m, np.int64),
        np.empty(m, np.int64), np.zeros(m, np.bool_))
    return TrialOutcome(int(v), int(moves), int(t), bool(capped))


def sync_vinf_counts(params: SimParams, trials: int, threads: int | None = None):
    """Histogram of V_infinity over ``trials`` trials on streams ``(params.seed, i)``.

    Returns ``(counts, n_capped)`` with ``counts[v]`` for v = 0..m (index 0 unused).
    """
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
        lambda lo, hi: _sync_counts(m, params.p, kind, prm, params.conditional_root, master, lo, hi, cap),
        trials, threads)
    return counts, int(n_capped)
