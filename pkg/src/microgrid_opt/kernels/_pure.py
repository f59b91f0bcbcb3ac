"""NumPy implementations of the backward-recursion kernels.

Every kernel takes an integer ``rank`` matrix (``rank[i, j]`` orders the
moves out of state ``i`` by preference) and breaks ties with the same rule
as the compiled backend: a candidate replaces the incumbent when it is
cheaper by more than ``TIE_RTOL * (1 + |best|)``, or equally cheap within
that tolerance and of lower rank. Candidates are visited in ascending index
order in both backends so results coincide.
"""

from __future__ import annotations

import numpy as np

TIE_RTOL = 1e-12
INF = np.inf


def _better(cand, c_rank, best, b_rank):
    thr = np.where(np.isfinite(best), TIE_RTOL * (1.0 + np.abs(best)), 0.0)
    strict = cand < best - thr
    tie = np.isfinite(cand) & (cand <= best + thr) & (c_rank < b_rank)
    return strict | tie


def lattice_dp(cost, rank, terminal=None):
    """``V[k, i] = min_j cost[k, i, j] + V[k+1, j]``; returns ``(V, policy)``.

    ``policy[k, i]`` is the chosen successor, or -1 when every move is infinite.
    """
    cost = np.asarray(cost, dtype=float)
    n, g, _ = cost.shape
    V = np.empty((n + 1, g))
    V[n] = 0.0 if terminal is None else terminal
    pol = np.full((n, g), -1, dtype=np.int64)
    for k in range(n - 1, -1, -1):
        best = np.full(g, INF)
        brank = np.full(g, np.iinfo(np.int64).max)
        arg = np.full(g, -1, dtype=np.int64)
        for j in range(g):
            cand = cost[k, :, j] + V[k + 1, j]
            upd = _better(cand, rank[:, j], best, brank)
            best = np.where(upd, cand, best)
            brank = np.where(upd, rank[:, j], brank)
            arg = np.where(upd, j, arg)
        V[k] = best
        pol[k] = arg
    return V, pol


def sigma_dp(grid, trade, rank, w, kp, e_max):
    """Single-extreme recursion: each state keeps one subsequent local extreme.

    Returns ``(V, sigma, policy)`` with ``sigma[N] = grid`` and ``V[N] = 0``.
    """
    grid = np.asarray(grid, dtype=float)
    trade = np.asarray(trade, dtype=float)
    n, g, _ = trade.shape
    V = np.zeros((n + 1, g))
    sig = np.empty((n + 1, g))
    sig[n] = grid
    pol = np.full((n, g), -1, dtype=np.int64)
    gi = grid
    for k in range(n - 1, -1, -1):
        best = np.full(g, INF)
        brank = np.full(g, np.iinfo(np.int64).max)
        bsig = gi.copy()
        arg = np.full(g, -1, dtype=np.int64)
        for j in range(g):
            gj = grid[j]
            sn = sig[k + 1, j]
            a = np.sign(gj - gi)
            b = np.sign(sn - gj)
            s = np.where((a != 0) & (b != 0) & (a != b), gj, sn)
            inc = w * ((np.abs(gi - s) / e_max) ** kp - (np.abs(gj - s) / e_max) ** kp)
            cand = trade[k, :, j] + inc + V[k + 1, j]
            upd = _better(cand, rank[:, j], best, brank)
            best = np.where(upd, cand, best)
            brank = np.where(upd, rank[:, j], brank)
            bsig = np.where(upd, s, bsig)
            arg = np.where(upd, j, arg)
        V[k] = best
        sig[k] = bsig
        pol[k] = arg
    return V, sig, pol


def exact_cycle_dp(grid, trade, rank, w, kp, e_max):
    """Exact recursion with half-cycles priced segment by segment.

    Three value families are tracked per stage:

    * ``U[k, i, s]``: moving monotonically from ``i`` towards target ``s``
      (idle steps allowed) and arriving there, excluding the segment's own cost;
    * ``A[k, i, d]``: just arrived at extreme ``i`` travelling in direction
      ``d`` (0 down, 1 up); the next segment must reverse or the battery idles;
    * ``F[k, i]``: fresh start with no segment open.

    Returns ``(F, next_u, best_f, best_a)``; ``best_*`` hold the chosen target
    or -1 for idling to the end.
    """
    grid = np.asarray(grid, dtype=float)
    trade = np.asarray(trade, dtype=float)
    n, g, _ = trade.shape
    H = w * (np.abs(grid[:, None] - grid[None, :]) / e_max) ** kp
    idx = np.arange(g)
    lo = np.minimum(idx[:, None], idx[None, :])
    hi = np.maximum(idx[:, None], idx[None, :])
    up = idx[None, :] > idx[:, None]  # target above current
    offdiag = idx[:, None] != idx[None, :]
    big = np.iinfo(np.int64).max

    F = np.zeros((n + 1, g))
    next_u = np.full((n, g, g), -1, dtype=np.int64)
    best_f = np.full((n, g), -1, dtype=np.int64)
    best_a = np.full((n, g, 2), -1, dtype=np.int64)

    U_next = np.full((g, g), INF)
    A_next = np.zeros((g, 2))
    idle = np.zeros(g)
    for k in range(n - 1, -1, -1):
        idle = trade[k, idx, idx] + idle
        nxt_up = U_next.copy()
        nxt_up[idx, idx] = A_next[:, 1]
        nxt_dn = U_next.copy()
        nxt_dn[idx, idx] = A_next[:, 0]
        U = np.full((g, g), INF)
        urank = np.full((g, g), big)
        arg = np.full((g, g), -1, dtype=np.int64)
        for j in range(g):
            between = offdiag & (lo <= j) & (j <= hi)
            tail = np.where(up, nxt_up[j][None, :], nxt_dn[j][None, :])
            cand = np.where(between, trade[k, :, j][:, None] + tail, INF)
            c_rank = np.broadcast_to(rank[:, j][:, None], (g, g))
            upd = between & _better(cand, c_rank, U, urank)
            U = np.where(upd, cand, U)
            urank = np.where(upd, c_rank, urank)
            arg = np.where(upd, j, arg)
        next_u[k] = arg

        first_rank = np.where(arg >= 0, rank[idx[:, None], np.maximum(arg, 0)], big)
        seg = H + U
        A = np.empty((g, 2))
        bf = np.full(g, -1, dtype=np.int64)
        fv = idle.copy()
        fr = rank[idx, idx].copy()
        ba = np.full((g, 2), -1, dtype=np.int64)
        av = np.stack([idle, idle], axis=1)
        ar = np.stack([fr, fr], axis=1)
        for s in range(g):
            cand = np.where(offdiag[:, s], seg[:, s], INF)
            upd = _better(cand, first_rank[:, s], fv, fr)
            fv = np.where(upd, cand, fv)
            fr = np.where(upd, first_rank[:, s], fr)
            bf = np.where(upd, s, bf)
            for d, mask in ((0, s > idx), (1, s < idx)):
                c_d = np.where(mask, cand, INF)
                upd = mask & _better(c_d, first_rank[:, s], av[:, d], ar[:, d])
                av[:, d] = np.where(upd, c_d, av[:, d])
                ar[:, d] = np.where(upd, first_rank[:, s], ar[:, d])
                ba[:, d] = np.where(upd, s, ba[:, d])
        A[:] = av
        F[k] = fv
        best_f[k] = bf
        best_a[k] = ba
        U_next, A_next = U, A
    return F, next_u, best_f, best_a
