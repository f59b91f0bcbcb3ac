# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled backward-recursion kernels; same contracts as ``_pure``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, INFINITY, isfinite

cnp.import_array()

cdef double TIE_RTOL = 1e-12
cdef long long BIG = 9223372036854775807


cdef inline bint better(double cand, long long crank, double best, long long brank) nogil:
    cdef double thr = TIE_RTOL * (1.0 + fabs(best)) if isfinite(best) else 0.0
    if cand < best - thr:
        return True
    return isfinite(cand) and cand <= best + thr and crank < brank


cdef inline int sgn(double x) nogil:
    return (x > 0) - (x < 0)


def lattice_dp(cost, rank, terminal=None):
    cdef double[:, :, ::1] C = np.ascontiguousarray(cost, dtype=np.float64)
    cdef long long[:, ::1] R = np.ascontiguousarray(rank, dtype=np.int64)
    cdef Py_ssize_t n = C.shape[0], g = C.shape[1], k, i, j
    V_arr = np.empty((n + 1, g))
    pol_arr = np.full((n, g), -1, dtype=np.int64)
    V_arr[n] = 0.0 if terminal is None else terminal
    cdef double[:, ::1] V = V_arr
    cdef long long[:, ::1] P = pol_arr
    cdef double best, cand
    cdef long long brank
    with nogil:
        for k in range(n - 1, -1, -1):
            for i in range(g):
                best = INFINITY
                brank = BIG
                for j in range(g):
                    cand = C[k, i, j] + V[k + 1, j]
                    if better(cand, R[i, j], best, brank):
                        best = cand
                        brank = R[i, j]
                        P[k, i] = j
                V[k, i] = best
    return V_arr, pol_arr


def sigma_dp(grid, trade, rank, double w, double kp, double e_max):
    cdef double[::1] G = np.ascontiguousarray(grid, dtype=np.float64)
    cdef double[:, :, ::1] T = np.ascontiguousarray(trade, dtype=np.float64)
    cdef long long[:, ::1] R = np.ascontiguousarray(rank, dtype=np.int64)
    cdef Py_ssize_t n = T.shape[0], g = T.shape[1], k, i, j
    V_arr = np.zeros((n + 1, g))
    sig_arr = np.empty((n + 1, g))
    sig_arr[n] = np.asarray(grid, dtype=float)
    pol_arr = np.full((n, g), -1, dtype=np.int64)
    cdef double[:, ::1] V = V_arr
    cdef double[:, ::1] S = sig_arr
    cdef long long[:, ::1] P = pol_arr
    cdef double best, bsig, cand, s, sn, inc
    cdef long long brank
    cdef int a, b
    with nogil:
        for k in range(n - 1, -1, -1):
            for i in range(g):
                best = INFINITY
                brank = BIG
                bsig = G[i]
                for j in range(g):
                    sn = S[k + 1, j]
                    a = sgn(G[j] - G[i])
                    b = sgn(sn - G[j])
                    s = G[j] if (a != 0 and b != 0 and a != b) else sn
                    inc = w * (pow(fabs(G[i] - s) / e_max, kp) - pow(fabs(G[j] - s) / e_max, kp))
                    cand = T[k, i, j] + inc + V[k + 1, j]
                    if better(cand, R[i, j], best, brank):
                        best = cand
                        brank = R[i, j]
                        bsig = s
                        P[k, i] = j
                V[k, i] = best
                S[k, i] = bsig
    return V_arr, sig_arr, pol_arr


def exact_cycle_dp(grid, trade, rank, double w, double kp, double e_max):
    cdef double[::1] G = np.ascontiguousarray(grid, dtype=np.float64)
    cdef double[:, :, ::1] T = np.ascontiguousarray(trade, dtype=np.float64)
    cdef long long[:, ::1] R = np.ascontiguousarray(rank, dtype=np.int64)
    cdef Py_ssize_t n = T.shape[0], g = T.shape[1], k, i, j, s, lo, hi, d
    H_arr = np.empty((g, g))
    cdef double[:, ::1] H = H_arr
    for i in range(g):
        for s in range(g):
            H[i, s] = w * pow(fabs(G[i] - G[s]) / e_max, kp)

    F_arr = np.zeros((n + 1, g))
    nu_arr = np.full((n, g, g), -1, dtype=np.int64)
    bf_arr = np.full((n, g), -1, dtype=np.int64)
    ba_arr = np.full((n, g, 2), -1, dtype=np.int64)
    cdef double[:, ::1] F = F_arr
    cdef long long[:, :, ::1] NU = nu_arr
    cdef long long[:, ::1] BF = bf_arr
    cdef long long[:, :, ::1] BA = ba_arr

    cdef double[:, ::1] U_next = np.full((g, g), INFINITY)
    cdef double[:, ::1] U = np.full((g, g), INFINITY)
    cdef double[:, ::1] A_next = np.zeros((g, 2))
    cdef double[:, ::1] A = np.zeros((g, 2))
    cdef double[:, ::1] tmp2
    cdef double[::1] idle = np.zeros(g)
    cdef double best, cand, tail, fv
    cdef long long brank, fr, crank
    cdef double av[2]
    cdef long long ar[2]
    cdef bint go_up

    with nogil:
        for k in range(n - 1, -1, -1):
            for i in range(g):
                idle[i] = T[k, i, i] + idle[i]
            for i in range(g):
                for s in range(g):
                    U[i, s] = INFINITY
                    if s == i:
                        continue
                    go_up = s > i
                    lo = i if i < s else s
                    hi = s if i < s else i
                    best = INFINITY
                    brank = BIG
                    for j in range(lo, hi + 1):
                        if j == s:
                            tail = A_next[s, 1] if go_up else A_next[s, 0]
                        else:
                            tail = U_next[j, s]
                        cand = T[k, i, j] + tail
                        if better(cand, R[i, j], best, brank):
                            best = cand
                            brank = R[i, j]
                            NU[k, i, s] = j
                    U[i, s] = best
            for i in range(g):
                fv = idle[i]
                fr = R[i, i]
                av[0] = idle[i]
                av[1] = idle[i]
                ar[0] = fr
                ar[1] = fr
                for s in range(g):
                    if s == i:
                        continue
                    cand = H[i, s] + U[i, s]
                    crank = R[i, NU[k, i, s]] if NU[k, i, s] >= 0 else BIG
                    if better(cand, crank, fv, fr):
                        fv = cand
                        fr = crank
                        BF[k, i] = s
                    d = 0 if s > i else 1
                    if better(cand, crank, av[d], ar[d]):
                        av[d] = cand
                        ar[d] = crank
                        BA[k, i, d] = s
                F[k, i] = fv
                A[i, 0] = av[0]
                A[i, 1] = av[1]
            tmp2 = U_next
            U_next = U
            U = tmp2
            tmp2 = A_next
            A_next = A
            A = tmp2
    return F_arr, nu_arr, bf_arr, ba_arr
