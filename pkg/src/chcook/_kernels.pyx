# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping kernel; same contract as ``_kernels_py.advance``."""
import numpy as np

from libc.math cimport fabs, log1p, isfinite
from scipy.linalg.cython_blas cimport dgemm

cdef enum:
    ACC_OVERSHOOT = 0
    ACC_DRIFT_L1 = 1
    ACC_XI_PLUS = 2
    ACC_XI_MINUS = 3
    ACC_ETA_PLUS = 4
    ACC_ETA_MINUS = 5
    ACC_PAIR_PLUS = 6
    ACC_PAIR_MINUS = 7
    ACC_EXCEED = 8
    ACC_SUBSTEPS = 9


cdef inline double _drift(double x, int kind, const double[::1] poly, Py_ssize_t nb,
                          double lam, double edge, double fedge, double sedge) noexcept nogil:
    cdef double x2, s
    cdef Py_ssize_t k
    if kind == 0:
        return 0.0
    if kind == 1:
        x2 = x * x
        s = 0.0
        for k in range(nb - 1, -1, -1):
            s = s * x2 + poly[k]
        return s * x
    if x > edge:
        return fedge + sedge * (x - edge)
    if x < -edge:
        return -fedge + sedge * (x + edge)
    return log1p(-x) - log1p(x) + lam * x


cdef inline double _slope(double x, int kind, const double[::1] poly, Py_ssize_t nb,
                          double lam, double edge, double sedge) noexcept nogil:
    cdef double x2, s
    cdef Py_ssize_t k
    if kind == 0:
        return 0.0
    if kind == 1:
        x2 = x * x
        s = 0.0
        for k in range(nb - 1, -1, -1):
            s = s * x2 + (2 * k + 1) * poly[k]
        return s
    if fabs(x) > edge:
        return sedge
    return lam - 2.0 / (1.0 - x * x)


cdef inline void _synth(const double[:, ::1] state, Py_ssize_t e, const double[:, ::1] syn,
                        double[::1] g) noexcept nogil:
    cdef Py_ssize_t i, p
    cdef Py_ssize_t M1 = syn.shape[0]
    cdef Py_ssize_t P = syn.shape[1]
    cdef double ci
    for p in range(P):
        g[p] = 0.0
    for i in range(M1):
        ci = state[e, i]
        for p in range(P):
            g[p] += ci * syn[i, p]


cdef inline void _analyze(const double[::1] fv, const double[:, ::1] anaT,
                          double[::1] F) noexcept nogil:
    cdef Py_ssize_t i, p
    cdef double s
    for i in range(anaT.shape[0]):
        s = 0.0
        for p in range(anaT.shape[1]):
            s = s + fv[p] * anaT[i, p]
        F[i] = s


def advance(double[:, ::1] state, const double[:, :, ::1] noise, const double[::1] decay,
            const double[::1] gain, const double[:, ::1] syn, const double[:, ::1] anaT,
            int kind, const double[::1] poly, double lam, double edge, double fedge,
            double sedge, double dt, int diag, double[:, ::1] acc,
            double[:, :, ::1] prof=None, double[:, :, ::1] x_out=None,
            double[:, :, ::1] f_out=None, const double[:, ::1] sub_decay=None,
            const double[:, ::1] sub_gain=None, const double[::1] sub_c=None,
            double margin=1.0):
    cdef Py_ssize_t K = noise.shape[0]
    cdef Py_ssize_t E = state.shape[0]
    cdef Py_ssize_t M1 = state.shape[1]
    cdef Py_ssize_t P = syn.shape[1]
    cdef Py_ssize_t nb = poly.shape[0]
    cdef double[:, ::1] G = np.empty((E, P))
    cdef double[:, ::1] FV = np.empty((E, P))
    cdef double[:, ::1] FF = np.empty((E, M1))
    cdef double[::1] g1 = np.empty(P)
    cdef double[::1] fv1 = np.empty(P)
    cdef double[::1] F1 = np.empty(M1)
    cdef char *tn = 'N'
    cdef char *tt = 'T'
    cdef int iP = <int>P, iE = <int>E, iM = <int>M1
    cdef double one = 1.0, zero = 0.0
    cdef bint has_prof = prof is not None
    cdef bint has_x = x_out is not None
    cdef bint has_f = f_out is not None
    cdef Py_ssize_t nlev = sub_c.shape[0] if sub_c is not None else 1
    cdef double w = dt / P
    cdef double x, fx, fl, ep, em, over, lip, sl
    cdef double a_l1, a_xp, a_xm, a_ep, a_em, a_pp, a_pm, a_ex
    cdef Py_ssize_t e, k, i, p, lv, j, nsub
    cdef Py_ssize_t bad = -1
    cdef bint ok

    if E == 0 or K == 0:
        return -1
    with nogil:
        for k in range(K):
            # G (E x P) = state (E x M1) @ syn (M1 x P), row-major via column-major BLAS
            dgemm(tn, tn, &iP, &iE, &iM, &one, &syn[0, 0], &iP, &state[0, 0], &iM,
                  &zero, &G[0, 0], &iP)
            for e in range(E):
                for p in range(P):
                    FV[e, p] = _drift(G[e, p], kind, poly, nb, lam, edge, fedge, sedge)
            # FF (E x M1) = FV (E x P) @ anaT.T (P x M1)
            dgemm(tt, tn, &iM, &iE, &iP, &one, &anaT[0, 0], &iP, &FV[0, 0], &iP,
                  &zero, &FF[0, 0], &iM)
            for e in range(E):
                if diag >= 1:
                    over = acc[e, ACC_OVERSHOOT]
                    a_l1 = 0.0
                    for p in range(P):
                        if fabs(G[e, p]) - 1.0 > over:
                            over = fabs(G[e, p]) - 1.0
                        a_l1 += fabs(FV[e, p])
                    acc[e, ACC_OVERSHOOT] = over
                    acc[e, ACC_DRIFT_L1] += w * a_l1
                if diag >= 2:
                    a_xp = 0.0
                    a_xm = 0.0
                    a_ep = 0.0
                    a_em = 0.0
                    a_pp = 0.0
                    a_pm = 0.0
                    a_ex = 0.0
                    for p in range(P):
                        x = G[e, p]
                        fx = FV[e, p]
                        ep = 0.0
                        em = 0.0
                        if x > 0.0:
                            a_xp -= fx
                            if has_prof:
                                prof[e, 0, p] -= dt * fx
                        else:
                            a_xm += fx
                            if has_prof:
                                prof[e, 1, p] += dt * fx
                        if fabs(x) < 1.0:
                            fl = log1p(-x) - log1p(x) + lam * x
                            if x > 0.0:
                                ep = -fx + fl
                            else:
                                em = fx - fl
                        else:
                            a_ex += 1.0
                            if x >= 1.0:
                                ep = -fx
                            else:
                                em = fx
                        a_ep += ep
                        a_em += em
                        a_pp += (1.0 - x) * ep
                        a_pm += (1.0 + x) * em
                    acc[e, ACC_XI_PLUS] += w * a_xp
                    acc[e, ACC_XI_MINUS] += w * a_xm
                    acc[e, ACC_ETA_PLUS] += w * a_ep
                    acc[e, ACC_ETA_MINUS] += w * a_em
                    acc[e, ACC_PAIR_PLUS] += w * a_pp
                    acc[e, ACC_PAIR_MINUS] += w * a_pm
                    acc[e, ACC_EXCEED] += w * a_ex
                if has_x:
                    for i in range(M1):
                        x_out[k, e, i] = state[e, i]
                if has_f:
                    for i in range(M1):
                        f_out[k, e, i] = FF[e, i]
                lv = 0
                if nlev > 1:
                    lip = 0.0
                    for p in range(P):
                        sl = fabs(_slope(G[e, p], kind, poly, nb, lam, edge, sedge))
                        if sl > lip:
                            lip = sl
                    while lv < nlev - 1 and lip * sub_c[lv] > margin:
                        lv += 1
                if lv == 0:
                    for i in range(M1):
                        state[e, i] = decay[i] * state[e, i] + gain[i] * FF[e, i] + noise[k, e, i]
                else:
                    acc[e, ACC_SUBSTEPS] += 1.0
                    nsub = (<Py_ssize_t>1) << lv
                    for i in range(M1):
                        state[e, i] = sub_decay[lv, i] * state[e, i] + sub_gain[lv, i] * FF[e, i]
                    for j in range(1, nsub):
                        _synth(state, e, syn, g1)
                        for p in range(P):
                            fv1[p] = _drift(g1[p], kind, poly, nb, lam, edge, fedge, sedge)
                        _analyze(fv1, anaT, F1)
                        for i in range(M1):
                            state[e, i] = sub_decay[lv, i] * state[e, i] + sub_gain[lv, i] * F1[i]
                    for i in range(M1):
                        state[e, i] += noise[k, e, i]
                if bad < 0:
                    ok = True
                    for i in range(M1):
                        if not isfinite(state[e, i]):
                            ok = False
                    if not ok:
                        bad = k
    return bad
