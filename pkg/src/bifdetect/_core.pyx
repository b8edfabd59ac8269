# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same signatures as ``_kernels_py``."""
import numpy as np

from libc.math cimport sin, log, sqrt, fabs, M_PI

cdef double TWO_PI = 2.0 * M_PI


cdef inline bint _escaped(double[:, ::1] x, Py_ssize_t i, double rmax) noexcept nogil:
    cdef Py_ssize_t j
    cdef double v
    for j in range(x.shape[1]):
        v = fabs(x[i, j])
        if not (v <= rmax):
            return True
    return False


def rk4_pitchfork(X, double alpha, double h, Py_ssize_t nsteps, double rmax):
    cdef double[:, ::1] x = np.array(X, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t i, step
    cdef double x1, x2, y1, y2
    cdef double k11, k12, k21, k22, k31, k32, k41, k42
    cdef double half = 0.5 * h
    cdef double sixth = h / 6.0
    cdef Py_ssize_t fail_orbit = -1, fail_step = -1
    with nogil:
        for step in range(nsteps):
            for i in range(m):
                x1 = x[i, 0]
                x2 = x[i, 1]
                k11 = alpha * x1 + x2 + sin(TWO_PI * x1) / TWO_PI
                k12 = x1 - x2
                y1 = x1 + half * k11
                y2 = x2 + half * k12
                k21 = alpha * y1 + y2 + sin(TWO_PI * y1) / TWO_PI
                k22 = y1 - y2
                y1 = x1 + half * k21
                y2 = x2 + half * k22
                k31 = alpha * y1 + y2 + sin(TWO_PI * y1) / TWO_PI
                k32 = y1 - y2
                y1 = x1 + h * k31
                y2 = x2 + h * k32
                k41 = alpha * y1 + y2 + sin(TWO_PI * y1) / TWO_PI
                k42 = y1 - y2
                x[i, 0] = x1 + sixth * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
                x[i, 1] = x2 + sixth * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
            for i in range(m):
                if _escaped(x, i, rmax):
                    fail_orbit = i
                    fail_step = step + 1
                    break
            if fail_orbit >= 0:
                break
    return np.asarray(x), fail_orbit, fail_step


cdef void _linear_rhs(const double[:, ::1] A, double* y, double* out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t a, b
    cdef double acc
    for a in range(n):
        acc = 0.0
        for b in range(n):
            acc = acc + A[a, b] * y[b]
        out[a] = acc


def rk4_linear(X, A, double h, Py_ssize_t nsteps, double rmax):
    cdef double[:, ::1] x = np.array(X, dtype=np.float64, order="C", copy=True)
    cdef const double[:, ::1] Am = np.ascontiguousarray(A, dtype=np.float64)
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    cdef double[:, ::1] work = np.empty((5, n), dtype=np.float64)
    cdef double* k1 = &work[0, 0]
    cdef double* k2 = &work[1, 0]
    cdef double* k3 = &work[2, 0]
    cdef double* k4 = &work[3, 0]
    cdef double* y = &work[4, 0]
    cdef Py_ssize_t i, j, step
    cdef double half = 0.5 * h
    cdef double sixth = h / 6.0
    cdef Py_ssize_t fail_orbit = -1, fail_step = -1
    with nogil:
        for step in range(nsteps):
            for i in range(m):
                _linear_rhs(Am, &x[i, 0], k1, n)
                for j in range(n):
                    y[j] = x[i, j] + half * k1[j]
                _linear_rhs(Am, y, k2, n)
                for j in range(n):
                    y[j] = x[i, j] + half * k2[j]
                _linear_rhs(Am, y, k3, n)
                for j in range(n):
                    y[j] = x[i, j] + h * k3[j]
                _linear_rhs(Am, y, k4, n)
                for j in range(n):
                    x[i, j] = x[i, j] + sixth * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            for i in range(m):
                if _escaped(x, i, rmax):
                    fail_orbit = i
                    fail_step = step + 1
                    break
            if fail_orbit >= 0:
                break
    return np.asarray(x), fail_orbit, fail_step


def barrier_terms(Theta, C, bint need_grad, double floor):
    cdef const double[:, ::1] th = np.ascontiguousarray(Theta, dtype=np.float64)
    cdef const double[:, :, ::1] cm = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t M = cm.shape[0], N = cm.shape[1], n = cm.shape[2]
    cdef double[:, ::1] S = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] Linv = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] Sinv = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] G = np.zeros((N, n), dtype=np.float64)
    cdef Py_ssize_t i, k, a, b, c
    cdef double acc, piv, logdet
    cdef double hinge_sum = 0.0
    cdef Py_ssize_t n_active = 0
    cdef bint feasible = True

    with nogil:
        for i in range(M):
            # S = Theta^T C_i + C_i^T Theta - I, upper triangle then mirrored
            for a in range(n):
                for b in range(a, n):
                    acc = 0.0
                    for k in range(N):
                        acc = acc + th[k, a] * cm[i, k, b] + cm[i, k, a] * th[k, b]
                    if a == b:
                        acc = acc - 1.0
                    S[a, b] = acc
                    S[b, a] = acc
            # in-place Cholesky, lower triangle of S holds L
            logdet = 0.0
            for a in range(n):
                piv = S[a, a]
                for c in range(a):
                    piv = piv - S[a, c] * S[a, c]
                if not (piv > floor):
                    feasible = False
                    break
                piv = sqrt(piv)
                S[a, a] = piv
                logdet = logdet + 2.0 * log(piv)
                for b in range(a + 1, n):
                    acc = S[b, a]
                    for c in range(a):
                        acc = acc - S[b, c] * S[a, c]
                    S[b, a] = acc / piv
            if not feasible:
                break
            if logdet >= 0.0:
                continue
            hinge_sum = hinge_sum - logdet
            n_active = n_active + 1
            if not need_grad:
                continue
            # Linv = L^{-1} (lower triangular), then Sinv = Linv^T Linv
            for b in range(n):
                for a in range(n):
                    if a < b:
                        Linv[a, b] = 0.0
                        continue
                    acc = 1.0 if a == b else 0.0
                    for c in range(b, a):
                        acc = acc - S[a, c] * Linv[c, b]
                    Linv[a, b] = acc / S[a, a]
            for a in range(n):
                for b in range(n):
                    acc = 0.0
                    for c in range(a if a > b else b, n):
                        acc = acc + Linv[c, a] * Linv[c, b]
                    Sinv[a, b] = acc
            for k in range(N):
                for b in range(n):
                    acc = 0.0
                    for a in range(n):
                        acc = acc + cm[i, k, a] * Sinv[a, b]
                    G[k, b] = G[k, b] - 2.0 * acc

    if not feasible:
        return False, float("inf"), None, 0
    return True, hinge_sum, (np.asarray(G) if need_grad else None), n_active
