# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: square assignment, RBF Gram matrix, SMO dual solver.

Mirrors posetreid._pykernels function-for-function.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()

cdef double TAU = 1e-12


def lap_square(cost):
    cdef const double[:, ::1] a = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.intp)
    cdef double[::1] u = np.zeros(n + 1)
    cdef double[::1] v = np.zeros(n + 1)
    cdef double[::1] minv = np.empty(n + 1)
    cdef Py_ssize_t[::1] p = np.zeros(n + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] way = np.zeros(n + 1, dtype=np.intp)
    cdef unsigned char[::1] used = np.zeros(n + 1, dtype=np.uint8)
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur, ui0
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            ui0 = u[i0]
            delta = INFINITY
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = a[i0 - 1, j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    out = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] o = out
    for j in range(1, n + 1):
        o[p[j] - 1] = j - 1
    return out


def rbf_gram(x, y, double gamma):
    cdef const double[:, ::1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t nx = xa.shape[0], ny = ya.shape[0], d = xa.shape[1]
    out = np.empty((nx, ny))
    cdef double[:, ::1] o = out
    cdef double denom = 2.0 * gamma * gamma
    cdef double acc, diff
    cdef Py_ssize_t i, j, k
    for i in range(nx):
        for j in range(ny):
            acc = 0.0
            for k in range(d):
                diff = ya[j, k] - xa[i, k]
                acc += diff * diff
            o[i, j] = exp(-acc / denom)
    return out


def smo_solve(kmat, y, double c, double tol, long max_iter):
    cdef const double[:, ::1] k = np.ascontiguousarray(kmat, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    alpha_arr = np.zeros(n)
    grad_arr = -np.ones(n)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] grad = grad_arr
    cdef long it = 0
    cdef Py_ssize_t t, i, j
    cdef double yt, val, gmax, gmin, yi, yj, kii, kjj, kij
    cdef double ai_old, aj_old, ai, aj, quad, delta, diff, total, dai, daj, ci, cj
    while it < max_iter:
        i = -1
        j = -1
        gmax = -INFINITY
        gmin = INFINITY
        for t in range(n):
            yt = yv[t]
            val = -yt * grad[t]
            if (yt > 0 and alpha[t] < c) or (yt < 0 and alpha[t] > 0):
                if val > gmax:
                    gmax = val
                    i = t
            if (yt < 0 and alpha[t] < c) or (yt > 0 and alpha[t] > 0):
                if val < gmin:
                    gmin = val
                    j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            break
        it += 1
        yi = yv[i]
        yj = yv[j]
        kii = k[i, i]
        kjj = k[j, j]
        kij = k[i, j]
        ai_old = alpha[i]
        aj_old = alpha[j]
        ai = ai_old
        aj = aj_old
        if yi != yj:
            quad = kii + kjj + 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > 0:
                if ai > c:
                    ai = c
                    aj = c - diff
            else:
                if aj > c:
                    aj = c
                    ai = c + diff
        else:
            quad = kii + kjj - 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > c:
                if ai > c:
                    ai = c
                    aj = total - c
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > c:
                if aj > c:
                    aj = c
                    ai = total - c
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        dai = ai - ai_old
        daj = aj - aj_old
        ci = yi * dai
        cj = yj * daj
        for t in range(n):
            grad[t] += yv[t] * (ci * k[t, i] + cj * k[t, j])
    from posetreid._pykernels import _rho
    rho = _rho(alpha_arr, grad_arr, np.asarray(yv), c)
    return alpha_arr, rho, it
