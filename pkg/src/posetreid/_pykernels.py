"""Reference implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable (or disabled
with POSETREID_PURE_PYTHON=1). Signatures and results match the Cython
module exactly; the test-suite runs both side by side.
"""

import math

import numpy as np

INF = float("inf")
TAU = 1e-12


def lap_square(cost):
    """Solve a square assignment problem, return ``row -> col`` as an int array.

    Shortest augmenting path with dual potentials, O(n^3). Rows are inserted
    in ascending order and ties in the column scan go to the lowest index,
    so the result is a deterministic function of the matrix.
    """
    a = np.ascontiguousarray(cost, dtype=np.float64)
    n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.intp)
    rows = a.tolist()
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[j]: row (1-based) matched to column j
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
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
    for j in range(1, n + 1):
        out[p[j] - 1] = j - 1
    return out


def rbf_gram(x, y, gamma):
    """exp(-|x_i - y_j|^2 / (2 gamma^2)) for every row pair."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.empty((x.shape[0], y.shape[0]))
    denom = 2.0 * gamma * gamma
    for i in range(x.shape[0]):
        d = y - x[i]
        out[i] = np.exp(-np.einsum("ij,ij->i", d, d) / denom)
    return out


def smo_solve(kmat, y, c, tol, max_iter):
    """Dual soft-margin SVM by SMO with the maximal-violating-pair working set.

    Minimises 0.5 a'Qa - sum(a) s.t. 0 <= a <= c, y'a = 0 where
    Q_ij = y_i y_j K_ij. Returns ``(alpha, rho, iterations)``; the decision
    function is sum_i alpha_i y_i K(x_i, x) - rho.
    """
    k = np.ascontiguousarray(kmat, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    while it < max_iter:
        # working set: strict comparisons give the lowest index on ties
        i = -1
        gmax = -INF
        j = -1
        gmin = INF
        for t in range(n):
            yt = y[t]
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
        yi, yj = y[i], y[j]
        kii, kjj, kij = k[i, i], k[j, j], k[i, j]
        ai_old, aj_old = alpha[i], alpha[j]
        ai, aj = ai_old, aj_old
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
        # G_t += Q_ti dai + Q_tj daj
        grad += y * (yi * dai * k[:, i] + yj * daj * k[:, j])
    rho = _rho(alpha, grad, y, c)
    return alpha, rho, it


def _rho(alpha, grad, y, c):
    ub = INF
    lb = -INF
    nfree = 0
    sfree = 0.0
    for t in range(y.shape[0]):
        yg = y[t] * grad[t]
        if alpha[t] >= c:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            sfree += yg
    if nfree > 0:
        return sfree / nfree
    if math.isinf(ub) or math.isinf(lb):
        return 0.0 if math.isinf(ub) and math.isinf(lb) else (lb if math.isinf(ub) else ub)
    return (ub + lb) / 2.0
