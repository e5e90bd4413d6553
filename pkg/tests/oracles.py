"""
Reference computations that share no code with parmf.

Everything here works from plain triplet lists and dense numpy factor
matrices, with Python loops and math.fsum, so a bug in the sparse layouts
or the numba kernels cannot leak into the expected values.
"""

import math

import numpy as np


def objective(triplets, w, h, lam):
    sq = [(r - math.fsum(float(w[i, t]) * float(h[j, t]) for t in range(w.shape[1]))) ** 2
          for i, j, r in triplets]
    reg = [float(x) ** 2 for x in np.ravel(w)] + [float(x) ** 2 for x in np.ravel(h)]
    return math.fsum(sq) + lam * math.fsum(reg)


def residuals(triplets, w, h):
    """{(i, j): A_ij - w_i . h_j}"""
    return {(i, j): r - float(np.dot(w[i].astype(np.float64), h[j].astype(np.float64)))
            for i, j, r in triplets}


def coordinate_loss(triplets, w, h, lam, i, t):
    """The 1-D loss in w[i, t] built directly from A, W and H."""
    row = [(j, r) for (u, j, r) in triplets if u == i]
    k = w.shape[1]

    def f(z):
        terms = []
        for j, r in row:
            rest = math.fsum(float(w[i, s]) * float(h[j, s]) for s in range(k) if s != t)
            terms.append((r - rest - z * float(h[j, t])) ** 2)
        terms.append(lam * z * z)
        return math.fsum(terms)

    return f


def minimize_1d(f, tol=1e-13):
    """
    Numerical minimizer of a convex 1-D function.

    Grid scan on an expanding interval, golden-section refinement, then
    bisection on the sign of the symmetric difference f(z + d) - f(z - d),
    which locates the minimum of a quadratic well below sqrt(eps).
    """
    half = 1.0
    while True:
        zs = np.linspace(-half, half, 401)
        vals = [f(z) for z in zs]
        k = int(np.argmin(vals))
        if 0 < k < len(zs) - 1:
            break
        half *= 4
        if half > 1e12:
            raise RuntimeError("no interior minimum")
    a, b = zs[k - 1], zs[k + 1]
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > 1e-7 * (1 + abs(a)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    x = (a + b) / 2

    def side(z, step=1e-3):
        return f(z + step) - f(z - step)

    lo, hi = x - 1e-6, x + 1e-6
    while side(lo) > 0:
        lo -= 1e-6
    while side(hi) < 0:
        hi += 1e-6
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if side(mid) > 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


def rank_one_lstsq(targets, other, lam):
    """argmin_x sum (targets - x * other)^2 + lam x^2 via least squares on an augmented system."""
    targets = np.asarray(targets, dtype=np.float64)
    other = np.asarray(other, dtype=np.float64)
    if len(targets) == 0 and lam == 0:
        return 0.0
    a = np.concatenate([other, [math.sqrt(lam)]])[:, None]
    b = np.concatenate([targets, [0.0]])
    if not a.any():
        return 0.0
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    return float(x[0])


def ridge_row(rows, targets, lam):
    """(X^T X + lam I)^{-1} X^T y via an explicit inverse."""
    x = np.asarray(rows, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    k = x.shape[1]
    return np.linalg.inv(x.T @ x + lam * np.eye(k)) @ (x.T @ y)


def gram_naive(rows, lam, k):
    g = [[0.0] * k for _ in range(k)]
    for a in range(k):
        for b in range(k):
            s = 0.0
            for h in rows:
                s += float(h[a]) * float(h[b])
            g[a][b] = s
        g[a][a] += lam
    return np.array(g)
