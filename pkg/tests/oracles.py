"""Brute-force references used by the tests."""

import numpy as np


def envelope_1d(x, v, a):
    """Lower envelope by tangent paraboloids of opening -a, anchored at node pairs.

    A paraboloid of opening -a below ``v`` and touching at two nodes is the
    chord of ``v + (a/2) x^2`` minus ``(a/2) x^2``; the envelope at a node is
    the smallest chord value over bracketing pairs (or the value itself).
    """
    x = np.asarray(x, float)
    w = np.asarray(v, float) + 0.5 * a * x * x
    out = w.copy()
    N = len(x)
    for i in range(N):
        for j in range(i):
            for k in range(i + 1, N):
                t = (x[i] - x[j]) / (x[k] - x[j])
                out[i] = min(out[i], (1 - t) * w[j] + t * w[k])
    return out - 0.5 * a * x * x


def touches_1d(x, v, i, a, tol=1e-12):
    """Whether a paraboloid of opening -a lies below ``v`` and touches at node ``i``."""
    d = np.asarray(x, float) - x[i]
    rhs = np.asarray(v, float) - v[i] + 0.5 * a * d * d
    left, right = d < 0, d > 0
    lo = (rhs[left] / d[left]).max() if left.any() else -np.inf
    hi = (rhs[right] / d[right]).min() if right.any() else np.inf
    return lo <= hi + tol


def theta_1d(x, v, i, a_max=1e6, rel=1e-6):
    """Smallest opening touching at node ``i`` by bisection on the pair test."""
    if touches_1d(x, v, i, 0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while not touches_1d(x, v, i, hi):
        lo, hi = hi, 2 * hi
        if hi > a_max:
            return np.inf
    while hi - lo > rel * hi:
        mid = 0.5 * (lo + hi)
        if touches_1d(x, v, i, mid):
            hi = mid
        else:
            lo = mid
    return hi


def support_brute(g, X, s):
    """Minimum of ``g - s.x`` over all nodes and the set of minimizers."""
    vals = g - X @ s
    m = vals.min()
    return m, vals


def minus_pucci_dense(N, lam):
    """Pucci minimal operator by numpy's eigensolver."""
    ev = np.linalg.eigvalsh(N)
    return ev[ev > 0].sum() + lam * ev[ev < 0].sum()
