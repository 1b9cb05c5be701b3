"""Independent reference computations used by the test-suite.

Nothing here imports the numerical kernels of the package; each routine is a
deliberately naive re-derivation from definitions.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def naive_gso(rows):
    """Classical Gram-Schmidt over the rationals: (mu, |b*_i|^2)."""
    n = len(rows)
    b = [[Fraction(x) for x in row] for row in rows]
    star, norms = [], []
    mu = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        v = list(b[i])
        for j in range(i):
            mu[i][j] = sum(x * y for x, y in zip(b[i], star[j])) / norms[j]
            v = [x - mu[i][j] * y for x, y in zip(v, star[j])]
        star.append(v)
        norms.append(sum(x * x for x in v))
    return mu, norms


def naive_log_state(rows):
    """(r, mu) in double precision straight from the rational GSO."""
    mu, norms = naive_gso(rows)
    n = len(rows)
    r = np.array([0.5 * (_log(norms[i]) - _log(norms[i + 1])) for i in range(n - 1)])
    m = np.array([[float(mu[i][j]) if j < i else 0.0 for j in range(n)] for i in range(n)])
    return r, m


def _log(q: Fraction) -> float:
    return math.log(q.numerator) - math.log(q.denominator)


def swapped(rows, k):
    """Basis with rows k and k+1 (1-based) exchanged."""
    out = [list(r) for r in rows]
    out[k - 1], out[k] = out[k], out[k - 1]
    return out


def energy_double_sum(r):
    """sum_{j=1}^{n-1} sum_{i=j}^{n-1} (n - i) r_i, evaluated literally."""
    r = list(r)
    n = len(r) + 1
    total = 0
    for j in range(1, n):
        for i in range(j, n):
            total += (n - i) * r[i - 1]
    return total


def rel_err(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def n2_coset_chain(I: int):
    """Exact transition matrix of the single-site SSP on the coset ``T - 2o``.

    Each step adds 2 to the height (one frame shift) and stabilizes, with
    every increment sequence enumerated explicitly.  Offsets ``o`` index
    states ``T - 2o`` for ``o = 0..I-1``; ``T`` is taken as ``2I``.
    """
    T = 2 * I
    P = [[Fraction(0)] * I for _ in range(I)]
    for o in range(I):
        frontier = {T - 2 * o + 2: Fraction(1)}
        while frontier:
            nxt = {}
            for h, p in frontier.items():
                if h <= T:
                    P[o][(T - h) // 2] += p
                    continue
                for g in range(1, I + 1):
                    nxt[h - 2 * g] = nxt.get(h - 2 * g, Fraction(0)) + p / I
            frontier = nxt
    return P


def stationary(P) -> np.ndarray:
    """Left eigenvector of eigenvalue 1, normalized."""
    A = np.array([[float(x) for x in row] for row in P])
    w, v = np.linalg.eig(A.T)
    i = int(np.argmin(np.abs(w - 1.0)))
    s = np.real(v[:, i])
    return s / s.sum()


def brute_asm(heights, T, I):
    """Lowest-first ASM stabilization in plain Python; returns (heights, counts)."""
    h = list(int(x) for x in heights)
    counts = [0] * len(h)
    while True:
        k = next((i for i, v in enumerate(h) if v > T), None)
        if k is None:
            return h, counts
        h[k] -= 2 * I
        if k > 0:
            h[k - 1] += I
        if k + 1 < len(h):
            h[k + 1] += I
        counts[k] += 1
