"""Exact integer-basis LLL with rational Gram-Schmidt data.

Everything here is exact: Gram-Schmidt is computed with the integral
(fraction-free) recurrences, so the only rounding in the module is the final
projection to floating point in :func:`gso_log_project`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .gso import GsoState

#: exact_lll refuses larger dimensions; use exact_gso + gso_log_project instead
MAX_EXACT_LLL_DIM = 12


@dataclass(frozen=True)
class IntegerBasis:
    """Rows are the basis vectors ``b_1..b_n``."""

    rows: tuple

    def __init__(self, rows: Sequence[Sequence[int]]):
        rows = tuple(tuple(int(v) for v in row) for row in rows)
        if not rows or any(len(row) != len(rows) for row in rows):
            raise ValueError("an IntegerBasis must be a square n x n integer matrix")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return len(self.rows)

    def to_text(self) -> str:
        lines = [str(self.n)] + [" ".join(str(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "IntegerBasis":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        n = int(lines[0])
        rows = [[int(t) for t in ln.split()] for ln in lines[1 : n + 1]]
        if len(rows) != n:
            raise ValueError(f"expected {n} rows, found {len(rows)}")
        return cls(rows)


@dataclass(frozen=True)
class RationalGso:
    mu: tuple  # mu[i][j] for j < i, Fractions; row i has i entries
    bstar_norm_sq: tuple

    @property
    def n(self) -> int:
        return len(self.bstar_norm_sq)


def determinant(basis: IntegerBasis) -> int:
    """Bareiss fraction-free elimination."""
    a = [list(row) for row in basis.rows]
    n = len(a)
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def _integral_gso(rows):
    """d[i] = prod_{j<i} |b*_j|^2 and lam[i][j] = d[j+1] mu_{ij}, all integers."""
    n = len(rows)
    gram = [[sum(x * y for x, y in zip(rows[i], rows[j])) for j in range(i + 1)] for i in range(n)]
    d = [1] + [0] * n
    lam = [[0] * i for i in range(n)]
    for i in range(n):
        for j in range(i + 1):
            u = gram[i][j]
            for k in range(j):
                u = (d[k + 1] * u - lam[i][k] * lam[j][k]) // d[k]
            if j < i:
                lam[i][j] = u
            else:
                if u == 0:
                    raise ValueError("basis is singular")
                d[i + 1] = u
    return d, lam


def exact_gso(basis: IntegerBasis) -> RationalGso:
    d, lam = _integral_gso(basis.rows)
    n = basis.n
    mu = tuple(tuple(Fraction(lam[i][j], d[j + 1]) for j in range(i)) for i in range(n))
    bnorm = tuple(Fraction(d[i + 1], d[i]) for i in range(n))
    return RationalGso(mu, bnorm)


def _log_fraction(x: Fraction, prec: int) -> float:
    with mpmath.workprec(prec):
        return float(mpmath.log(mpmath.mpf(x.numerator) / mpmath.mpf(x.denominator)))


def gso_log_project(gso: RationalGso, prec: int = 256) -> GsoState:
    """Round exact GSO data to a :class:`GsoState`.

    Each ``r_i`` is the log of the exact ratio ``B_i / B_{i+1}`` evaluated
    with a ``prec``-bit mantissa, so no cancellation happens for large
    norms.
    """
    n = gso.n
    b = gso.bstar_norm_sq
    r = np.array([0.5 * _log_fraction(b[i] / b[i + 1], prec) for i in range(n - 1)])
    mu = np.zeros((n, n))
    for i in range(n):
        for j in range(i):
            mu[i, j] = float(gso.mu[i][j])
    return GsoState(r, mu)


def exact_lll(basis: IntegerBasis, delta: Fraction = Fraction(7, 10)) -> tuple[IntegerBasis, list[int]]:
    """Siegel-variant LLL on the integer basis itself.

    Returns the reduced basis and the list of swapped sites (1-based), in
    order.  Size reduction rounds half to even, matching the float
    simulator.
    """
    delta = Fraction(delta)
    if not (0 < delta < Fraction(3, 4)):
        raise ValueError("exact_lll needs 0 < delta < 3/4")
    n = basis.n
    if n > MAX_EXACT_LLL_DIM:
        raise ValueError(f"exact_lll is capped at n <= {MAX_EXACT_LLL_DIM}; project with gso_log_project instead")
    rows = [list(row) for row in basis.rows]
    swaps: list[int] = []
    while True:
        g = exact_gso(IntegerBasis(rows))
        mu = [list(row) for row in g.mu]
        for i in range(1, n):
            for j in range(i - 1, -1, -1):
                c = round(mu[i][j])
                if c:
                    rows[i] = [a - c * b for a, b in zip(rows[i], rows[j])]
                    for l in range(j):
                        mu[i][l] -= c * mu[j][l]
                    mu[i][j] -= c
        bn = g.bstar_norm_sq
        k = next((k for k in range(n - 1) if delta * bn[k] > bn[k + 1]), None)
        if k is None:
            return IntegerBasis(rows), swaps
        rows[k], rows[k + 1] = rows[k + 1], rows[k]
        swaps.append(k + 1)
