"""Siegel-variant LLL simulated in Gram-Schmidt log coordinates.

A basis enters only through ``r_i = log(|b*_i| / |b*_{i+1}|)`` (natural log)
and its Gram-Schmidt coefficients ``mu[i, j]``.  The swap at site ``k``
updates these in place with the closed-form post-swap formulas, and size
reduction is the usual nearest-integer cascade, so the whole run never
touches basis vectors.

Sites are numbered ``1..n-1`` in the public functions; the arrays
themselves are 0-based (``r[k - 1]`` is site ``k``, ``mu[i - 1, j - 1]`` is
``mu_{i,j}``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .rng import stream
from .trace import RunTrace, _EventBuffer

POLICIES = ("lowest", "random", "highest")
_POLICY_CODE = {"lowest": 0, "random": 1, "highest": 2}

# policy "lowest"/"highest" never draws from this
_IDLE_RNG = stream(0, 0, 0xFFFF)


def policy_code(policy: str) -> int:
    try:
        return _POLICY_CODE[policy]
    except KeyError:
        raise ValueError(f"unknown site-selection policy {policy!r}; expected one of {POLICIES}") from None


@dataclass
class GsoState:
    """Log-ratio profile ``r`` (length n-1) and strictly lower-triangular ``mu`` (n x n)."""

    r: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.r = np.array(self.r, dtype=np.float64).reshape(-1)
        n = self.r.size + 1
        if n < 2:
            raise ValueError("dimension must be at least 2")
        mu = np.array(self.mu, dtype=np.float64)
        if mu.shape != (n, n):
            raise ValueError(f"mu must have shape {(n, n)}, got {mu.shape}")
        self.mu = np.tril(mu, -1)
        if not (np.all(np.isfinite(self.r)) and np.all(np.isfinite(self.mu))):
            raise ValueError("GsoState entries must be finite")

    @property
    def n(self) -> int:
        return self.r.size + 1

    @property
    def subdiagonal(self) -> np.ndarray:
        """``mu_{k+1,k}`` for k = 1..n-1."""
        return np.diag(self.mu, -1).copy()

    @classmethod
    def identity(cls, n: int) -> "GsoState":
        return cls(np.zeros(n - 1), np.zeros((n, n)))

    def copy(self) -> "GsoState":
        return GsoState(self.r, self.mu)

    def to_dict(self) -> dict:
        rows = [[float(v) for v in self.mu[i, :i]] for i in range(self.n)]
        return {"n": self.n, "r": [float(v) for v in self.r], "mu": rows}

    @classmethod
    def from_dict(cls, d: dict) -> "GsoState":
        n = int(d["n"])
        mu = np.zeros((n, n))
        for i, row in enumerate(d["mu"]):
            mu[i, : len(row)] = row
        return cls(d["r"], mu)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GsoState":
        return cls.from_dict(json.loads(text))


@dataclass
class ReductionParams:
    delta: float = 0.7
    policy: str = "lowest"
    max_steps: Optional[int] = None

    def __post_init__(self):
        if not (0.0 < self.delta <= 0.75):
            raise ValueError(f"delta must lie in (0, 3/4], got {self.delta}")
        policy_code(self.policy)

    @property
    def T(self) -> float:
        return -0.5 * math.log(self.delta)


# ---------------------------------------------------------------------------
# jitted kernels


@numba.njit(cache=True)
def _select(r, T, policy, rng, hint):
    m = r.shape[0]
    if policy == 0:
        for k in range(hint, m):
            if r[k] > T:
                return k
        return -1
    if policy == 2:
        for k in range(hint, -1, -1):
            if r[k] > T:
                return k
        return -1
    count = 0
    for k in range(m):
        if r[k] > T:
            count += 1
    if count == 0:
        return -1
    pick = rng.integers(0, count)
    for k in range(m):
        if r[k] > T:
            if pick == 0:
                return k
            pick -= 1
    return -1


@numba.njit(cache=True)
def _first_hint(policy, m):
    return m - 1 if policy == 2 else 0


@numba.njit(cache=True)
def _next_hint(policy, k, m):
    # everything strictly below (above) the toppled neighbourhood is untouched and stable
    if policy == 0:
        return k - 1 if k > 0 else 0
    if policy == 2:
        return k + 1 if k < m - 1 else m - 1
    return 0


@numba.njit(cache=True)
def _log_q(rk, mu):
    # log Q = -1/2 log(exp(-2 r) + mu^2), safe for huge |r| and mu == 0
    a = -2.0 * rk
    if mu == 0.0:
        return rk
    return -0.5 * np.logaddexp(a, np.log(mu * mu))


@numba.njit(cache=True)
def _size_reduce(mu, start):
    n = mu.shape[0]
    for i in range(max(start, 1), n):
        for j in range(i - 1, -1, -1):
            c = round(mu[i, j])
            if c != 0.0:
                for l in range(j):
                    mu[i, l] -= c * mu[j, l]
                mu[i, j] -= c


@numba.njit(cache=True)
def _swap(r, mu, k):
    n = mu.shape[0]
    m = n - 1
    u = mu[k + 1, k]
    lq = _log_q(r[k], u)
    if k >= 1:
        r[k - 1] += lq
    r[k] -= 2.0 * lq
    if k + 1 <= m - 1:
        r[k + 1] += lq
    un = 0.0 if u == 0.0 else np.exp(2.0 * lq) * u
    mu[k + 1, k] = un
    for l in range(k):
        t = mu[k, l]
        mu[k, l] = mu[k + 1, l]
        mu[k + 1, l] = t
    for l in range(k + 2, n):
        a = mu[l, k]
        b = mu[l, k + 1]
        mu[l, k + 1] = a - b * u
        mu[l, k] = b - b * u * un + a * un
    return lq


@numba.njit(cache=True)
def _lll_run(r, mu, T, policy, budget, rng, record, sites, incs, mus, qinv, drops):
    m = r.shape[0]
    _size_reduce(mu, 1)
    hint = _first_hint(policy, m)
    steps = 0
    while True:
        k = _select(r, T, policy, rng, hint)
        if k < 0:
            return steps, True
        if steps >= budget:
            return steps, False
        u = mu[k + 1, k]
        lq = _swap(r, mu, k)
        if record:
            sites[steps] = k + 1
            incs[steps] = lq
            mus[steps] = abs(u)
            qinv[steps] = np.exp(-2.0 * lq)
            drops[steps] = 2.0 * lq
        steps += 1
        _size_reduce(mu, k)
        hint = _next_hint(policy, k, m)


# ---------------------------------------------------------------------------
# public operations


def _heights(x) -> np.ndarray:
    for attr in ("r", "heights"):
        if hasattr(x, attr):
            return np.asarray(getattr(x, attr))
    return np.asarray(x)


def _check_site(k: int, n: int) -> int:
    if not (1 <= k <= n - 1):
        raise IndexError(f"site {k} outside 1..{n - 1}")
    return k - 1


def q_factor(state: GsoState, k: int) -> float:
    """``Q_k = (alpha_k^-2 + mu_{k+1,k}^2)^(-1/2)``."""
    i = _check_site(k, state.n)
    return math.exp(_log_q(state.r[i], state.mu[i + 1, i]))


def size_reduce(state: GsoState) -> GsoState:
    out = state.copy()
    _size_reduce(out.mu, 1)
    return out


def find_unstable(state, params: ReductionParams, rng=None) -> Optional[int]:
    """Site chosen by the policy among those with ``r_k > T``, or None when stable."""
    r = np.ascontiguousarray(_heights(state), dtype=np.float64)
    code = policy_code(params.policy)
    k = _select(r, params.T, code, rng if rng is not None else _IDLE_RNG, _first_hint(code, r.size))
    return None if k < 0 else int(k) + 1


def swap_update(state: GsoState, k: int) -> GsoState:
    """State after exchanging ``b_k`` and ``b_{k+1}``."""
    i = _check_site(k, state.n)
    out = state.copy()
    _swap(out.r, out.mu, i)
    return out


def energy(x):
    """``sum_i i (n - i) r_i``; exact Python int for integer heights."""
    h = _heights(x)
    n = h.size + 1
    i = np.arange(1, n, dtype=np.int64)
    w = i * (n - i)
    if np.issubdtype(h.dtype, np.integer):
        return int(sum(int(a) * int(b) for a, b in zip(w, h)))
    return float(np.dot(w.astype(np.float64), h.astype(np.float64)))


def energy_floor(n: int, T: float) -> float:
    """Energy ``H = T (n^3 - n) / 6`` of the all-``T`` configuration."""
    if n < 2 or T <= 0:
        raise ValueError("need n >= 2 and T > 0")
    return T / 6.0 * (n**3 - n)


def log_rhf(x) -> float:
    h = np.asarray(_heights(x), dtype=np.float64)
    n = h.size + 1
    w = n - np.arange(1, n)
    return float(np.dot(w, h)) / n**2


def rhf(x) -> float:
    """Root Hermite factor ``exp(sum (n - i) r_i / n^2)``."""
    return math.exp(log_rhf(x))


def default_max_steps(initial_energy: float, n: int, delta: float) -> int:
    span = abs(initial_energy) + energy_floor(n, -0.5 * math.log(delta))
    if delta < 0.75:
        return int(math.ceil(100 * span / (2 * math.log(1 / (delta + 0.25))))) + 1000
    return int(math.ceil(100 * span)) + 1000


def lll_reduce(state: GsoState, params: ReductionParams, rng=None, *, record: bool = True,
               chunk: int = 1 << 16) -> tuple[GsoState, RunTrace]:
    """Run the Siegel-variant LLL loop on ``state``.

    Each iteration size-reduces, picks an unstable site per ``params.policy``
    and swaps.  Stops when every ``r_k <= T`` or after ``params.max_steps``
    swaps, in which case the trace has ``terminated=False``.
    """
    out = state.copy()
    code = policy_code(params.policy)
    e0 = energy(out)
    max_steps = params.max_steps if params.max_steps is not None else default_max_steps(e0, out.n, params.delta)
    rng = rng if rng is not None else _IDLE_RNG
    buf = _EventBuffer(record, chunk)
    total, stable = 0, False
    while True:
        left = max_steps - total
        budget = min(chunk, left) if record else left
        bufs = buf.arrays()
        done, stable = _lll_run(out.r, out.mu, params.T, code, budget, rng, record, *bufs)
        buf.keep(bufs, done)
        total += done
        if stable or total >= max_steps:
            break
    return out, buf.trace(terminated=bool(stable), initial_energy=e0, final_energy=energy(out), steps=total)
