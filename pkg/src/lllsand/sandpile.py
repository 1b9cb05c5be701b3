"""Sandpiles on the cycle A_n with sink v_n: ASM, SSP and LLL-SP.

Non-sink sites are ``1..n-1``; sites 1 and n-1 are both adjacent to the
sink, so sand pushed past either end disappears.  A topple at site ``k``
removes ``2x`` from ``k`` and adds ``x`` to each existing neighbour, where
``x`` is ``I`` (ASM), a uniform draw from ``{1..I}`` (SSP) or ``log Q_k``
(LLL-SP).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numba
import numpy as np

from .gso import (GsoState, _first_hint, _IDLE_RNG, _log_q, _next_hint, _select, default_max_steps, energy,
                  policy_code, size_reduce)
from .trace import RunTrace, _EventBuffer


@dataclass
class SandpileParams:
    """``T`` threshold, ``I`` increment bound (ASM/SSP only)."""

    T: float
    I: Optional[int] = None
    policy: str = "lowest"
    max_steps: Optional[int] = None

    def __post_init__(self):
        policy_code(self.policy)

    def check_integer_model(self) -> None:
        if self.I is None or int(self.I) != self.I or int(self.T) != self.T:
            raise ValueError("ASM/SSP need integer T and I")
        if not (0 < self.I <= self.T / 2):
            raise ValueError(f"need 0 < I <= T/2, got T={self.T}, I={self.I}")


@dataclass
class IntConfig:
    heights: np.ndarray

    def __post_init__(self):
        self.heights = np.array(self.heights, dtype=np.int64).reshape(-1)

    @property
    def n(self) -> int:
        return self.heights.size + 1

    def is_stable(self, T) -> bool:
        return bool(np.all(self.heights <= T))

    def key(self) -> tuple:
        return tuple(int(v) for v in self.heights)

    def to_list(self) -> list:
        return [int(v) for v in self.heights]

    def __eq__(self, other):
        return isinstance(other, IntConfig) and np.array_equal(self.heights, other.heights)


@dataclass
class RealConfig:
    """LLL-SP configuration: heights ``r_k`` and ``mu_k = mu_{k+1,k}``."""

    heights: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.heights = np.array(self.heights, dtype=np.float64).reshape(-1)
        self.mu = np.array(self.mu, dtype=np.float64).reshape(-1)
        if self.mu.shape != self.heights.shape:
            raise ValueError("heights and mu must both have n-1 entries")
        if np.any(np.abs(self.mu) > 0.5):
            raise ValueError("LLL-SP needs |mu_k| <= 1/2")

    @property
    def n(self) -> int:
        return self.heights.size + 1

    @classmethod
    def from_gso(cls, state: GsoState) -> "RealConfig":
        reduced = size_reduce(state)
        return cls(reduced.r, reduced.subdiagonal)

    def to_list(self) -> dict:
        return {"heights": [float(v) for v in self.heights], "mu": [float(v) for v in self.mu]}


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True)
def _int_run(h, T, I, stochastic, policy, budget, rng, record, counts, sites, incs):
    m = h.shape[0]
    hint = _first_hint(policy, m)
    steps = 0
    while True:
        k = _select(h, T, policy, rng, hint)
        if k < 0:
            return steps, True
        if steps >= budget:
            return steps, False
        g = rng.integers(1, I + 1) if stochastic else I
        h[k] -= 2 * g
        if k >= 1:
            h[k - 1] += g
        if k + 1 < m:
            h[k + 1] += g
        counts[k] += 1
        if record:
            sites[steps] = k + 1
            incs[steps] = g
        steps += 1
        hint = _next_hint(policy, k, m)


@numba.njit(cache=True)
def _lllsp_run(r, mu, T, policy, budget, rng, record, sites, incs, mus, qinv, drops):
    m = r.shape[0]
    hint = _first_hint(policy, m)
    steps = 0
    while True:
        k = _select(r, T, policy, rng, hint)
        if k < 0:
            return steps, True
        if steps >= budget:
            return steps, False
        u = mu[k]
        lq = _log_q(r[k], u)
        r[k] -= 2.0 * lq
        if k >= 1:
            r[k - 1] += lq
            mu[k - 1] = rng.random() - 0.5
        mu[k] = rng.random() - 0.5
        if k + 1 < m:
            r[k + 1] += lq
            mu[k + 1] = rng.random() - 0.5
        if record:
            sites[steps] = k + 1
            incs[steps] = lq
            mus[steps] = abs(u)
            qinv[steps] = np.exp(-2.0 * lq)
            drops[steps] = 2.0 * lq
        steps += 1
        hint = _next_hint(policy, k, m)


# ---------------------------------------------------------------------------
# single topples


def _site(k: int, n: int) -> int:
    if not (1 <= k <= n - 1):
        raise IndexError(f"site {k} outside 1..{n - 1}")
    return k - 1


def _push(h: np.ndarray, i: int, amount) -> None:
    h[i] -= 2 * amount
    if i >= 1:
        h[i - 1] += amount
    if i + 1 < h.size:
        h[i + 1] += amount


def asm_topple(config: IntConfig, k: int, params: SandpileParams) -> IntConfig:
    i = _site(k, config.n)
    h = config.heights.copy()
    _push(h, i, int(params.I))
    return IntConfig(h)


def ssp_topple(config: IntConfig, k: int, params: SandpileParams, rng) -> tuple[IntConfig, int]:
    i = _site(k, config.n)
    gamma = int(rng.integers(1, int(params.I) + 1))
    h = config.heights.copy()
    _push(h, i, gamma)
    return IntConfig(h), gamma


# ---------------------------------------------------------------------------
# stabilization


def _int_budget(config: IntConfig, params: SandpileParams) -> int:
    if params.max_steps is not None:
        return int(params.max_steps)
    # each topple lowers the energy by >= 2; the energy of a stable config is >= that of
    # min(heights) everywhere
    e0 = energy(config)
    lo = min(0, int(config.heights.min()))
    floor = lo * (config.n**3 - config.n) // 6
    return max(0, (e0 - floor) // 2) + 10 * config.n


def _int_stabilize(config, params, rng, stochastic, record, chunk=1 << 16):
    params.check_integer_model()
    h = config.heights.copy()
    code = policy_code(params.policy)
    rng = rng if rng is not None else _IDLE_RNG
    counts = np.zeros(h.size, dtype=np.int64)
    max_steps = _int_budget(config, params)
    parts = []
    total, stable = 0, False
    while True:
        left = max_steps - total
        budget = min(chunk, left) if record else left
        size = budget if record else 0
        sites = np.zeros(size, dtype=np.int64)
        incs = np.zeros(size, dtype=np.int64)
        done, stable = _int_run(h, int(params.T), int(params.I), stochastic, code, budget, rng,
                                record, counts, sites, incs)
        if record and done:
            parts.append((sites[:done], incs[:done]))
        total += done
        if stable or total >= max_steps:
            break
    if parts:
        sites = np.concatenate([p[0] for p in parts])
        incs = np.concatenate([p[1] for p in parts]).astype(np.float64)
    else:
        sites, incs = np.zeros(0, dtype=np.int64), np.zeros(0)
    nan = np.full(sites.size, np.nan)
    out = IntConfig(h)
    trace = RunTrace(sites, incs, nan, nan.copy(), 2.0 * incs, terminated=bool(stable),
                     initial_energy=energy(config), final_energy=energy(out), steps=total)
    return out, trace, counts


def asm_stabilize(config: IntConfig, params: SandpileParams, rng=None,
                  *, return_trace: bool = False):
    """Stabilize with fixed increment ``I``.

    Returns ``(config, topple_counts)`` where ``topple_counts[k-1]`` is the
    number of topples at site ``k``.  ``rng`` is only consulted by the
    ``random`` policy.
    """
    out, trace, counts = _int_stabilize(config, params, rng, False, return_trace)
    if not trace.terminated:
        raise RuntimeError("ASM stabilization exceeded max_steps")
    return (out, counts, trace) if return_trace else (out, counts)


def ssp_stabilize(config: IntConfig, params: SandpileParams, rng, *, record: bool = True):
    """Stabilize with increments drawn uniformly from ``{1..I}``."""
    out, trace, _ = _int_stabilize(config, params, rng, True, record)
    return out, trace


def asm_add(r: IntConfig, s: IntConfig, params: SandpileParams) -> IntConfig:
    """``r (+) s``: stabilization of the pointwise sum."""
    if r.n != s.n:
        raise ValueError(f"dimension mismatch: {r.n} vs {s.n}")
    return asm_stabilize(IntConfig(r.heights + s.heights), params)[0]


def _check_generator(g: IntConfig, params: SandpileParams) -> None:
    d = math.gcd(int(params.T), int(params.I))
    if not any(math.gcd(int(v), d) == 1 for v in g.heights):
        raise ValueError("some g_i must be coprime to gcd(T, I)")


def asm_recurrent_cycle(n: int, params: SandpileParams, g: IntConfig,
                        start: Optional[IntConfig] = None, max_iter: int = 1_000_000):
    """States of the eventual cycle of ``m -> g (+) m`` with visit frequencies.

    Returns a list of ``(IntConfig, Fraction)`` in visiting order.
    """
    params.check_integer_model()
    if g.n != n:
        raise ValueError("g has the wrong dimension")
    _check_generator(g, params)
    s = start if start is not None else IntConfig(np.zeros(n - 1, dtype=np.int64))
    s = asm_stabilize(s, params)[0]
    seen: dict[tuple, int] = {}
    order: list[tuple] = []
    for _ in range(max_iter):
        key = s.key()
        if key in seen:
            cycle = order[seen[key]:]
            visits = {c: 0 for c in cycle}
            # walk the cycle once more from the current state to count visits
            for _ in range(len(cycle)):
                visits[s.key()] += 1
                s = asm_add(g, s, params)
            total = sum(visits.values())
            return [(IntConfig(c), Fraction(visits[c], total)) for c in cycle]
        seen[key] = len(order)
        order.append(key)
        s = asm_add(g, s, params)
    raise RuntimeError("no cycle found within max_iter")


def ssp_steady_state_sample(n: int, params: SandpileParams, g: IntConfig, burn_in: int,
                            n_samples: int, rng, start: Optional[IntConfig] = None,
                            thin: int = 1) -> list[IntConfig]:
    """Iterate ``s -> stabilize(s + g)``, keep every ``thin``-th state after ``burn_in``."""
    params.check_integer_model()
    _check_generator(g, params)
    s = start if start is not None else IntConfig(np.zeros(n - 1, dtype=np.int64))
    out = []
    it = 0
    while len(out) < n_samples:
        s, trace = ssp_stabilize(IntConfig(s.heights + g.heights), params, rng, record=False)
        if not trace.terminated:
            raise RuntimeError("SSP stabilization exceeded max_steps")
        it += 1
        if it > burn_in and (it - burn_in) % thin == 0:
            out.append(s)
    return out


def lllsp_stabilize(config: RealConfig, delta: float, params: Optional[SandpileParams] = None,
                    rng=None, *, record: bool = True, chunk: int = 1 << 16):
    """LLL sandpile: topple by ``log Q_k`` and resample the neighbouring mu's.

    ``params.T`` is ignored; the threshold is ``-1/2 log delta``.  Returns
    ``(RealConfig, RunTrace)``; when ``max_steps`` runs out the trace has
    ``terminated=False``.
    """
    if not (0.0 < delta <= 0.75):
        raise ValueError("delta must lie in (0, 3/4]")
    T = -0.5 * math.log(delta)
    policy = params.policy if params is not None else "lowest"
    code = policy_code(policy)
    if rng is None:
        raise ValueError("LLL-SP needs a random generator")
    r = config.heights.copy()
    mu = config.mu.copy()
    e0 = energy(r)
    if params is not None and params.max_steps is not None:
        max_steps = int(params.max_steps)
    else:
        max_steps = default_max_steps(e0, config.n, delta)
    buf = _EventBuffer(record, chunk)
    total, stable = 0, False
    while True:
        left = max_steps - total
        budget = min(chunk, left) if record else left
        bufs = buf.arrays()
        done, stable = _lllsp_run(r, mu, T, code, budget, rng, record, *bufs)
        buf.keep(bufs, done)
        total += done
        if stable or total >= max_steps:
            break
    out = RealConfig(r, mu)
    return out, buf.trace(terminated=bool(stable), initial_energy=e0, final_energy=energy(r), steps=total)


# ---------------------------------------------------------------------------
# parallelepiped limit distribution


@dataclass
class Distribution:
    """Weights on the offset box ``{0..I-1}^(n-1)``.

    Offset ``o`` sits at ``corner - L o`` in configuration space, where ``L``
    is the path Laplacian (2 on the diagonal, -1 beside it).
    """

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")

    @property
    def I(self) -> int:
        return self.weights.shape[0]

    @property
    def n(self) -> int:
        return self.weights.ndim + 1

    @property
    def total(self) -> float:
        return float(self.weights.sum())


@dataclass
class ConvergenceReport:
    iterations: int
    tv_change: float
    fixed_point_residual: float
    converged: bool


def _push_axis(w: np.ndarray, axis: int) -> np.ndarray:
    """Move the frame one unit along ``axis``; the face that falls out topples afresh."""
    I = w.shape[axis]
    v = np.moveaxis(w, axis, 0)
    out = np.empty_like(v)
    out[:-1] = v[1:]
    out[-1] = 0.0
    out += v[0][None, ...] / I
    return np.moveaxis(out, 0, axis)


def push_operator(dist: Distribution, k: int) -> Distribution:
    """Apply the frame-relative toppling operator at site ``k`` (1-based)."""
    i = _site(k, dist.n)
    return Distribution(_push_axis(dist.weights, i))


def _tv(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(a - b).sum())


def parallelepiped_limit(n: int, I: int, tol: float = 1e-13, max_iter: int = 1_000_000):
    """Power-iterate ``T_1 T_2 ... T_{n-1}`` on the offset box to its fixed point."""
    if n < 2 or I < 1:
        raise ValueError("need n >= 2 and I >= 1")
    if I ** (n - 1) > 10**7:
        raise ValueError("state space I^(n-1) exceeds 1e7")
    shape = (I,) * (n - 1)
    w = np.full(shape, 1.0 / I ** (n - 1))
    tv = math.inf
    it = 0
    while it < max_iter:
        prev = w
        for axis in range(n - 1):
            w = _push_axis(w, axis)
        it += 1
        tv = _tv(w, prev)
        if tv < tol:
            break
    w = w / w.sum()
    residual = max(_tv(_push_axis(w, a), w) for a in range(n - 1))
    report = ConvergenceReport(it, tv, residual, tv < tol)
    if not report.converged:
        raise RuntimeError(f"parallelepiped iteration did not converge: {report}")
    return Distribution(w), report


def anchored_configs(dist: Distribution, anchor) -> dict[tuple, float]:
    """Map each offset's weight onto configuration ``anchor - L o``."""
    anchor = np.asarray(anchor, dtype=np.int64)
    out: dict[tuple, float] = {}
    for o in np.ndindex(*dist.weights.shape):
        w = float(dist.weights[o])
        if w == 0.0:
            continue
        o = np.array(o, dtype=np.int64)
        lo = 2 * o
        lo[1:] -= o[:-1]
        lo[:-1] -= o[1:]
        key = tuple(int(v) for v in anchor - lo)
        out[key] = out.get(key, 0.0) + w
    return out


def stabilize_distribution(configs: dict[tuple, float], params: SandpileParams) -> dict[tuple, float]:
    """Exact output law of SSP (lowest-site policy) for a finite input law."""
    params.check_integer_model()
    T, I = int(params.T), int(params.I)
    pending: dict[tuple, float] = dict(configs)
    heap = [(-energy(np.array(c, dtype=np.int64)), c) for c in pending]
    heapq.heapify(heap)
    stable: dict[tuple, float] = {}
    while heap:
        _, c = heapq.heappop(heap)
        p = pending.pop(c, None)
        if p is None:
            continue
        k = next((i for i, v in enumerate(c) if v > T), None)
        if k is None:
            stable[c] = stable.get(c, 0.0) + p
            continue
        for gamma in range(1, I + 1):
            h = np.array(c, dtype=np.int64)
            _push(h, k, gamma)
            child = tuple(int(v) for v in h)
            if child in pending:
                pending[child] += p / I
            else:
                pending[child] = p / I
                heapq.heappush(heap, (-energy(h), child))
    return stable


def ssp_corner_density(dist: Distribution, n: int, I: int, params: SandpileParams, anchor=None,
                       *, method: str = "exact", samples: int = 100_000, rng=None) -> float:
    """Largest point mass after stabilizing ``dist`` anchored at ``(T, ..., T)``."""
    if dist.n != n or dist.I != I or params.I != I:
        raise ValueError("distribution, n, I and params disagree")
    anchor = np.full(n - 1, int(params.T), dtype=np.int64) if anchor is None else np.asarray(anchor)
    start = anchored_configs(dist, anchor)
    if method == "exact":
        law = stabilize_distribution(start, params)
        return max(law.values())
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    if rng is None:
        raise ValueError("Monte Carlo estimate needs rng")
    keys = list(start)
    probs = np.array([start[k] for k in keys])
    picks = rng.choice(len(keys), size=samples, p=probs / probs.sum())
    counts: dict[tuple, int] = {}
    for idx in picks:
        out, _ = ssp_stabilize(IntConfig(keys[idx]), params, rng, record=False)
        key = out.key()
        counts[key] = counts.get(key, 0) + 1
    return max(counts.values()) / samples
