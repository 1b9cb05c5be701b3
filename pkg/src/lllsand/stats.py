"""Aggregation of run outputs and the empirical theorem checks.

Sums over runs go through :func:`math.fsum`, which is correctly rounded, so
every statistic here is bit-identical under any permutation of the runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats as sps

from .gso import _heights, energy, energy_floor, log_rhf
from .inputs import GeneratorSpec, direct_gso_sample
from .rng import DYNAMICS, INPUT, stream
from .sandpile import RealConfig, SandpileParams, lllsp_stabilize
from .trace import RunTrace


@dataclass
class ShapeProfile:
    n: int
    mean_r: np.ndarray
    stderr_r: np.ndarray
    trials: int


@dataclass
class ShapeMetrics:
    plateau: float
    threshold_gap: float
    boundary_gap: float
    onset_left: int
    onset_right: int


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total: int
    mean: float
    std: float


@dataclass
class MixingReport:
    density: np.ndarray
    density_edges: np.ndarray
    autocorr: Optional[np.ndarray]  # lags 0..L, None when the trace has zero variance
    length: int
    m_hat: float
    sigma_hat: float

    @property
    def degenerate(self) -> bool:
        return self.autocorr is None


def _matrix(runs) -> np.ndarray:
    rows = [np.asarray(_heights(r), dtype=np.float64) for r in runs]
    if not rows:
        raise ValueError("no runs to aggregate")
    n = rows[0].size
    if any(r.size != n for r in rows):
        raise ValueError("runs have different dimensions")
    return np.vstack(rows)


def _fmean(x) -> float:
    x = list(map(float, x))
    return math.fsum(x) / len(x)


def _fstd(x, mean: float) -> float:
    x = list(map(float, x))
    if len(x) < 2:
        return 0.0
    return math.sqrt(math.fsum((v - mean) ** 2 for v in x) / (len(x) - 1))


def average_shape(runs) -> ShapeProfile:
    """Per-site mean and standard error over a collection of final configurations."""
    a = _matrix(runs)
    t = a.shape[0]
    mean = np.array([_fmean(a[:, j]) for j in range(a.shape[1])])
    sd = np.array([_fstd(a[:, j], mean[j]) for j in range(a.shape[1])])
    return ShapeProfile(a.shape[1] + 1, mean, sd / math.sqrt(t), t)


def middle_slice(n: int) -> slice:
    """Middle third of the sites ``1..n-1`` as a 0-based slice."""
    m = n - 1
    return slice(m // 3, m - m // 3)


def shape_metrics(profile: ShapeProfile, T: float) -> ShapeMetrics:
    """Plateau level, gaps and where the boundary layers begin.

    Scanning outward from the middle, ``onset_left`` is the innermost site of
    the left half whose mean differs from the plateau by more than three
    standard errors; ``onset_right`` is its mirror in the right half.  With
    no such site the onset sits at the end of the profile.
    """
    m = profile.n - 1
    mid = profile.mean_r[middle_slice(profile.n)]
    plateau = _fmean(mid)
    boundary = 0.5 * (profile.mean_r[0] + profile.mean_r[-1])
    off = np.abs(profile.mean_r - plateau) > 3.0 * profile.stderr_r
    half = m // 2
    left = next((i + 1 for i in range(half - 1, -1, -1) if off[i]), 1)
    right = next((i + 1 for i in range(m - half, m) if off[i]), m)
    return ShapeMetrics(plateau, T - plateau, float(plateau - boundary), left, right)


def rhf_values(runs) -> np.ndarray:
    return np.array([math.exp(log_rhf(r)) for r in _matrix(runs)])


def rhf_histogram(runs, bins: int = 40) -> Histogram:
    """Histogram of the per-run RHF (computed per run, then aggregated)."""
    vals = rhf_values(runs)
    counts, edges = np.histogram(np.sort(vals), bins=bins)
    mean = _fmean(vals)
    return Histogram(edges, counts, int(counts.sum()), mean, _fstd(vals, mean))


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS distance needs nonempty samples")
    return float(sps.ks_2samp(a, b).statistic)


def ks_critical(n1: int, n2: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample KS critical value ``c(alpha) sqrt((n1+n2)/(n1 n2))``."""
    c = math.sqrt(-0.5 * math.log(alpha / 2))
    return c * math.sqrt((n1 + n2) / (n1 * n2))


def autocorrelation(x, max_lag: int) -> Optional[np.ndarray]:
    """Biased autocorrelation estimator for lags ``0..max_lag``; None for constant input."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if denom == 0.0:
        return None
    out = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        out[lag] = float(np.dot(d[: x.size - lag], d[lag:])) / denom
    return out


def mu_trace_report(trace: RunTrace, L: int = 50, bins: int = 50) -> MixingReport:
    """Density, autocorrelation and log-moment diagnostics of ``|mu_k(i)|``."""
    mu = np.asarray(trace.mu_abs, dtype=float)
    if mu.size <= 10 * L:
        raise ValueError(f"trace of length {mu.size} is too short for max lag {L}")
    density, edges = np.histogram(mu, bins=bins, range=(0.0, 0.5), density=True)
    with np.errstate(divide="ignore"):
        x = -2.0 * np.log(mu)
    return MixingReport(density, edges, autocorrelation(mu, L), mu.size,
                        float(x.mean()), float(x.std(ddof=1)))


# ---------------------------------------------------------------------------
# comparisons


@dataclass
class CompareReport:
    site_diff: np.ndarray  # per-site mean difference, all sites
    max_middle_diff: float
    rhf_mean_a: float
    rhf_mean_b: float
    ks: float
    ks_critical: float
    site_tol: float
    rhf_tol: float

    @property
    def rhf_diff(self) -> float:
        return abs(self.rhf_mean_a - self.rhf_mean_b)

    @property
    def passed(self) -> bool:
        return (self.max_middle_diff <= self.site_tol and self.rhf_diff <= self.rhf_tol
                and self.ks < self.ks_critical)


def compare_runs(runs_a, runs_b, site_tol: float = 0.01, rhf_tol: float = 0.001,
                 alpha: float = 0.01) -> CompareReport:
    pa, pb = average_shape(runs_a), average_shape(runs_b)
    if pa.n != pb.n:
        raise ValueError(f"dimension mismatch: {pa.n} vs {pb.n}")
    diff = pa.mean_r - pb.mean_r
    ra, rb = rhf_values(runs_a), rhf_values(runs_b)
    return CompareReport(
        site_diff=diff,
        max_middle_diff=float(np.max(np.abs(diff[middle_slice(pa.n)]))),
        rhf_mean_a=_fmean(ra),
        rhf_mean_b=_fmean(rb),
        ks=ks_distance(ra, rb),
        ks_critical=ks_critical(ra.size, rb.size, alpha),
        site_tol=site_tol,
        rhf_tol=rhf_tol,
    )


# ---------------------------------------------------------------------------
# theorem checks


@dataclass
class Thm2Report:
    T: float
    I: int
    mean_log_rhf: float
    max_log_rhf: float
    upper_bound: float  # T/2 - I/(2 e^2)
    empirical_target: float  # T/2 - I/8

    def passed(self, tol: float = 5.0) -> bool:
        return (self.mean_log_rhf <= self.upper_bound
                and abs(self.mean_log_rhf - self.empirical_target) <= tol
                and self.max_log_rhf <= self.T / 2)


def ssp_rhf_check(runs, T: float, I: int) -> Thm2Report:
    logs = [log_rhf(r) for r in _matrix(runs)]
    return Thm2Report(T, I, _fmean(logs), max(logs), T / 2 - I / (2 * math.e**2), T / 2 - I / 8)


def sample_with_energy(n: int, target: float, rng: np.random.Generator) -> RealConfig:
    """LLL-SP input with uniform mu's and heights rescaled to energy ``target``."""
    state = direct_gso_sample(GeneratorSpec("direct-gso", n, r_range=(0.0, 1.0)), rng)
    r = state.r * (target / energy(state.r))
    return RealConfig(r, state.subdiagonal)


Runner = Callable[[RealConfig, float, int, np.random.Generator], tuple]


def _lllsp_runner(config, delta, max_steps, rng):
    return lllsp_stabilize(config, delta, SandpileParams(T=0.0, max_steps=max_steps), rng)


@dataclass
class Thm3Report:
    n: int
    delta: float
    energy: float
    floor: float  # H
    steps: int  # N
    not_terminated: np.ndarray
    f_n: np.ndarray
    energy_residual: float  # worst relative |E_final - (E_0 - sum drops)|

    @property
    def fraction_not_terminated(self) -> float:
        return float(self.not_terminated.mean())

    @property
    def mean_increment(self) -> float:
        """Average of ``F_N / N`` over trials."""
        return float(self.f_n.mean() / self.steps)


def termination_check_thm3(n: int = 40, delta: float = 0.5, target_energy: float = 1e6,
                           trials: int = 200, seed: int = 0,
                           runner: Optional[Runner] = None) -> Thm3Report:
    """Run LLL-SP for ``N = E/4`` steps per trial and count unfinished runs."""
    T = -0.5 * math.log(delta)
    H = energy_floor(n, T)
    if not target_energy > 10 * H:
        raise ValueError(f"need E > 10 H = {10 * H:.6g}, got {target_energy:.6g}")
    runner = runner or _lllsp_runner
    N = int(target_energy // 4)
    alive, fn = np.zeros(trials, dtype=bool), np.zeros(trials)
    worst = 0.0
    for t in range(trials):
        cfg = sample_with_energy(n, target_energy, stream(seed, t, INPUT))
        out, trace = runner(cfg, delta, N, stream(seed, t, DYNAMICS))
        alive[t] = not trace.terminated
        with np.errstate(divide="ignore"):
            fn[t] = float(np.sum(-2.0 * np.log(trace.mu_abs)))
        booked = trace.initial_energy - math.fsum(trace.energy_drop)
        worst = max(worst, abs(energy(out) - booked) / max(1.0, abs(trace.initial_energy)))
    return Thm3Report(n, delta, target_energy, H, N, alive, fn, worst)


@dataclass
class OptimalDeltaReport:
    n: int
    delta: float
    eps: float
    eta: float
    d: float
    budgets: np.ndarray
    terminated: np.ndarray
    steps: np.ndarray

    @property
    def fraction_terminated(self) -> float:
        return float(self.terminated.mean())

    @property
    def passed(self) -> bool:
        return self.fraction_terminated >= 1 - self.eta


def optimal_delta_check(trials: int = 200, eta: float = 0.01, eps: float = 0.1, n: int = 20,
                        target_energy: float = 1e4, seed: int = 0, delta: float = 0.75,
                        budget: Optional[int] = None) -> OptimalDeltaReport:
    """LLL-SP at the optimal parameter with a ``10 E / d`` step budget.

    ``d = -log(3/4 + (1 - eps)^2 / 4)``.  For ``delta < 3/4`` the budget is the
    deterministic ``E / log(1 / (delta + 1/4))`` bound instead.  An explicit
    ``budget`` overrides both.
    """
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    d = -math.log(0.75 + (1 - eps) ** 2 / 4)
    budgets = np.zeros(trials, dtype=np.int64)
    term = np.zeros(trials, dtype=bool)
    steps = np.zeros(trials, dtype=np.int64)
    for t in range(trials):
        cfg = sample_with_energy(n, target_energy, stream(seed, t, INPUT))
        e = energy(cfg)
        if budget is not None:
            b = int(budget)
        elif delta < 0.75:
            b = int(math.ceil(e / -math.log(delta + 0.25)))
        else:
            b = int(math.ceil(10 * e / d))
        _, trace = lllsp_stabilize(cfg, delta, SandpileParams(T=0.0, max_steps=b),
                                   stream(seed, t, DYNAMICS), record=False)
        budgets[t], term[t], steps[t] = b, trace.terminated, trace.steps
    return OptimalDeltaReport(n, delta, eps, eta, d, budgets, term, steps)
