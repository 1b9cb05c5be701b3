"""Seeded batch experiments and their on-disk record.

A run directory holds::

    manifest.json   full config, seed and file list; enough to rerun
    runs.csv        one row per trial: final profile, steps, RHF
    shape.csv       site, mean, stderr
    rhf_hist.csv    bin_lo, bin_hi, count
    summary.json    aggregate metrics

Trial ``t`` draws its input from ``stream(seed, t, INPUT)`` and its dynamics
from ``stream(seed, t, DYNAMICS)``, so results do not depend on how trials are
spread over worker processes.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .gso import GsoState, ReductionParams, lll_reduce, log_rhf
from .inputs import GeneratorSpec, direct_gso_sample, knapsack_basis, sandpile_input
from .oracle import exact_gso, gso_log_project
from .rng import DYNAMICS, INPUT, stream
from .sandpile import RealConfig, SandpileParams, asm_stabilize, lllsp_stabilize, ssp_stabilize
from .stats import average_shape, rhf_histogram, shape_metrics, ssp_rhf_check

MODELS = ("lll", "lllsp", "asm", "ssp")
LATTICE_MODELS = ("lll", "lllsp")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    model: str
    generator: GeneratorSpec
    params: dict = field(default_factory=dict)  # delta | T, I ; policy, max_steps
    trials: int = 500
    seed: int = 0
    parallelism: int = 1
    output_dir: Optional[str] = None

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        try:
            if self.model in LATTICE_MODELS:
                if self.generator.kind not in ("knapsack", "direct-gso"):
                    raise ConfigError(f"model {self.model} needs a lattice generator")
                self.reduction_params()
            else:
                if self.generator.kind != "sandpile-uniform":
                    raise ConfigError(f"model {self.model} needs the sandpile-uniform generator")
                self.sandpile_params().check_integer_model()
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    def reduction_params(self) -> ReductionParams:
        p = self.params
        return ReductionParams(float(p.get("delta", 0.7)), p.get("policy", "lowest"), p.get("max_steps"))

    def sandpile_params(self) -> SandpileParams:
        p = self.params
        return SandpileParams(p["T"], p.get("I"), p.get("policy", "lowest"), p.get("max_steps"))

    @property
    def threshold(self) -> float:
        if self.model in LATTICE_MODELS:
            return self.reduction_params().T
        return float(self.params["T"])

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "generator": self.generator.to_dict(),
            "params": dict(self.params),
            "trials": self.trials,
            "seed": self.seed,
            "parallelism": self.parallelism,
        }

    @classmethod
    def from_dict(cls, d: dict, output_dir: Optional[str] = None) -> "ExperimentConfig":
        return cls(d["model"], GeneratorSpec.from_dict(d["generator"]), dict(d.get("params", {})),
                   int(d["trials"]), int(d["seed"]), int(d.get("parallelism", 1)), output_dir)


@dataclass
class TrialResult:
    trial: int
    heights: np.ndarray
    terminated: bool
    steps: int
    log_rhf: float


def lattice_input(spec: GeneratorSpec, rng) -> GsoState:
    if spec.kind == "knapsack":
        return gso_log_project(exact_gso(knapsack_basis(spec, rng)))
    return direct_gso_sample(spec, rng)


def run_trial(config: ExperimentConfig, trial: int) -> TrialResult:
    spec, model = config.generator, config.model
    src, dyn = stream(config.seed, trial, INPUT), stream(config.seed, trial, DYNAMICS)
    if model in LATTICE_MODELS:
        params = config.reduction_params()
        state = lattice_input(spec, src)
        if model == "lll":
            out, trace = lll_reduce(state, params, dyn, record=False)
            heights = out.r
        else:
            sp = SandpileParams(T=params.T, policy=params.policy, max_steps=params.max_steps)
            out, trace = lllsp_stabilize(RealConfig.from_gso(state), params.delta, sp, dyn, record=False)
            heights = out.heights
        return TrialResult(trial, heights, trace.terminated, trace.steps, log_rhf(heights))
    params = config.sandpile_params()
    cfg = sandpile_input(spec, src)
    if model == "asm":
        try:
            out, counts = asm_stabilize(cfg, params, dyn)
        except RuntimeError:
            return TrialResult(trial, cfg.heights.astype(float), False, -1, math.nan)
        steps, done = int(counts.sum()), True
    else:
        out, trace = ssp_stabilize(cfg, params, dyn, record=False)
        steps, done = trace.steps, trace.terminated
    return TrialResult(trial, out.heights.astype(float), done, steps, log_rhf(out.heights))


def _run_block(args):
    config_dict, trials = args
    config = ExperimentConfig.from_dict(config_dict)
    return [run_trial(config, t) for t in trials]


def run_trials(config: ExperimentConfig) -> list[TrialResult]:
    """Execute every trial; output order is by trial index whatever the parallelism."""
    config.validate()
    ids = list(range(config.trials))
    if config.parallelism == 1:
        return [run_trial(config, t) for t in ids]
    blocks = [ids[i::config.parallelism] for i in range(config.parallelism)]
    with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
        parts = pool.map(_run_block, [(config.to_dict(), b) for b in blocks])
        results = [r for part in parts for r in part]
    return sorted(results, key=lambda r: r.trial)


def _f(x: float) -> str:
    return repr(float(x))


def write_outputs(config: ExperimentConfig, results: list[TrialResult], out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = config.generator.n
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "terminated", "steps", "log_rhf", "rhf"] + [f"r_{i}" for i in range(1, n)])
        for r in results:
            w.writerow([r.trial, int(r.terminated), r.steps, _f(r.log_rhf), _f(math.exp(r.log_rhf))]
                       + [_f(v) for v in r.heights])
    finals = [r.heights for r in results]
    profile = average_shape(finals)
    with open(out / "shape.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site", "mean", "stderr"])
        for i in range(n - 1):
            w.writerow([i + 1, _f(profile.mean_r[i]), _f(profile.stderr_r[i])])
    hist = rhf_histogram(finals)
    with open(out / "rhf_hist.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
            w.writerow([_f(lo), _f(hi), int(c)])
    unfinished = [r.trial for r in results if not r.terminated]
    summary = {
        "model": config.model,
        "n": n,
        "trials": len(results),
        "threshold": config.threshold,
        "terminated": len(results) - len(unfinished),
        "unfinished_trials": unfinished,
        "rhf_mean": hist.mean,
        "rhf_std": hist.std,
        "log_rhf_mean": math.fsum(r.log_rhf for r in results) / len(results),
        "steps_mean": math.fsum(r.steps for r in results) / len(results),
    }
    if n >= 40:
        m = shape_metrics(profile, config.threshold)
        summary["shape"] = {"plateau": m.plateau, "threshold_gap": m.threshold_gap,
                            "boundary_gap": m.boundary_gap, "onset_left": m.onset_left,
                            "onset_right": m.onset_right}
    if config.model == "ssp":
        t2 = ssp_rhf_check(finals, float(config.params["T"]), int(config.params["I"]))
        summary["thm2"] = {"mean_log_rhf": t2.mean_log_rhf, "max_log_rhf": t2.max_log_rhf,
                           "upper_bound": t2.upper_bound, "empirical_target": t2.empirical_target}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest = {
        "package": "lllsand",
        "version": __version__,
        "config": config.to_dict(),
        "rng": "numpy Philox4x64-10; key = seed + (trial << 64); counter[3] = purpose",
        "files": ["runs.csv", "shape.csv", "rhf_hist.csv", "summary.json"],
        "partial": bool(unfinished),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return summary


def load_runs(run_dir) -> tuple[dict, np.ndarray]:
    """Manifest and the ``trials x (n-1)`` matrix of final profiles."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    with open(run_dir / "runs.csv") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    first = header.index("r_1")
    finals = np.array([[float(v) for v in row[first:]] for row in body])
    return manifest, finals
