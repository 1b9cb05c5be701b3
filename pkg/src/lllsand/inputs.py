"""Seeded input sampling for the lattice and sandpile models."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .gso import GsoState
from .oracle import IntegerBasis
from .rng import random_bits
from .sandpile import IntConfig

KINDS = ("knapsack", "direct-gso", "sandpile-uniform")


@dataclass
class GeneratorSpec:
    kind: str
    n: int
    bits: Optional[int] = None  # knapsack; None means 10 n
    r_range: tuple = (0.0, 1.0)
    height_range: tuple = (0, 1)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.bits is not None and self.bits < 1:
            raise ValueError("bits must be >= 1")
        self.r_range = tuple(float(v) for v in self.r_range)
        self.height_range = tuple(int(v) for v in self.height_range)
        if self.r_range[0] > self.r_range[1] or self.height_range[0] > self.height_range[1]:
            raise ValueError("sampling interval is empty")

    @property
    def entry_bits(self) -> int:
        return self.bits if self.bits is not None else 10 * self.n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["r_range"] = list(self.r_range)
        d["height_range"] = list(self.height_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _require(spec: GeneratorSpec, kind: str) -> None:
    if spec.kind != kind:
        raise ValueError(f"generator spec has kind {spec.kind!r}, expected {kind!r}")


def knapsack_basis(spec: GeneratorSpec, rng: np.random.Generator) -> IntegerBasis:
    """Goldstein-Mayer style basis with ``|det| = X_1``.

    ``b_1 = (X_1, 0, ..., 0)`` and ``b_i = X_i e_1 + e_i`` for ``i >= 2``,
    every ``X_i`` uniform in ``[2^(bits-1), 2^bits)``.
    """
    _require(spec, "knapsack")
    bits, n = spec.entry_bits, spec.n
    xs = [(1 << (bits - 1)) + random_bits(rng, bits - 1) for _ in range(n)]
    rows = []
    for i in range(n):
        row = [0] * n
        row[0] = xs[i]
        if i > 0:
            row[i] = 1
        rows.append(row)
    return IntegerBasis(rows)


def direct_gso_sample(spec: GeneratorSpec, rng: np.random.Generator) -> GsoState:
    """i.i.d. ``r_i ~ U(r_range)`` and ``mu_ij ~ U[-1/2, 1/2]``."""
    _require(spec, "direct-gso")
    n = spec.n
    lo, hi = spec.r_range
    r = rng.uniform(lo, hi, size=n - 1) if hi > lo else np.full(n - 1, lo)
    mu = np.tril(rng.uniform(-0.5, 0.5, size=(n, n)), -1)
    return GsoState(r, mu)


def sandpile_input(spec: GeneratorSpec, rng: np.random.Generator) -> IntConfig:
    """i.i.d. integer heights, uniform on the closed ``height_range``."""
    _require(spec, "sandpile-uniform")
    lo, hi = spec.height_range
    return IntConfig(rng.integers(lo, hi, size=spec.n - 1, endpoint=True))
