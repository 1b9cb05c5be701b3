"""Per-run event logs shared by the lattice and sandpile simulators."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np


@dataclass(frozen=True)
class ToppleEvent:
    """One swap (LLL) or topple (sandpile).

    ``site`` is 1-based.  ``increment`` is log Q for LLL / LLL-SP, the
    sampled gamma for SSP and I for ASM.  ``mu_abs`` and ``q_inv_sq`` are NaN
    for the integer models.
    """

    step: int
    site: int
    increment: float
    mu_abs: float
    q_inv_sq: float
    energy_drop: float


def _empty(dtype=np.float64) -> np.ndarray:
    return np.zeros(0, dtype=dtype)


@dataclass
class RunTrace:
    """Columnar event log of one stabilization / reduction run.

    Events are stored as parallel arrays; iterate ``events`` for
    :class:`ToppleEvent` records.  When a run is executed with
    ``record=False`` the arrays are empty but ``steps`` and the energies are
    still filled in.
    """

    sites: np.ndarray = field(default_factory=lambda: _empty(np.int64))
    increments: np.ndarray = field(default_factory=_empty)
    mu_abs: np.ndarray = field(default_factory=_empty)
    q_inv_sq: np.ndarray = field(default_factory=_empty)
    energy_drop: np.ndarray = field(default_factory=_empty)
    terminated: bool = False
    initial_energy: float = 0.0
    final_energy: float = 0.0
    steps: int = 0

    def __len__(self) -> int:
        return self.steps

    @property
    def recorded(self) -> bool:
        return len(self.sites) == self.steps

    @property
    def events(self) -> Iterator[ToppleEvent]:
        for i in range(len(self.sites)):
            yield ToppleEvent(
                step=i + 1,
                site=int(self.sites[i]),
                increment=float(self.increments[i]),
                mu_abs=float(self.mu_abs[i]),
                q_inv_sq=float(self.q_inv_sq[i]),
                energy_drop=float(self.energy_drop[i]),
            )

    def energy_after(self) -> np.ndarray:
        """Energy after each recorded event, from the logged drops."""
        return self.initial_energy - np.cumsum(self.energy_drop)

    def to_csv(self, path) -> None:
        """Columns: step, site, increment_or_gamma, mu_abs, q_inv_sq, energy_after."""
        after = self.energy_after()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "site", "increment_or_gamma", "mu_abs", "q_inv_sq", "energy_after"])
            for i in range(len(self.sites)):
                w.writerow([
                    i + 1,
                    int(self.sites[i]),
                    repr(float(self.increments[i])),
                    repr(float(self.mu_abs[i])),
                    repr(float(self.q_inv_sq[i])),
                    repr(float(after[i])),
                ])


class _EventBuffer:
    """Chunked storage filled by the jitted kernels."""

    def __init__(self, record: bool, chunk: int):
        self.record = record
        self.chunk = chunk if record else 0
        self.parts: list[tuple[np.ndarray, ...]] = []

    def arrays(self):
        c = self.chunk
        return (
            np.zeros(c, dtype=np.int64),
            np.zeros(c),
            np.zeros(c),
            np.zeros(c),
            np.zeros(c),
        )

    def keep(self, bufs, count: int) -> None:
        if self.record and count:
            self.parts.append(tuple(b[:count].copy() for b in bufs))

    def trace(self, **kw) -> RunTrace:
        if self.parts:
            cols = [np.concatenate([p[j] for p in self.parts]) for j in range(5)]
        else:
            cols = [_empty(np.int64), _empty(), _empty(), _empty(), _empty()]
        return RunTrace(*cols, **kw)
