"""Replication driver and the :class:`Estimate` return type."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .pointproc import SeedSpec

__all__ = ["Estimate", "replicate", "combined_stderr", "agree", "DEFAULT_TOLERANCE"]

DEFAULT_TOLERANCE = 3.0


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with its standard error."""

    mean: float
    stderr: float
    reps: int
    seed: str = ""

    @classmethod
    def from_values(cls, values, seed: str = "") -> "Estimate":
        """Mean and ``sd / sqrt(reps)``, summed in index order with ``math.fsum``."""
        v = np.asarray(values, dtype=float).reshape(-1)
        reps = len(v)
        if reps < 2:
            raise ValueError("an estimate needs at least 2 replications")
        mean = math.fsum(v.tolist()) / reps
        var = math.fsum(((v - mean) ** 2).tolist()) / (reps - 1)
        return cls(mean, math.sqrt(var / reps), reps, seed)

    @classmethod
    def exact(cls, value: float, reps: int, seed: str = "") -> "Estimate":
        return cls(float(value), 0.0, reps, seed)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "reps": self.reps, "seed": self.seed}


def combined_stderr(*estimates: Estimate) -> float:
    return math.sqrt(math.fsum(e.stderr**2 for e in estimates))


def agree(a: Estimate, b: Estimate, tol: float = DEFAULT_TOLERANCE) -> bool:
    """``|a - b| <= tol`` combined standard errors."""
    return abs(a.mean - b.mean) <= tol * combined_stderr(a, b)


def _run_block(fn, master_seed: int, label: str, start: int, stop: int) -> list:
    return [fn(SeedSpec(master_seed, k, label)) for k in range(start, stop)]


def replicate(fn: Callable[[SeedSpec], object], reps: int, master_seed: int, label: str,
              workers: int = 1, block: int | None = None) -> np.ndarray:
    """Evaluate ``fn`` on replications ``0..reps-1``; rows come back in index order.

    ``fn`` receives the :class:`SeedSpec` of its replication and must be
    picklable when ``workers > 1``. Results never depend on ``workers``.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    if workers <= 1 or reps < 2:
        return np.asarray(_run_block(fn, master_seed, label, 0, reps), dtype=float)
    block = block or max(1, math.ceil(reps / (4 * workers)))
    bounds = [(s, min(s + block, reps)) for s in range(0, reps, block)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_block, fn, master_seed, label, s, e) for s, e in bounds]
        rows = [row for f in futures for row in f.result()]
    return np.asarray(rows, dtype=float)
