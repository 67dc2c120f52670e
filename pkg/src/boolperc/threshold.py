"""Critical intensity from rectangle crossings, and slab crossing experiments.

The operational threshold is the intensity at which the long-way crossing
probability of a ``3a x a`` rectangle (``3a x a^(d-1)`` box) equals one
half, tracked over increasing ``a``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .errors import DimensionError, NoBracket
from .geom import box_distance, first_passage_level, terminal_graph
from .measure import RadiusMeasure, unit_ball_volume
from .montecarlo import Estimate, replicate
from .pointproc import Configuration, PoissonStream, Window

__all__ = [
    "ThresholdResult",
    "crossing_probability",
    "crossing_levels",
    "estimate_tc",
    "default_bracket",
    "slab_crossing",
    "slab_crossing_curve",
]


def _box_crossing_graph(c: Configuration, lo, hi, axis: int):
    """Grains meeting the box ``[lo, hi]``, with terminals on its two faces normal to ``axis``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x, r = c.positions, c.radii
    meets = box_distance(x, lo, hi) <= r
    sub = c.subset(meets)
    x, r = sub.positions, sub.radii
    face_hi = hi.copy()
    face_hi[axis] = lo[axis]
    face_lo = lo.copy()
    face_lo[axis] = hi[axis]
    near = box_distance(x, lo, face_hi) <= r
    far = box_distance(x, face_lo, hi) <= r
    return terminal_graph(x, r, near, far, 2 * c.margin), sub


def _rectangle(a: float, d: int):
    return np.zeros(d), np.array([3 * a] + [a] * (d - 1), dtype=float)


def _rect_window(a: float, d: int) -> Window:
    lo, hi = _rectangle(a, d)
    return Window.rect(lo, hi)


def _check_size(F: RadiusMeasure, a: float) -> None:
    if not a > 4 * F.support_bound:
        raise ValueError(f"rectangle size {a} must exceed 4b = {4 * F.support_bound}")


def _crossing_rep(s, F, t, a, window):
    c = PoissonStream(F, window, s).prefix(t)
    lo, hi = _rectangle(a, window.d)
    g, _ = _box_crossing_graph(c, lo, hi, 0)
    return float(g.connected)


def crossing_probability(F: RadiusMeasure, t: float, a: float, d: int, reps: int, seed: int,
                         workers: int = 1, label: str | None = None) -> Estimate:
    """Probability of a long-way crossing of ``[0, 3a] x [0, a]^(d-1)``.

    Only grains meeting the box are used, so paths never leave it.
    """
    _check_size(F, a)
    if not t > 0:
        raise ValueError("intensity must be > 0")
    label = label or f"crossing-a{a:g}"
    v = replicate(partial(_crossing_rep, F=F, t=t, a=a, window=_rect_window(a, d)),
                  reps, seed, label, workers)
    return Estimate.from_values(v, f"{seed}:{label}")


def _level_rep(s, F, a, window, t_start, t_max):
    stream = PoissonStream(F, window, s)
    lo, hi = _rectangle(a, window.d)
    t = t_start
    while True:
        t = min(t, t_max)
        c = stream.prefix(t)
        g, sub = _box_crossing_graph(c, lo, hi, 0)
        if g.connected:
            return first_passage_level(g, sub.births)
        if t >= t_max:
            return math.inf
        t *= 1.5


def crossing_levels(F: RadiusMeasure, a: float, d: int, reps: int, seed: int, t_max: float,
                    t_start: float | None = None, workers: int = 1,
                    label: str | None = None) -> np.ndarray:
    """Per replication, the smallest intensity at which the rectangle is crossed.

    Uses the same streams as :func:`crossing_probability`, so the crossing
    probability at ``t`` (same seed and label) is exactly the fraction of
    levels ``<= t``. Replications not crossed by ``t_max`` return ``inf``.
    """
    _check_size(F, a)
    label = label or f"crossing-a{a:g}"
    t_start = t_start or t_max / 64
    return replicate(partial(_level_rep, F=F, a=a, window=_rect_window(a, d),
                             t_start=t_start, t_max=t_max), reps, seed, label, workers)


def default_bracket(F: RadiusMeasure, d: int) -> tuple[float, float]:
    """``[0.05, 20]`` divided by the mean grain volume per unit intensity."""
    scale = unit_ball_volume(d) * F.moment(d)
    return 0.05 / scale, 20.0 / scale


@dataclass
class ThresholdResult:
    tc_hat: float
    ci_half_width: float
    sizes_used: list[float]
    per_size_tc: list[tuple[float, float, float]]
    tol: float = 0.01

    def to_dict(self) -> dict:
        return {
            "tc_hat": self.tc_hat,
            "ci_half_width": self.ci_half_width,
            "sizes_used": self.sizes_used,
            "per_size_tc": [{"size": a, "t_half": th, "stderr": se} for a, th, se in self.per_size_tc],
            "tol": self.tol,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["size", "t_half", "stderr"])
        for a, th, se in self.per_size_tc:
            w.writerow([format(a, ".17g"), format(th, ".17g"), format(se, ".17g")])
        return buf.getvalue()


def _bisect_half(levels: np.ndarray, lo: float, hi: float, tol: float) -> float:
    """Bisect ``t -> mean(levels <= t)`` for the level one half, to relative width ``tol``."""
    def p(t):
        return np.count_nonzero(levels <= t) / len(levels)

    if p(lo) >= 0.5 or p(hi) < 0.5:
        raise NoBracket(f"crossing probability is {p(lo):.3f} at {lo:.6g} and {p(hi):.3f} at "
                        f"{hi:.6g}; one half is not bracketed")
    while hi - lo > tol * lo:
        mid = 0.5 * (lo + hi)
        if p(mid) >= 0.5:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _half_level_stderr(levels: np.ndarray) -> float:
    """Width in ``t`` corresponding to one standard error of the crossing probability at 1/2."""
    s = 0.5 / math.sqrt(len(levels))
    q_lo, q_hi = np.quantile(levels, [0.5 - s, 0.5 + s], method="inverted_cdf")
    return float(q_hi - q_lo) / 2


def estimate_tc(F: RadiusMeasure, sizes: Sequence[float], d: int, reps: int, tol: float,
                seed: int, bracket: tuple[float, float] | None = None,
                workers: int = 1) -> ThresholdResult:
    """Finite-size estimate of the critical intensity.

    For every size the crossing probability, coupled across intensities
    through nested configurations, is bisected for the level one half. The
    estimate is the value at the largest size; the half-width covers the
    drift between the two largest sizes, the bisection tolerance and three
    standard errors of the half level.
    """
    sizes = [float(a) for a in sizes]
    if len(sizes) < 3:
        raise ValueError("estimate_tc needs at least 3 sizes")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly increasing")
    for a in sizes:
        _check_size(F, a)
    lo, hi = bracket or default_bracket(F, d)
    rows = []
    for a in sizes:
        levels = crossing_levels(F, a, d, reps, seed, t_max=hi, t_start=lo, workers=workers)
        rows.append((a, _bisect_half(levels, lo, hi, tol), _half_level_stderr(levels)))
    (_, t_prev, _), (_, t_last, se_last) = rows[-2], rows[-1]
    ci = max(abs(t_last - t_prev), tol * t_last + 3 * se_last)
    return ThresholdResult(t_last, ci, sizes, rows, tol)


# slabs

def _slab_rep(s, F, t, K_grid, a, window):
    c = PoissonStream(F, window, s).prefix(t)
    d = window.d
    out = []
    for K in K_grid:
        sub = c.subset(c.positions[:, 0] <= K)
        lo = np.array([0.0, 0.0] + [-a] * (d - 2))
        hi = np.array([K, a] + [a] * (d - 2))
        g, _ = _box_crossing_graph(sub, lo, hi, 1)
        out.append(float(g.connected))
    return out


def slab_crossing_curve(F: RadiusMeasure, t: float, K_grid: Sequence[float], length_a: float,
                        d: int, reps: int, seed: int, workers: int = 1,
                        label: str = "slab") -> list[Estimate]:
    """Slab crossing probabilities for several thicknesses on shared configurations.

    Centres are sampled once in the thickest slab and restricted to
    ``[0, K]`` for each ``K``, so the estimates are nondecreasing in ``K``
    replication by replication.
    """
    if d < 3:
        raise DimensionError("slab crossing needs d >= 3")
    b = F.support_bound
    K_grid = [float(K) for K in K_grid]
    if any(not K > 2 * b for K in K_grid):
        raise ValueError(f"slab thickness must exceed 2b = {2 * b}")
    if not t > 0:
        raise ValueError("intensity must be > 0")
    a = float(length_a)
    window = Window.slab(max(K_grid), (0.0,) + (-a,) * (d - 2), (a,) * (d - 1))
    v = replicate(partial(_slab_rep, F=F, t=t, K_grid=K_grid, a=a, window=window),
                  reps, seed, label, workers)
    v = v.reshape(reps, len(K_grid))
    return [Estimate.from_values(v[:, k], f"{seed}:{label}") for k in range(len(K_grid))]


def slab_crossing(F: RadiusMeasure, t: float, K: float, length_a: float, d: int, reps: int,
                  seed: int, workers: int = 1, label: str = "slab") -> Estimate:
    """Crossing of ``[0, K] x [0, a] x [-a, a]^(d-2)`` along the second axis.

    Grain centres are confined to the slab ``[0, K] x R^(d-1)``.
    """
    return slab_crossing_curve(F, t, [K], length_a, d, reps, seed, workers, label)[0]
