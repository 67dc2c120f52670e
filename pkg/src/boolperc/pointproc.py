"""Seeded sampling of marked Poisson configurations in finite windows.

Points are generated in order of an auxiliary *birth level*: the k-th
point appears at level ``S_k / (|F| vol)`` where ``S_k`` is a sum of unit
exponentials. The configuration at intensity ``t`` is the prefix of points
born at level ``<= t``, so configurations for different intensities drawn
from the same stream are nested. This is the monotone superposition
coupling: the points born in ``(t, t + dt]`` form an independent Poisson
process with intensity measure ``dt F``.

Streams are counter based (Philox keyed by a :class:`SeedSpec`) and are
consumed in fixed-size chunks, so a configuration depends only on the seed
triple and never on how many points were requested before.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidMark, InvalidMeasure, TooManyPoints, WindowMismatch
from .measure import RadiusMeasure, SignedRadiusMeasure, combine, scale

__all__ = [
    "Window",
    "SeedSpec",
    "Configuration",
    "PoissonStream",
    "sample_poisson",
    "superpose",
    "coupled_pair",
    "add_point",
    "coupled_measures",
    "DEFAULT_MAX_POINTS",
]

DEFAULT_MAX_POINTS = 10**8
CHUNK = 256


@dataclass(frozen=True)
class Window:
    """Axis-aligned sampling window ``[lo, hi]``.

    ``kind`` is ``"box"`` (centred cube ``[-a, a]^d``), ``"slab"`` (thickness
    along axis 0, centres confined to ``[lo_0, hi_0]`` so axis 0 is never
    dilated) or ``"rect"`` (any axis-aligned box).
    """

    kind: str
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("box", "slab", "rect"):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if len(self.lo) != len(self.hi) or len(self.lo) < 2:
            raise ValueError("window bounds must have equal length >= 2")
        if any(not h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError("window must have positive extent on every axis")
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))

    @classmethod
    def box(cls, a: float, d: int) -> "Window":
        if not a > 0:
            raise ValueError("box half-width must be > 0")
        return cls("box", (-a,) * d, (a,) * d)

    @classmethod
    def slab(cls, K: float, lateral_lo: Sequence[float], lateral_hi: Sequence[float]) -> "Window":
        """Slab ``[0, K] x prod [lateral_lo_i, lateral_hi_i]``."""
        if not K > 0:
            raise ValueError("slab thickness must be > 0")
        return cls("slab", (0.0, *lateral_lo), (float(K), *lateral_hi))

    @classmethod
    def symmetric_slab(cls, K: float, A: float, d: int) -> "Window":
        return cls.slab(K, (-A,) * (d - 1), (A,) * (d - 1))

    @classmethod
    def rect(cls, lo: Sequence[float], hi: Sequence[float]) -> "Window":
        return cls("rect", tuple(lo), tuple(hi))

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def half_width(self) -> float:
        """Half-width of a centred box window."""
        return self.hi[0]

    def sampling_bounds(self, margin: float) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array(self.lo) - margin
        hi = np.array(self.hi) + margin
        if self.kind == "slab":
            lo[0], hi[0] = self.lo[0], self.hi[0]
        return lo, hi

    def sampling_volume(self, margin: float) -> float:
        lo, hi = self.sampling_bounds(margin)
        return float(np.prod(hi - lo))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": list(self.lo), "hi": list(self.hi)}


def _label_code(label: str) -> int:
    return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class SeedSpec:
    """Identifies one random stream: ``(master_seed, replication_index, stream_label)``."""

    master_seed: int
    replication_index: int = 0
    stream_label: str = "main"

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master seed must be an unsigned 64-bit integer")
        if self.replication_index < 0:
            raise ValueError("replication index must be nonnegative")

    def generator(self, chunk: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.replication_index, _label_code(self.stream_label), chunk),
        )
        return np.random.Generator(np.random.Philox(ss))

    def child(self, label: str) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.replication_index, f"{self.stream_label}/{label}")

    def with_rep(self, replication_index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, replication_index, self.stream_label)

    def summary(self) -> str:
        return f"{self.master_seed}:{self.replication_index}:{self.stream_label}"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Configuration:
    """Finite marked point pattern ``{(x_i, r_i)}`` sampled in a window.

    ``margin`` is the support bound ``b`` of the radius law; every centre lies
    in the window dilated by it. ``births`` holds the birth level of each
    point when the configuration came from a :class:`PoissonStream`.
    """

    positions: np.ndarray
    radii: np.ndarray
    window: Window
    margin: float
    births: np.ndarray | None = None
    seed: SeedSpec | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, self.window.d)
        rad = np.asarray(self.radii, dtype=float).reshape(-1)
        if len(pos) != len(rad):
            raise ValueError("positions and radii differ in length")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "radii", _frozen(rad))
        if self.births is not None:
            object.__setattr__(self, "births", _frozen(np.asarray(self.births, dtype=float)))

    def __len__(self) -> int:
        return len(self.radii)

    @property
    def d(self) -> int:
        return self.window.d

    @property
    def b(self) -> float:
        return self.margin

    @classmethod
    def empty(cls, window: Window, margin: float) -> "Configuration":
        return cls(np.empty((0, window.d)), np.empty(0), window, margin)

    def subset(self, index) -> "Configuration":
        """Configuration restricted to ``index`` (boolean mask or integer indices)."""
        births = None if self.births is None else self.births[index]
        return Configuration(self.positions[index], self.radii[index], self.window,
                             self.margin, births, self.seed)

    def equals(self, other: "Configuration") -> bool:
        """Bitwise equality of points, window and margin."""
        return (self.window == other.window and self.margin == other.margin
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.radii, other.radii))

    def write_csv(self, path) -> None:
        """Write ``x1,...,xd,r`` rows, with the seed triple in a comment header."""
        with open(path, "w", newline="") as fh:
            seed = self.seed.summary() if self.seed is not None else "none"
            fh.write(f"# seed={seed}\n")
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.d)] + ["r"])
            for x, r in zip(self.positions, self.radii):
                w.writerow([format(v, ".17g") for v in (*x, r)])


class PoissonStream:
    """Lazily generated, birth-ordered Poisson points for one seed.

    ``prefix(t)`` returns the configuration with intensity measure
    ``t * F`` restricted to the window dilated by the support bound of ``F``.
    """

    def __init__(self, F: RadiusMeasure, window: Window, seed: SeedSpec,
                 margin: float | None = None, max_points: int = DEFAULT_MAX_POINTS):
        F.require_positive()
        self.F = F
        self.window = window
        self.seed = seed
        self.margin = F.support_bound if margin is None else float(margin)
        self.max_points = max_points
        self.lo, self.hi = window.sampling_bounds(self.margin)
        self.volume = float(np.prod(self.hi - self.lo))
        self.rate = F.total_mass * self.volume
        self._levels: list[np.ndarray] = []
        self._pos: list[np.ndarray] = []
        self._rad: list[np.ndarray] = []
        self._last_sum = 0.0
        self._cat = None

    def expected_count(self, t: float) -> float:
        return t * self.rate

    def _extend_to(self, t: float) -> None:
        if self.expected_count(t) > self.max_points:
            raise TooManyPoints(
                f"expected {self.expected_count(t):.3g} points exceeds cap {self.max_points}")
        target = t * self.rate
        d = self.window.d
        while self._last_sum <= target:
            g = self.seed.generator(len(self._levels))
            gaps = g.standard_exponential(CHUNK)
            u = g.random((CHUNK, d))
            v = g.random(CHUNK)
            sums = self._last_sum + np.cumsum(gaps)
            self._last_sum = float(sums[-1])
            self._levels.append(sums / self.rate)
            self._pos.append(self.lo + u * (self.hi - self.lo))
            self._rad.append(self.F._quantiles(v))
            self._cat = None

    def _arrays(self):
        if self._cat is None:
            self._cat = (np.concatenate(self._levels), np.concatenate(self._pos),
                         np.concatenate(self._rad))
        return self._cat

    def prefix(self, t: float) -> Configuration:
        if t < 0:
            raise ValueError("intensity must be nonnegative")
        if t == 0:
            return Configuration(np.empty((0, self.window.d)), np.empty(0), self.window,
                                 self.margin, np.empty(0), self.seed)
        self._extend_to(t)
        levels, pos, rad = self._arrays()
        k = int(np.searchsorted(levels, t, side="right"))
        return Configuration(pos[:k], rad[:k], self.window, self.margin, levels[:k], self.seed)


def sample_poisson(F: RadiusMeasure, t: float, w: Window, seed: SeedSpec,
                   max_points: int = DEFAULT_MAX_POINTS) -> Configuration:
    """Poisson configuration with intensity ``t F`` in ``w`` dilated by ``b``."""
    if not t > 0:
        raise ValueError(f"intensity must be > 0, got {t}")
    return PoissonStream(F, w, seed, max_points=max_points).prefix(t)


def superpose(c1: Configuration, c2: Configuration) -> Configuration:
    if c1.window != c2.window or c1.margin != c2.margin:
        raise WindowMismatch("configurations live in different windows")
    return Configuration(np.concatenate([c1.positions, c2.positions]),
                         np.concatenate([c1.radii, c2.radii]), c1.window, c1.margin)


def coupled_pair(F: RadiusMeasure, t: float, dt: float, w: Window, seed: SeedSpec,
                 max_points: int = DEFAULT_MAX_POINTS) -> tuple[Configuration, Configuration]:
    """``(C_t, C_{t+dt})`` with ``C_t`` a prefix of ``C_{t+dt}``."""
    if not t > 0:
        raise ValueError(f"intensity must be > 0, got {t}")
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    stream = PoissonStream(F, w, seed, max_points=max_points)
    return stream.prefix(t), stream.prefix(t + dt)


def add_point(c: Configuration, x, r: float) -> Configuration:
    """Return ``c + delta_(x, r)``; ``c`` itself is untouched."""
    if not (0 < r <= c.margin):
        raise InvalidMark(f"radius {r} outside (0, {c.margin}]")
    x = np.asarray(x, dtype=float).reshape(1, c.d)
    return Configuration(np.concatenate([c.positions, x]), np.append(c.radii, r),
                         c.window, c.margin)


def counts_in_ball(c: Configuration, radius: float, center=None) -> int:
    center = np.zeros(c.d) if center is None else np.asarray(center, dtype=float)
    return int(np.count_nonzero(np.sum((c.positions - center) ** 2, axis=1) <= radius**2))


def coupled_measures(F: RadiusMeasure, h: float, G, w: Window, seed: SeedSpec,
                     margin: float | None = None,
                     max_points: int = DEFAULT_MAX_POINTS) -> tuple[Configuration, Configuration]:
    """Configurations for ``F`` and ``F + h G`` sharing a common part.

    With ``A ~ F - h G_-``, ``B ~ h G_-`` and ``C ~ h G_+`` independent, the
    pair is ``(A + B, A + C)``. ``G`` is a signed measure; ``h >= 0`` and
    ``F - h G_-`` must be a measure.
    """
    if h < 0:
        raise ValueError("step h must be nonnegative")
    common = combine(F, h, SignedRadiusMeasure(neg=G.neg))
    if margin is None:
        margin = max(F.support_bound, G.pos.support_bound)
    parts = []
    for label, mu in (("common", common), ("minus", G.neg), ("plus", G.pos)):
        if mu.is_zero or (h == 0 and label != "common"):
            parts.append(Configuration.empty(w, margin))
            continue
        mu = mu if label == "common" else scale(mu, h)
        parts.append(PoissonStream(mu, w, seed.child(label), margin=margin,
                                   max_points=max_points).prefix(1.0))
    a, b, c = parts
    return superpose(a, b), superpose(a, c)
