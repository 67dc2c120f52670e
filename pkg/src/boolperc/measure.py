"""Finite radius measures made of weighted atoms and uniform segments.

A :class:`RadiusMeasure` is the radius distribution ``F`` of the Boolean
model (unnormalised, so ``t * F`` is the intensity measure of the marks).
Arbitrary continuous radius laws have to be discretised by the caller into
atoms and uniform pieces; in exchange every moment and every quantile is
exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidMeasure, InvalidQuantile, InvalidScale, NotAMeasure

__all__ = [
    "RadiusMeasure",
    "SignedRadiusMeasure",
    "unit_ball_volume",
    "total_mass",
    "moment",
    "scale",
    "combine",
    "quantile_sample",
    "closed_form_volume_fraction",
]


def unit_ball_volume(d: int) -> float:
    """Volume ``kappa_d`` of the unit ball in ``R^d``."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _canonical_atoms(atoms) -> tuple[tuple[float, float], ...]:
    merged: dict[float, float] = {}
    for r, w in atoms:
        r, w = float(r), float(w)
        merged[r] = merged.get(r, 0.0) + w
    return tuple(sorted(merged.items()))


def _canonical_segments(segments) -> tuple[tuple[float, float, float], ...]:
    merged: dict[tuple[float, float], float] = {}
    for lo, hi, w in segments:
        key = (float(lo), float(hi))
        merged[key] = merged.get(key, 0.0) + float(w)
    return tuple((lo, hi, w) for (lo, hi), w in sorted(merged.items()))


@dataclass(frozen=True)
class RadiusMeasure:
    """Finite measure on ``(0, b]``.

    Parameters
    ----------
    atoms : sequence of ``(radius, weight)``
    segments : sequence of ``(lo, hi, weight)``; the weight is spread
        uniformly over ``[lo, hi]``.

    Atoms with bitwise-identical radii and segments with identical endpoints
    are merged on construction. The zero measure (no components) is allowed
    so that either half of a :class:`SignedRadiusMeasure` may vanish; it
    cannot be sampled from.
    """

    atoms: tuple[tuple[float, float], ...] = ()
    segments: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        atoms = _canonical_atoms(self.atoms)
        segments = _canonical_segments(self.segments)
        for r, w in atoms:
            if not (math.isfinite(r) and r > 0):
                raise InvalidMeasure(f"atom radius must be finite and > 0, got {r}")
            if not (math.isfinite(w) and w > 0):
                raise InvalidMeasure(f"atom weight must be finite and > 0, got {w}")
        for lo, hi, w in segments:
            if not (math.isfinite(hi) and 0 < lo < hi):
                raise InvalidMeasure(f"segment needs 0 < lo < hi < inf, got [{lo}, {hi}]")
            if not (math.isfinite(w) and w > 0):
                raise InvalidMeasure(f"segment weight must be finite and > 0, got {w}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "segments", segments)

    # construction helpers

    @classmethod
    def atom(cls, r: float, w: float = 1.0) -> "RadiusMeasure":
        return cls(atoms=((r, w),))

    @classmethod
    def segment(cls, lo: float, hi: float, w: float = 1.0) -> "RadiusMeasure":
        return cls(segments=((lo, hi, w),))

    @classmethod
    def zero(cls) -> "RadiusMeasure":
        return cls()

    @classmethod
    def from_spec(cls, entries: Iterable[dict]) -> "RadiusMeasure":
        """Build from config entries ``{kind: atom, r, w}`` / ``{kind: segment, lo, hi, w}``."""
        atoms, segments = [], []
        for e in entries:
            kind = e.get("kind")
            if kind == "atom":
                atoms.append((e["r"], e["w"]))
            elif kind == "segment":
                segments.append((e["lo"], e["hi"], e["w"]))
            else:
                raise InvalidMeasure(f"unknown measure entry kind {kind!r}")
        return cls(atoms=tuple(atoms), segments=tuple(segments))

    def to_spec(self) -> list[dict]:
        out = [{"kind": "atom", "r": r, "w": w} for r, w in self.atoms]
        out += [{"kind": "segment", "lo": lo, "hi": hi, "w": w} for lo, hi, w in self.segments]
        return out

    # basic quantities

    @property
    def is_zero(self) -> bool:
        return not self.atoms and not self.segments

    @property
    def total_mass(self) -> float:
        return math.fsum([w for _, w in self.atoms] + [w for _, _, w in self.segments])

    @property
    def support_bound(self) -> float:
        """Smallest ``b`` with ``F((b, inf)) = 0``."""
        ends = [r for r, _ in self.atoms] + [hi for _, hi, _ in self.segments]
        return max(ends) if ends else 0.0

    def moment(self, k: int) -> float:
        return moment(self, k)

    def require_positive(self) -> None:
        if self.is_zero:
            raise InvalidMeasure("operation needs a measure with positive total mass")

    # quantiles

    def _knots(self):
        """Breakpoints of the cumulative function with left limits and values there."""
        xs = sorted({r for r, _ in self.atoms}
                    | {lo for lo, _, _ in self.segments}
                    | {hi for _, hi, _ in self.segments})
        xs = np.asarray(xs, dtype=float)
        cont = np.zeros_like(xs)
        for lo, hi, w in self.segments:
            cont += w * np.clip((xs - lo) / (hi - lo), 0.0, 1.0)
        jump = np.zeros_like(xs)
        if self.atoms:
            pos = {x: i for i, x in enumerate(xs.tolist())}
            for r, w in self.atoms:
                jump[pos[r]] += w
        cum_jump = np.cumsum(jump)
        left = cont + cum_jump - jump
        value = cont + cum_jump
        return xs, left, value

    def quantiles(self, u) -> np.ndarray:
        """Vectorised :func:`quantile_sample`; ``u`` must lie in ``[0, 1)``."""
        self.require_positive()
        u = np.asarray(u, dtype=float)
        if u.size and (np.any(u < 0) or np.any(u >= 1) or np.any(~np.isfinite(u))):
            raise InvalidQuantile("quantile level must lie in [0, 1)")
        return self._quantiles(u)

    def _quantiles(self, u: np.ndarray) -> np.ndarray:
        # unchecked core shared with the samplers
        if not self.segments and len(self.atoms) == 1:
            return np.full(u.shape, self.atoms[0][0])
        xs, left, value = self._cache_knots()
        level = u * value[-1]
        k = np.searchsorted(value, level, side="right")
        k = np.minimum(k, len(xs) - 1)
        in_atom = left[k] <= level
        prev = np.maximum(k - 1, 0)
        span = left[k] - value[prev]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(span > 0, (level - value[prev]) / span, 0.0)
        x = np.where(in_atom, xs[k], xs[prev] + frac * (xs[k] - xs[prev]))
        return np.clip(x, xs[0], xs[-1])

    def _cache_knots(self):
        cached = self.__dict__.get("_knot_cache")
        if cached is None:
            cached = self._knots()
            object.__setattr__(self, "_knot_cache", cached)
        return cached


@dataclass(frozen=True)
class SignedRadiusMeasure:
    """Signed measure ``G = pos - neg`` in Hahn-Jordan form."""

    pos: RadiusMeasure = RadiusMeasure()
    neg: RadiusMeasure = RadiusMeasure()

    def __post_init__(self):
        shared = {r for r, _ in self.pos.atoms} & {r for r, _ in self.neg.atoms}
        if shared:
            raise InvalidMeasure(f"positive and negative parts share atoms at {sorted(shared)}")
        for plo, phi, _ in self.pos.segments:
            for nlo, nhi, _ in self.neg.segments:
                if min(phi, nhi) > max(plo, nlo):
                    raise InvalidMeasure(
                        f"positive segment [{plo}, {phi}] overlaps negative segment [{nlo}, {nhi}]"
                    )

    @classmethod
    def from_spec(cls, spec: dict) -> "SignedRadiusMeasure":
        return cls(RadiusMeasure.from_spec(spec.get("pos", [])),
                   RadiusMeasure.from_spec(spec.get("neg", [])))

    def to_spec(self) -> dict:
        return {"pos": self.pos.to_spec(), "neg": self.neg.to_spec()}


def total_mass(F: RadiusMeasure) -> float:
    return F.total_mass


def moment(F: RadiusMeasure, k: int) -> float:
    """``int r^k F(dr)``, segments integrated in closed form."""
    if k < 0 or int(k) != k:
        raise ValueError("moment order must be a nonnegative integer")
    k = int(k)
    terms = [w * r**k for r, w in F.atoms]
    terms += [w * (hi ** (k + 1) - lo ** (k + 1)) / ((k + 1) * (hi - lo))
              for lo, hi, w in F.segments]
    return math.fsum(terms)


def scale(F: RadiusMeasure, t: float) -> RadiusMeasure:
    if not (t > 0 and math.isfinite(t)):
        raise InvalidScale(f"scale factor must be > 0, got {t}")
    return RadiusMeasure(
        atoms=tuple((r, t * w) for r, w in F.atoms),
        segments=tuple((lo, hi, t * w) for lo, hi, w in F.segments),
    )


def combine(F: RadiusMeasure, h: float, G: SignedRadiusMeasure) -> RadiusMeasure:
    """Return ``F + h G``.

    Components are matched by bitwise-equal radius or interval; a component
    whose weight ends up exactly zero is dropped. Raises
    :class:`NotAMeasure` when any weight would be negative.
    """
    atoms: dict[float, float] = dict(F.atoms)
    segs: dict[tuple[float, float], float] = {(lo, hi): w for lo, hi, w in F.segments}
    for sign, part in ((1.0, G.pos), (-1.0, G.neg)):
        for r, w in part.atoms:
            atoms[r] = atoms.get(r, 0.0) + sign * h * w
        for lo, hi, w in part.segments:
            segs[(lo, hi)] = segs.get((lo, hi), 0.0) + sign * h * w
    bad = [("atom", r, w) for r, w in atoms.items() if w < 0]
    bad += [("segment", key, w) for key, w in segs.items() if w < 0]
    if bad:
        kind, where, w = bad[0]
        raise NotAMeasure(f"F + {h}*G has negative weight {w} at {kind} {where}")
    return RadiusMeasure(
        atoms=tuple((r, w) for r, w in atoms.items() if w != 0),
        segments=tuple((lo, hi, w) for (lo, hi), w in segs.items() if w != 0),
    )


def quantile_sample(F: RadiusMeasure, u: float) -> float:
    """Generalised inverse ``inf{r : F(r) / |F| > u}`` of the normalised CDF."""
    if not (0 <= u < 1):
        raise InvalidQuantile(f"quantile level must lie in [0, 1), got {u}")
    return float(F.quantiles(np.array([u]))[0])


def closed_form_volume_fraction(F: RadiusMeasure, t: float, d: int) -> float:
    """Fraction of space covered by the grains, ``1 - exp(-t kappa_d int r^d dF)``."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    return -math.expm1(-t * unit_ball_volume(d) * moment(F, d))


def admissible_step(F: RadiusMeasure, G: SignedRadiusMeasure, probe: float = 1e-3) -> bool:
    """Whether ``F + a G`` is a measure for the small probe step ``a``."""
    try:
        combine(F, probe, G)
    except NotAMeasure:
        return False
    return True


def as_measure(spec: "RadiusMeasure | Sequence[dict]") -> RadiusMeasure:
    if isinstance(spec, RadiusMeasure):
        return spec
    return RadiusMeasure.from_spec(spec)
