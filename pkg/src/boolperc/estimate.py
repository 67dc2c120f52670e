"""Monte Carlo estimators built on the finite-box connection event.

``theta`` below always means the surrogate ``theta_L^n(t)``: the probability
that the clusters meeting ``L`` reach the complement of ``B_n`` when the
grains follow a Poisson process with intensity measure ``t F``.

Three estimators of ``d theta / dt`` are provided and are meant to be
checked against each other:

* :func:`russo_derivative` counts pivotal grains (removal form),
* :func:`finite_difference_derivative` differences coupled configurations,
* :func:`added_grain_derivative` integrates the volume of positions where an
  extra grain would create the connection.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .errors import NotAMeasure
from .geom import (
    TargetSet,
    ball_covered,
    bridge_mask,
    build_graph,
    cluster_of_target,
    connects_J,
    first_passage_level,
    pivotal_report,
    stabilization_radius,
)
from .measure import RadiusMeasure, SignedRadiusMeasure, combine, unit_ball_volume
from .montecarlo import DEFAULT_TOLERANCE, Estimate, agree, combined_stderr, replicate
from .pointproc import (
    Configuration,
    PoissonStream,
    SeedSpec,
    Window,
    add_point,
    coupled_measures,
    sample_poisson,
)

__all__ = [
    "DerivativeReport",
    "RateBoundReport",
    "StabilizationReport",
    "estimate_theta",
    "theta_curve",
    "theta_by_box",
    "estimate_volume_fraction",
    "estimate_alpha",
    "russo_derivative",
    "finite_difference_derivative",
    "added_grain_derivative",
    "directional_derivative",
    "directional_difference",
    "derivative_report",
    "difference_operator",
    "mecke_check",
    "rate_bound_report",
    "stabilization_survey",
]


def _check_t(t: float) -> None:
    if not t > 0:
        raise ValueError(f"intensity must be > 0, got {t}")


def _theta_window(F: RadiusMeasure, n: float, d: int, half_width: float | None) -> Window:
    b = F.support_bound
    a = n + b if half_width is None else half_width
    if a < n + b:
        raise ValueError(f"window half-width {a} is below n + b = {n + b}")
    return Window.box(a, d)


def _tag(seed: int, label: str) -> str:
    return f"{seed}:{label}"


# capacity functional

def _theta_rep(s, F, t, L, n, window):
    return float(connects_J(build_graph(sample_poisson(F, t, window, s), L, n)))


def estimate_theta(F: RadiusMeasure, t: float, L: TargetSet, n: float, d: int, reps: int,
                   seed: int, half_width: float | None = None, workers: int = 1,
                   label: str = "theta") -> Estimate:
    """Bernoulli mean of the connection event over independent configurations."""
    _check_t(t)
    w = _theta_window(F, n, d, half_width)
    v = replicate(partial(_theta_rep, F=F, t=t, L=L, n=n, window=w), reps, seed, label, workers)
    return Estimate.from_values(v, _tag(seed, label))


def _curve_rep(s, F, t_grid, L, n, window):
    c = PoissonStream(F, window, s).prefix(max(t_grid))
    level = first_passage_level(build_graph(c, L, n), c.births)
    return [float(level <= t) for t in t_grid]


def theta_curve(F: RadiusMeasure, t_grid: Sequence[float], L: TargetSet, n: float, d: int,
                reps: int, seed: int, half_width: float | None = None, workers: int = 1,
                label: str = "theta") -> list[Estimate]:
    """``theta`` over ``t_grid`` with nested configurations in every replication.

    Each replication records the birth level at which the connection first
    appears, so the curve is nondecreasing replication by replication. With
    the same seed and label every entry equals :func:`estimate_theta` at that
    intensity.
    """
    t_grid = [float(t) for t in t_grid]
    for t in t_grid:
        _check_t(t)
    w = _theta_window(F, n, d, half_width)
    v = replicate(partial(_curve_rep, F=F, t_grid=t_grid, L=L, n=n, window=w),
                  reps, seed, label, workers)
    v = v.reshape(reps, len(t_grid))
    return [Estimate.from_values(v[:, k], _tag(seed, label)) for k in range(len(t_grid))]


def _by_box_rep(s, F, t, L, ns, window):
    c = sample_poisson(F, t, window, s)
    return [float(connects_J(build_graph(c, L, n))) for n in ns]


def theta_by_box(F: RadiusMeasure, t: float, L: TargetSet, ns: Sequence[float], d: int,
                 reps: int, seed: int, workers: int = 1, label: str = "theta-n") -> list[Estimate]:
    """``theta`` for several box radii evaluated on shared configurations.

    The window is sized for the largest radius, so the estimates are
    nonincreasing in ``n`` replication by replication. Used for the
    ``n`` versus ``2n`` drift diagnostic.
    """
    _check_t(t)
    ns = [float(n) for n in ns]
    w = _theta_window(F, max(ns), d, None)
    v = replicate(partial(_by_box_rep, F=F, t=t, L=L, ns=ns, window=w), reps, seed, label, workers)
    v = v.reshape(reps, len(ns))
    return [Estimate.from_values(v[:, k], _tag(seed, label)) for k in range(len(ns))]


# volume fraction and coverage

def _covered_origin_rep(s, F, t, window):
    c = sample_poisson(F, t, window, s)
    return float(np.any(np.sum(c.positions**2, axis=1) <= c.radii**2))


def estimate_volume_fraction(F: RadiusMeasure, t: float, d: int, reps: int, seed: int,
                             workers: int = 1, label: str = "volume-fraction") -> Estimate:
    """Bernoulli mean of the event that the origin is covered."""
    _check_t(t)
    w = Window.box(F.support_bound, d)
    v = replicate(partial(_covered_origin_rep, F=F, t=t, window=w), reps, seed, label, workers)
    return Estimate.from_values(v, _tag(seed, label))


def _alpha_rep(s, F, t, b, delta, window):
    if t == 0:
        return 0.0
    c = sample_poisson(F, t, window, s)
    return float(ball_covered(c, np.zeros(window.d), b, delta))


def estimate_alpha(F: RadiusMeasure, t: float, b: float, d: int, reps: int, delta: float,
                   seed: int, workers: int = 1, label: str = "alpha") -> Estimate:
    """Probability that ``B_b`` is covered, resolved on a lattice of spacing ``delta``."""
    if t < 0:
        raise ValueError("intensity must be nonnegative")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    w = Window.box(b, d)
    v = replicate(partial(_alpha_rep, F=F, t=t, b=b, delta=delta, window=w), reps, seed, label, workers)
    return Estimate.from_values(v, _tag(seed, label))


# derivatives

def _russo_rep(s, F, t, L, n, window):
    rep = pivotal_report(build_graph(sample_poisson(F, t, window, s), L, n))
    return len(rep.pivotal) / t


def russo_derivative(F: RadiusMeasure, t: float, L: TargetSet, n: float, d: int, reps: int,
                     seed: int, half_width: float | None = None, workers: int = 1,
                     label: str = "russo") -> Estimate:
    """Mean number of pivotal grains divided by ``t``."""
    _check_t(t)
    w = _theta_window(F, n, d, half_width)
    v = replicate(partial(_russo_rep, F=F, t=t, L=L, n=n, window=w), reps, seed, label, workers)
    return Estimate.from_values(v, _tag(seed, label))


def _fd_levels(t, dt, scheme):
    if scheme == "forward":
        return t, t + dt
    if scheme == "central":
        return t - dt / 2, t + dt / 2
    raise ValueError(f"unknown difference scheme {scheme!r}")


def _fd_rep(s, F, t_lo, t_hi, L, n, window):
    stream = PoissonStream(F, window, s)
    lo = connects_J(build_graph(stream.prefix(t_lo), L, n))
    hi = connects_J(build_graph(stream.prefix(t_hi), L, n))
    return (float(hi) - float(lo)) / (t_hi - t_lo)


def finite_difference_derivative(F: RadiusMeasure, t: float, dt: float, L: TargetSet, n: float,
                                 d: int, reps: int, seed: int, scheme: str = "forward",
                                 half_width: float | None = None, workers: int = 1,
                                 label: str = "finite-difference") -> Estimate:
    """Difference quotient of the connection indicator on nested configurations.

    ``scheme="forward"`` uses ``(t, t + dt)``; ``"central"`` uses
    ``(t - dt/2, t + dt/2)``. Every summand is nonnegative.
    """
    _check_t(t)
    if not 0 < dt <= t / 10:
        raise ValueError(f"need 0 < dt <= t/10, got dt={dt}, t={t}")
    t_lo, t_hi = _fd_levels(t, dt, scheme)
    w = _theta_window(F, n, d, half_width)
    v = replicate(partial(_fd_rep, F=F, t_lo=t_lo, t_hi=t_hi, L=L, n=n, window=w),
                  reps, seed, label, workers)
    return Estimate.from_values(v, _tag(seed, label))


def _bridge_region(c: Configuration, g, L: TargetSet, reach: float):
    """Box outside which no new grain of radius ``<= reach`` can touch the TARGET side."""
    lo, hi = L.bounds()
    lab = g.labels
    side = np.isin(lab, lab[g.target_links]) if len(lab) else np.zeros(0, bool)
    if side.any():
        x, r = c.positions[side], c.radii[side][:, None]
        lo = np.minimum(lo, (x - r).min(axis=0))
        hi = np.maximum(hi, (x + r).max(axis=0))
    return lo - reach, hi + reach


def _bridge_volume(c, g, L, n, R: RadiusMeasure, mc_points: int, rng) -> float:
    """Monte Carlo estimate of ``|R| * E_r vol{x : bridge(x, r)}`` with ``r ~ R/|R|``."""
    lo, hi = _bridge_region(c, g, L, R.support_bound)
    xs = lo + rng.random((mc_points, c.d)) * (hi - lo)
    rs = R.quantiles(rng.random(mc_points))
    frac = np.count_nonzero(bridge_mask(c, g, L, n, xs, rs)) / mc_points
    return R.total_mass * float(np.prod(hi - lo)) * frac


def _added_rep(s, F, t, L, n, window, mc_points):
    c = sample_poisson(F, t, window, s)
    g = build_graph(c, L, n)
    if connects_J(g):
        return 0.0
    return _bridge_volume(c, g, L, n, F, mc_points, s.child("mc").generator())


def added_grain_derivative(F: RadiusMeasure, t: float, L: TargetSet, n: float, d: int,
                           reps: int, mc_points: int, seed: int,
                           half_width: float | None = None, workers: int = 1,
                           label: str = "added-grain") -> Estimate:
    """Expected volume of centres where one extra grain creates the connection.

    For each configuration without the connection, ``mc_points`` uniform
    candidate grains are drawn in the bounding box of ``L`` and its clusters,
    dilated by the largest radius; outside that box no grain can touch them.
    """
    _check_t(t)
    if mc_points < 1:
        raise ValueError("mc_points must be positive")
    w = _theta_window(F, n, d, half_width)
    v = replicate(partial(_added_rep, F=F, t=t, L=L, n=n, window=w, mc_points=mc_points),
                  reps, seed, label, workers)
    return Estimate.from_values(v, _tag(seed, label))


def _directional_rep(s, F, G, L, n, window, mc_points):
    c = sample_poisson(F, 1.0, window, s)
    g = build_graph(c, L, n)
    if connects_J(g):
        return 0.0
    total = 0.0
    for sign, part, tag in ((1.0, G.pos, "plus"), (-1.0, G.neg, "minus")):
        if not part.is_zero:
            total += sign * _bridge_volume(c, g, L, n, part, mc_points, s.child(tag).generator())
    return total


def _require_admissible(F: RadiusMeasure, G: SignedRadiusMeasure, probe: float) -> None:
    try:
        combine(F, probe, G)
    except NotAMeasure as exc:
        raise NotAMeasure(f"F + a G is not a measure at probe step a={probe}: {exc}") from None


def directional_derivative(F: RadiusMeasure, G: SignedRadiusMeasure, L: TargetSet, n: float,
                           d: int, reps: int, mc_points: int, seed: int, probe: float = 1e-3,
                           half_width: float | None = None, workers: int = 1,
                           label: str = "directional") -> Estimate:
    """Derivative of ``theta(F + h G)`` at ``h = 0``, by the added-grain integral.

    The measure ``F`` carries the intensity (no separate ``t``). Radii of the
    added grain are drawn from ``G_+`` and ``G_-`` separately and the two
    volume integrals are subtracted.
    """
    _require_admissible(F, G, probe)
    if mc_points < 1:
        raise ValueError("mc_points must be positive")
    w = _theta_window(F, n, d, half_width)
    v = replicate(partial(_directional_rep, F=F, G=G, L=L, n=n, window=w, mc_points=mc_points),
                  reps, seed, label, workers)
    return Estimate.from_values(v, _tag(seed, label))


def _dir_fd_rep(s, F, G, h, L, n, window):
    base, moved = coupled_measures(F, h, G, window, s, margin=F.support_bound)
    return (float(connects_J(build_graph(moved, L, n)))
            - float(connects_J(build_graph(base, L, n)))) / h


def directional_difference(F: RadiusMeasure, G: SignedRadiusMeasure, h: float, L: TargetSet,
                           n: float, d: int, reps: int, seed: int,
                           half_width: float | None = None, workers: int = 1,
                           label: str = "directional-difference") -> Estimate:
    """``(theta(F + h G) - theta(F)) / h`` on coupled configurations.

    Radii of ``G`` must not exceed the support bound of ``F``.
    """
    if not h > 0:
        raise ValueError("h must be > 0")
    combine(F, -h, SignedRadiusMeasure(pos=G.neg))  # raises if F - h G_- is not a measure
    if max(G.pos.support_bound, G.neg.support_bound) > F.support_bound:
        raise ValueError("direction G reaches beyond the support bound of F")
    w = _theta_window(F, n, d, half_width)
    v = replicate(partial(_dir_fd_rep, F=F, G=G, h=h, L=L, n=n, window=w), reps, seed, label, workers)
    return Estimate.from_values(v, _tag(seed, label))


@dataclass
class DerivativeReport:
    t: float
    finite_difference: Estimate
    russo: Estimate
    added_grain: Estimate
    tol: float = DEFAULT_TOLERANCE

    def pairs(self) -> dict[str, tuple[Estimate, Estimate]]:
        return {
            "russo~finite_difference": (self.russo, self.finite_difference),
            "russo~added_grain": (self.russo, self.added_grain),
            "finite_difference~added_grain": (self.finite_difference, self.added_grain),
        }

    def checks(self) -> dict[str, bool]:
        out = {}
        for name, (a, b) in self.pairs().items():
            out[f"agree:{name}"] = agree(a, b, self.tol)
        for name in ("finite_difference", "russo", "added_grain"):
            e = getattr(self, name)
            out[f"positive:{name}"] = e.mean > self.tol * e.stderr
        return out

    def to_dict(self) -> dict:
        pairs = {
            name: {"diff": a.mean - b.mean, "combined_stderr": combined_stderr(a, b)}
            for name, (a, b) in self.pairs().items()
        }
        return {
            "t": self.t,
            "tol": self.tol,
            "finite_difference": self.finite_difference.to_dict(),
            "russo": self.russo.to_dict(),
            "added_grain": self.added_grain.to_dict(),
            "pairs": pairs,
            "checks": self.checks(),
        }


def derivative_report(F: RadiusMeasure, t: float, L: TargetSet, n: float, d: int, reps: int,
                      seed: int, dt: float | None = None, mc_points: int = 64,
                      scheme: str = "central", tol: float = DEFAULT_TOLERANCE,
                      workers: int = 1) -> DerivativeReport:
    """All three derivative estimators at the same ``(F, L, n, d, t)``."""
    dt = t / 10 if dt is None else dt
    return DerivativeReport(
        t,
        finite_difference_derivative(F, t, dt, L, n, d, reps, seed, scheme=scheme, workers=workers),
        russo_derivative(F, t, L, n, d, reps, seed, workers=workers),
        added_grain_derivative(F, t, L, n, d, reps, mc_points, seed, workers=workers),
        tol,
    )


# difference operator and Mecke identity

def _indicator(c: Configuration, L: TargetSet, n: float) -> int:
    return int(connects_J(build_graph(c, L, n)))


def difference_operator(c: Configuration, L: TargetSet, n: float, points) -> int:
    """``D^k f(c)`` for ``f`` the connection indicator and ``k = len(points)``.

    Sums ``(-1)^(k - |I|) f(c + sum_{i in I} delta_{z_i})`` over all subsets
    ``I``; symmetric in the points.
    """
    points = list(points)
    k = len(points)
    if not 1 <= k <= 3:
        raise ValueError("difference operator supports 1 <= k <= 3 points")
    total = 0
    for size in range(k + 1):
        for subset in itertools.combinations(range(k), size):
            cur = c
            for i in subset:
                x, r = points[i]
                cur = add_point(cur, x, r)
            total += (-1) ** (k - size) * _indicator(cur, L, n)
    return total


def _mecke_rep(s, F, t, window, radius, m, volume_term):
    c = sample_poisson(F, t, window, s)
    count = int(np.count_nonzero(np.sum(c.positions**2, axis=1) <= radius**2))
    if m is None:
        return [float(count), volume_term]
    lhs = count if count <= m else 0
    rhs = volume_term if count + 1 <= m else 0.0
    return [float(lhs), rhs]


def mecke_check(F: RadiusMeasure, t: float, d: int, region_radius: float, reps: int, seed: int,
                m: int | None = None, workers: int = 1,
                label: str = "mecke") -> tuple[Estimate, Estimate]:
    """Both sides of the Mecke identity for ``f(x, phi) = 1{x in D, phi(D) <= m}``.

    ``D`` is the ball of radius ``region_radius`` at the origin. The left side
    sums ``f`` over the points; the right side integrates ``f(z, phi + delta_z)``
    against the intensity measure in closed form. ``m=None`` drops the count
    constraint (first-moment case).
    """
    _check_t(t)
    if m is not None and m < 0:
        raise ValueError("m must be nonnegative")
    w = Window.box(region_radius, d)
    volume_term = t * F.total_mass * unit_ball_volume(d) * region_radius**d
    v = replicate(partial(_mecke_rep, F=F, t=t, window=w, radius=region_radius, m=m,
                          volume_term=volume_term), reps, seed, label, workers)
    v = v.reshape(reps, 2)
    tag = _tag(seed, label)
    return Estimate.from_values(v[:, 0], tag), Estimate.from_values(v[:, 1], tag)


# rate bound

@dataclass
class RateBoundReport:
    """Check of ``theta(t) - theta(t_c) >= alpha (t - t_c)(1 - theta(t)) / t`` on a grid."""

    t_grid: list[float]
    tc_hat: float
    theta: list[Estimate]
    theta_at_tc: Estimate
    alpha_hat: Estimate
    rows: list[dict] = field(default_factory=list)
    tol: float = DEFAULT_TOLERANCE

    @property
    def violations(self) -> int:
        return sum(r["violated"] for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "tc_hat": self.tc_hat,
            "tol": self.tol,
            "alpha_hat": self.alpha_hat.to_dict(),
            "theta_at_tc": self.theta_at_tc.to_dict(),
            "rows": self.rows,
            "violations": self.violations,
        }


def _rate_rows(t_grid, tc, theta, theta_tc, alpha, tol):
    rows = []
    for t, th in zip(t_grid, theta):
        lhs = th.mean - theta_tc.mean
        factor = (t - tc) / t
        rhs = alpha.mean * factor * (1 - th.mean)
        se = math.sqrt(th.stderr**2 + theta_tc.stderr**2
                       + (factor * (1 - th.mean) * alpha.stderr) ** 2
                       + (alpha.mean * factor * th.stderr) ** 2)
        rows.append({"t": t, "lhs": lhs, "rhs": rhs, "stderr": se,
                     "violated": bool(lhs < rhs - tol * se)})
    return rows


def rate_bound_report(F: RadiusMeasure, t_grid: Sequence[float], tc_hat: float, L: TargetSet,
                      n: float, d: int, b: float, reps: int, delta: float, seed: int,
                      alpha_override: float | None = None, tol: float = DEFAULT_TOLERANCE,
                      workers: int = 1) -> RateBoundReport:
    """Evaluate the linear lower bound at each grid point.

    ``theta`` at ``tc_hat`` and on the grid share configurations. With
    ``alpha_override`` the estimated ``alpha`` is replaced by a constant
    (used to check that the test has power).
    """
    t_grid = [float(t) for t in t_grid]
    if any(t < tc_hat for t in t_grid):
        raise ValueError("every grid point must be >= tc_hat")
    if any(b2 <= b1 for b1, b2 in zip(t_grid, t_grid[1:])):
        raise ValueError("t_grid must be strictly increasing")
    curve = theta_curve(F, [tc_hat] + t_grid, L, n, d, reps, seed, workers=workers)
    alpha = estimate_alpha(F, tc_hat, b, d, reps, delta, seed, workers=workers)
    if alpha_override is not None:
        alpha = Estimate.exact(alpha_override, alpha.reps, "override")
    rep = RateBoundReport(t_grid, tc_hat, curve[1:], curve[0], alpha, tol=tol)
    rep.rows = _rate_rows(t_grid, tc_hat, curve[1:], curve[0], alpha, tol)
    return rep


# stabilization

@dataclass
class StabilizationReport:
    radii: np.ndarray          # R / b per replication, inf when censored
    survival: list[tuple[int, float, int]]   # (k, P(R > k b), count)
    slope: float
    slope_stderr: float
    censored_fraction: float

    @property
    def ci95(self) -> tuple[float, float]:
        return self.slope - 1.96 * self.slope_stderr, self.slope + 1.96 * self.slope_stderr

    def to_dict(self) -> dict:
        return {
            "survival": [{"k": k, "p": p, "count": c} for k, p, c in self.survival],
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "ci95": list(self.ci95),
            "censored_fraction": self.censored_fraction,
        }


def _stab_rep(s, F, t, L, b, window):
    return stabilization_radius(sample_poisson(F, t, window, s), L, b) / b


def log_survival_slope(survival: list[tuple[int, float, int]], reps: int) -> tuple[float, float]:
    """Weighted least-squares slope of ``log P(R > k b)`` against ``k``.

    Levels with survival 1 or fewer than 5 exceedances are left out; weights
    are inverse delta-method variances ``(1 - p) / (reps p)``.
    """
    ks, ys, ws = [], [], []
    for k, p, count in survival:
        if count >= 5 and p < 1:
            ks.append(k)
            ys.append(math.log(p))
            ws.append(reps * p / (1 - p))
    if len(ks) < 2:
        return math.nan, math.nan
    k = np.asarray(ks, float)
    y = np.asarray(ys)
    w = np.asarray(ws)
    kbar = np.sum(w * k) / np.sum(w)
    sxx = np.sum(w * (k - kbar) ** 2)
    slope = float(np.sum(w * (k - kbar) * y) / sxx)
    return slope, float(math.sqrt(1 / sxx))


def stabilization_survey(F: RadiusMeasure, t: float, L: TargetSet, b: float, half_width: float,
                         d: int, reps: int, seed: int, k_max: int = 10, workers: int = 1,
                         label: str = "stab-radius") -> StabilizationReport:
    """Empirical survival ``P(R_{L,b} > k b)`` for ``k = 1..k_max`` and its log-linear decay."""
    _check_t(t)
    w = Window.box(half_width, d)
    v = replicate(partial(_stab_rep, F=F, t=t, L=L, b=b, window=w), reps, seed, label, workers)
    finite = np.isfinite(v)
    kept = v[finite]
    survival = []
    for k in range(1, k_max + 1):
        count = int(np.count_nonzero(kept > k))
        survival.append((k, count / max(len(kept), 1), count))
    slope, se = log_survival_slope(survival, len(kept))
    return StabilizationReport(v, survival, slope, se, float(np.mean(~finite)))
