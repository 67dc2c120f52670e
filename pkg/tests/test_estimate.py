import itertools
import math

import numpy as np
import pytest

from boolperc.errors import NotAMeasure
from boolperc.estimate import (
    _fd_rep,
    _theta_window,
    derivative_report,
    difference_operator,
    directional_derivative,
    directional_difference,
    estimate_alpha,
    estimate_theta,
    estimate_volume_fraction,
    finite_difference_derivative,
    log_survival_slope,
    mecke_check,
    rate_bound_report,
    russo_derivative,
    stabilization_survey,
    theta_by_box,
    theta_curve,
)
from boolperc.geom import TargetSet, build_graph, connects_J
from boolperc.measure import RadiusMeasure, SignedRadiusMeasure, closed_form_volume_fraction
from boolperc.montecarlo import Estimate, agree, replicate
from boolperc.pointproc import Configuration, SeedSpec, Window, add_point

from oracles import brute_difference, random_config

F1 = RadiusMeasure.atom(1.0)
L = TargetSet.ball([0.0, 0.0], 0.5)
ORIGIN = TargetSet.point([0.0, 0.0])


def test_estimate_basics():
    e = Estimate.from_values([0, 1, 1, 0])
    assert e.mean == 0.5 and e.stderr == pytest.approx(math.sqrt(1 / 3 / 4))
    with pytest.raises(ValueError):
        Estimate.from_values([1.0])


def test_replicate_worker_invariance():
    a = replicate(_uniform, 37, 5, "w", workers=1)
    b = replicate(_uniform, 37, 5, "w", workers=3)
    assert np.array_equal(a, b)


def _uniform(s):
    return s.generator().random()


def test_theta_extremes():
    assert estimate_theta(F1, 1e-4, L, 3.0, 2, 100, 1).mean == 0.0
    assert estimate_theta(F1, 5.0, L, 3.0, 2, 100, 1).mean == 1.0
    with pytest.raises(ValueError):
        estimate_theta(F1, 0.0, L, 3.0, 2, 10, 1)
    with pytest.raises(ValueError):
        _theta_window(F1, 3.0, 2, 3.5)


def test_theta_curve_coupled_and_consistent():
    grid = [0.3, 0.45, 0.6, 0.8]
    curve = theta_curve(F1, grid, L, 4.0, 2, 300, 2)
    assert [e.mean for e in curve] == sorted(e.mean for e in curve)
    for t, e in zip(grid, curve):
        assert estimate_theta(F1, t, L, 4.0, 2, 300, 2).mean == e.mean


def test_theta_nonincreasing_in_n():
    ests = theta_by_box(F1, 0.6, L, [3.0, 5.0, 8.0], 2, 300, 3)
    assert ests[0].mean >= ests[1].mean >= ests[2].mean


def test_volume_fraction():
    for t in (0.1, 1.0):
        e = estimate_volume_fraction(F1, t, 2, 4000, 4)
        assert abs(e.mean - closed_form_volume_fraction(F1, t, 2)) < 3 * e.stderr


def test_alpha():
    assert estimate_alpha(F1, 0.0, 1.0, 2, 10, 0.05, 1).mean == 0.0
    assert estimate_alpha(F1, 20.0, 1.0, 2, 50, 0.05, 1).mean == 1.0
    a = estimate_alpha(F1, 2.5, 1.0, 2, 2000, 0.04, 5)
    b = estimate_alpha(F1, 2.5, 1.0, 2, 2000, 0.02, 5)
    assert agree(a, b)


def test_russo_low_intensity_expansion():
    # n = 2b and L = {0}: a connection needs at least two grains, so
    # theta = t^2 J + O(t^3) with J = |B_1| * |B_2 \ B_1| = 3 pi^2 and
    # d theta / dt = 2 t J (1 + c t + O(t^2)). Richardson extrapolation of
    # the ratio from t and 2t removes the unknown first-order term.
    J = 3 * math.pi**2
    t = 0.02
    lo = russo_derivative(F1, t, ORIGIN, 2.0, 2, 40000, 6)
    hi = russo_derivative(F1, 2 * t, ORIGIN, 2.0, 2, 20000, 7)
    r_lo, r_hi = lo.mean / (2 * t * J), hi.mean / (4 * t * J)
    se = math.hypot(2 * lo.stderr / (2 * t * J), hi.stderr / (4 * t * J))
    assert abs(2 * r_lo - r_hi - 1) < 3 * se
    assert se < 0.12


def test_russo_saturated():
    assert russo_derivative(F1, 8.0, L, 3.0, 2, 50, 1).mean == 0.0


def test_finite_difference_properties():
    w = _theta_window(F1, 4.0, 2, None)
    vals = [_fd_rep(SeedSpec(7, k, "fd"), F1, 0.6, 0.66, L, 4.0, w) for k in range(300)]
    assert min(vals) >= 0
    with pytest.raises(ValueError):
        finite_difference_derivative(F1, 0.6, 0.1, L, 4.0, 2, 10, 1)
    a = finite_difference_derivative(F1, 0.6, 0.06, L, 4.0, 2, 3000, 8, scheme="central")
    b = finite_difference_derivative(F1, 0.6, 0.03, L, 4.0, 2, 3000, 9, scheme="central")
    assert agree(a, b)


def test_derivative_triangle_small():
    rep = derivative_report(F1, 0.6, L, 4.0, 2, 1500, 10, mc_points=32)
    checks = rep.checks()
    assert all(v for k, v in checks.items() if k.startswith("agree:"))
    d = rep.to_dict()
    assert set(d["pairs"]) == {"russo~finite_difference", "russo~added_grain",
                               "finite_difference~added_grain"}


def test_added_grain_zero_cases():
    from boolperc.estimate import _bridge_volume
    from boolperc.geom import bridge_mask

    empty = Configuration.empty(Window.box(3.0, 2), 1.0)
    g = build_graph(empty, ORIGIN, 2.5)
    xs = np.random.default_rng(0).uniform(-3, 3, size=(500, 2))
    assert not bridge_mask(empty, g, ORIGIN, 2.5, xs, np.ones(500)).any()
    chain = Configuration(np.array([[0.5, 0], [2, 0], [3.5, 0]]), np.ones(3), Window.box(5, 2), 1.0)
    gc = build_graph(chain, ORIGIN, 4.0)
    assert _bridge_volume(chain, gc, ORIGIN, 4.0, F1, 64, np.random.default_rng(1)) == 0.0


def test_directional_reduces_to_radial():
    F = RadiusMeasure.atom(1.0, 0.6)
    d = directional_derivative(F, SignedRadiusMeasure(pos=F1), L, 4.0, 2, 2000, 32, 11)
    r = russo_derivative(F1, 0.6, L, 4.0, 2, 2000, 12)
    assert agree(d, r)


def test_directional_against_difference():
    F = RadiusMeasure(atoms=((1.0, 0.6), (0.5, 0.3)))
    G = SignedRadiusMeasure(pos=RadiusMeasure.atom(1.0, 1.0), neg=RadiusMeasure.atom(0.5, 1.0))
    d = directional_derivative(F, G, L, 4.0, 2, 2000, 32, 13)
    fd = directional_difference(F, G, 0.05, L, 4.0, 2, 4000, 14)
    assert agree(d, fd)


def test_directional_admissibility():
    G = SignedRadiusMeasure(neg=RadiusMeasure.atom(0.5, 1.0))
    with pytest.raises(NotAMeasure):
        directional_derivative(F1, G, L, 4.0, 2, 10, 4, 1)


def test_difference_operator_examples():
    c = Configuration(np.array([[0.5, 0.0], [2.0, 0.0]]), np.ones(2), Window.box(5, 2), 1.0)
    assert difference_operator(c, ORIGIN, 4.0, [((-4.5, -4.5), 1.0)]) == 0
    assert difference_operator(c, ORIGIN, 4.0, [((3.5, 0.0), 1.0)]) == 1
    with pytest.raises(ValueError):
        difference_operator(c, ORIGIN, 4.0, [])


def test_difference_operator_symmetry_and_unfolding():
    rng = np.random.default_rng(15)
    nonzero = 0
    for _ in range(1000):
        c = random_config(rng, 8, rmin=0.5, half=2.0)
        k = int(rng.integers(1, 4))
        pts = [(tuple(rng.uniform(-2.5, 2.5, 2)), float(rng.uniform(0.5, 1.0))) for _ in range(k)]
        v = difference_operator(c, L, 2.6, pts)
        assert -(2 ** (k - 1)) <= v <= 2 ** (k - 1)
        for perm in itertools.permutations(pts):
            assert difference_operator(c, L, 2.6, list(perm)) == v
        nested = brute_difference(c, L, 2.6, pts, lambda cc: int(connects_J(build_graph(cc, L, 2.6))))
        assert nested == v
        nonzero += v != 0
    assert nonzero > 50


def test_mecke_cases():
    lhs, rhs = mecke_check(F1, 1.0, 2, 1.0, 4000, 16, m=0)
    assert lhs.mean == 0.0 and rhs.mean == 0.0
    lhs, rhs = mecke_check(F1, 1.0, 2, 1.0, 4000, 17)
    assert rhs.mean == pytest.approx(math.pi) and rhs.stderr == 0
    assert abs(lhs.mean - math.pi) < 3 * lhs.stderr
    lhs, rhs = mecke_check(F1, 1.0, 2, 1.0, 4000, 18, m=3)
    assert agree(lhs, rhs)


def test_rate_bound_structure():
    rep = rate_bound_report(F1, [0.45, 0.6], 0.41, L, 4.0, 2, 1.0, 300, 0.05, 19)
    assert len(rep.rows) == 2 and rep.violations == sum(r["violated"] for r in rep.rows)
    assert rep.to_dict()["violations"] == rep.violations
    with pytest.raises(ValueError):
        rate_bound_report(F1, [0.3], 0.41, L, 4.0, 2, 1.0, 10, 0.05, 1)
    at_tc = rate_bound_report(F1, [0.41], 0.41, L, 4.0, 2, 1.0, 100, 0.05, 1)
    assert at_tc.rows[0]["lhs"] == 0.0 and at_tc.rows[0]["rhs"] == 0.0 and at_tc.violations == 0


def test_log_survival_slope_exact():
    reps = 10**6
    surv = [(k, math.exp(-0.7 * k), int(reps * math.exp(-0.7 * k))) for k in range(1, 8)]
    slope, se = log_survival_slope(surv, reps)
    assert slope == pytest.approx(-0.7, rel=1e-12)
    assert se > 0
    assert math.isnan(log_survival_slope([(1, 1.0, 10), (2, 0.5, 3)], 10)[0])


def test_stabilization_survey_small():
    rep = stabilization_survey(F1, 0.6, L, 1.0, 8.0, 2, 100, 20, k_max=6)
    ps = [p for _, p, _ in rep.survival]
    assert ps == sorted(ps, reverse=True)
    assert 0 <= rep.censored_fraction <= 1
    assert set(rep.to_dict()) >= {"slope", "ci95", "censored_fraction", "survival"}
