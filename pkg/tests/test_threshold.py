import math

import numpy as np
import pytest

from boolperc.errors import DimensionError, NoBracket
from boolperc.measure import RadiusMeasure
from boolperc.montecarlo import agree
from boolperc.threshold import (
    ThresholdResult,
    _bisect_half,
    crossing_levels,
    crossing_probability,
    default_bracket,
    estimate_tc,
    slab_crossing,
    slab_crossing_curve,
)

F1 = RadiusMeasure.atom(1.0)


def test_crossing_extremes():
    assert crossing_probability(F1, 0.01, 5, 2, 200, 1).mean == 0.0
    assert crossing_probability(F1, 3.0, 5, 2, 200, 1).mean == 1.0


def test_crossing_monotone_in_t_and_matches_levels():
    ts = [0.2, 0.3, 0.4, 0.5, 0.7]
    means = [crossing_probability(F1, t, 6, 2, 300, 2).mean for t in ts]
    assert all(b >= a for a, b in zip(means, means[1:]))
    levels = crossing_levels(F1, 6, 2, 300, 2, t_max=5.0, t_start=0.05)
    for t, m in zip(ts, means):
        assert m == np.count_nonzero(levels <= t) / 300


def test_size_precondition():
    with pytest.raises(ValueError):
        crossing_probability(F1, 0.5, 4.0, 2, 10, 1)


def test_bisect_and_no_bracket():
    levels = np.array([1.0, 2.0, 3.0, 4.0, math.inf])
    t = _bisect_half(levels, 0.5, 10.0, 1e-6)
    assert t == pytest.approx(3.0, rel=1e-5)
    with pytest.raises(NoBracket):
        _bisect_half(levels, 3.5, 10.0, 0.01)
    with pytest.raises(NoBracket):
        estimate_tc(F1, [5, 6, 7], 2, 50, 0.01, 1, bracket=(0.01, 0.02))


def test_estimate_tc_preconditions():
    with pytest.raises(ValueError):
        estimate_tc(F1, [8, 16], 2, 50, 0.01, 1)
    with pytest.raises(ValueError):
        estimate_tc(F1, [16, 8, 32], 2, 50, 0.01, 1)


def test_estimate_tc_small():
    res = estimate_tc(F1, [5, 7, 9], 2, 200, 0.01, 3)
    lo, hi = default_bracket(F1, 2)
    assert lo < res.tc_hat < hi
    assert res.ci_half_width > 0
    assert all(math.isfinite(th) for _, th, _ in res.per_size_tc)
    d = res.to_dict()
    assert d["sizes_used"] == [5.0, 7.0, 9.0]
    assert res.to_csv().splitlines()[0] == "size,t_half,stderr"


def test_spatial_scaling_of_crossings():
    # radii r -> 2r, t -> t / 4, a -> 2a leaves the crossing law unchanged
    a = crossing_probability(F1, 0.45, 6, 2, 1500, 4)
    b = crossing_probability(RadiusMeasure.atom(2.0), 0.45 / 4, 12, 2, 1500, 5)
    assert agree(a, b)


def test_slab_preconditions():
    with pytest.raises(DimensionError):
        slab_crossing(F1, 1.0, 3.0, 5.0, 2, 10, 1)
    with pytest.raises(ValueError):
        slab_crossing(F1, 1.0, 2.0, 5.0, 3, 10, 1)


def test_slab_monotone_in_K():
    curve = slab_crossing_curve(F1, 0.5, [2.5, 4.0, 6.0], 6.0, 3, 100, 7)
    means = [e.mean for e in curve]
    assert means == sorted(means)
    single = slab_crossing(F1, 0.5, 6.0, 6.0, 3, 100, 7)
    assert single.mean == means[-1]
