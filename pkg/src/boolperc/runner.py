"""Named experiments: run one config end to end and write its artifacts.

Output directory layout::

    manifest.json       resolved config, library version, wall time, workers
    summary.json        check flags and headline numbers
    <op>.csv            one file per estimator invocation
    <kind>.json         full report for report-producing kinds
    <kind>.svg          line plot with +-3 stderr bands (if ``plot``)

Everything except ``manifest.json`` depends only on the config and seed, never
on the worker count or the clock.
"""

from __future__ import annotations

import csv
import json
import math
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .estimate import (
    derivative_report,
    estimate_volume_fraction,
    mecke_check,
    rate_bound_report,
    stabilization_survey,
    theta_by_box,
    theta_curve,
)
from .measure import closed_form_volume_fraction
from .montecarlo import Estimate, agree
from .svg import line_plot
from .threshold import estimate_tc, slab_crossing_curve

__all__ = ["run_experiment", "CSV_COLUMNS", "format_float"]

CSV_COLUMNS = ("op", "t", "n", "reps", "mean", "stderr", "seed", "extra")


def format_float(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def _row(op, t, n, e: Estimate, **extra) -> list[str]:
    tail = ";".join(f"{k}={format_float(v) if isinstance(v, float) else v}"
                    for k, v in sorted(extra.items()))
    return [op, format_float(t), format_float(n), str(e.reps), format_float(e.mean),
            format_float(e.stderr), e.seed, tail]


def _write_csv(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(rows)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True) + "\n")


def _plain(obj):
    """Convert numpy scalars and tuples so that ``json`` output is stable."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _drift(cfg, F, L, t, out: Path) -> dict | None:
    """``theta`` at ``n`` and ``2n`` on shared configurations, to expose box-size bias."""
    if not cfg.drift_reps:
        return None
    a, b = theta_by_box(F, t, L, [cfg.n, 2 * cfg.n], cfg.dimension, cfg.drift_reps,
                        cfg.master_seed, workers=cfg.workers)
    _write_csv(out / "theta-drift.csv", [_row("theta-n", t, cfg.n, a), _row("theta-n", t, 2 * cfg.n, b)])
    return {"t": t, "theta_n": a.mean, "theta_2n": b.mean, "diff": a.mean - b.mean,
            "significant": not agree(a, b, cfg.tolerance)}


# one function per kind; each returns (checks, results) and writes its CSVs

def _volume_fraction(cfg: ExperimentConfig, F, L, out: Path):
    rows, checks, results = [], {}, []
    for t in cfg.t_grid:
        e = estimate_volume_fraction(F, t, cfg.dimension, cfg.reps, cfg.master_seed, cfg.workers)
        p = closed_form_volume_fraction(F, t, cfg.dimension)
        # stderr of the exact Bernoulli guards against a zero empirical spread
        se = max(e.stderr, math.sqrt(p * (1 - p) / e.reps))
        checks[f"closed_form:t={t:g}"] = abs(e.mean - p) <= cfg.tolerance * se
        rows.append(_row("volume-fraction", t, None, e, closed_form=p))
        results.append({"t": t, "mean": e.mean, "stderr": e.stderr, "closed_form": p})
    _write_csv(out / "volume-fraction.csv", rows)
    return checks, {"points": results}, None


def _mecke(cfg, F, L, out):
    lhs, rhs = mecke_check(F, cfg.t, cfg.dimension, cfg.region_radius, cfg.reps,
                           cfg.master_seed, m=cfg.m, workers=cfg.workers)
    m = "none" if cfg.m is None else cfg.m
    _write_csv(out / "mecke.csv", [_row("mecke-lhs", cfg.t, None, lhs, m=m),
                                   _row("mecke-rhs", cfg.t, None, rhs, m=m)])
    checks = {"agree:lhs~rhs": agree(lhs, rhs, cfg.tolerance)}
    return checks, {"lhs": lhs.to_dict(), "rhs": rhs.to_dict()}, None


def _theta_curve(cfg, F, L, out):
    curve = theta_curve(F, cfg.t_grid, L, cfg.n, cfg.dimension, cfg.reps, cfg.master_seed,
                        workers=cfg.workers)
    _write_csv(out / "theta.csv", [_row("theta", t, cfg.n, e) for t, e in zip(cfg.t_grid, curve)])
    inversions = sum(b.mean < a.mean for a, b in zip(curve, curve[1:]))
    plot = line_plot([("theta", cfg.t_grid, [e.mean for e in curve], [e.stderr for e in curve])],
                     "t", "theta", f"theta_L^n, n={cfg.n:g}")
    res = {"inversions": inversions, "drift": _drift(cfg, F, L, cfg.t_grid[-1], out)}
    return {"monotone": inversions == 0}, res, plot


def _derivative(cfg, F, L, out):
    rep = derivative_report(F, cfg.t, L, cfg.n, cfg.dimension, cfg.reps, cfg.master_seed,
                            dt=cfg.dt, mc_points=cfg.mc_points, scheme=cfg.scheme,
                            tol=cfg.tolerance, workers=cfg.workers)
    dt = cfg.dt if cfg.dt is not None else cfg.t / 10
    _write_csv(out / "finite-difference.csv",
               [_row("finite-difference", cfg.t, cfg.n, rep.finite_difference, dt=dt, scheme=cfg.scheme)])
    _write_csv(out / "russo.csv", [_row("russo", cfg.t, cfg.n, rep.russo)])
    _write_csv(out / "added-grain.csv",
               [_row("added-grain", cfg.t, cfg.n, rep.added_grain, mc_points=cfg.mc_points)])
    _write_json(out / "derivative.json", rep.to_dict())
    res = {"report": rep.to_dict(), "drift": _drift(cfg, F, L, cfg.t, out)}
    return rep.checks(), res, None


def _threshold(cfg, F, L, out):
    res = estimate_tc(F, cfg.sizes, cfg.dimension, cfg.reps, cfg.tol, cfg.master_seed,
                      bracket=cfg.bracket, workers=cfg.workers)
    rows = [_row("threshold-half", th, a, Estimate(th, se, cfg.reps, f"{cfg.master_seed}:crossing-a{a:g}"))
            for a, th, se in res.per_size_tc]
    _write_csv(out / "threshold.csv", rows)
    _write_json(out / "threshold.json", res.to_dict())
    (_, t_prev, _), (_, t_last, _) = res.per_size_tc[-2:]
    checks = {"spread_two_largest<10%": abs(t_last - t_prev) < 0.1 * t_last}
    sizes = [a for a, _, _ in res.per_size_tc]
    plot = line_plot([("t_half", sizes, [th for _, th, _ in res.per_size_tc],
                       [se for _, _, se in res.per_size_tc])], "a", "t_half", "crossing one half level")
    return checks, res.to_dict(), plot


def _rate_bound(cfg, F, L, out):
    b = F.support_bound
    delta = cfg.delta if cfg.delta is not None else b / 50
    rep = rate_bound_report(F, cfg.t_grid, cfg.tc_hat, L, cfg.n, cfg.dimension, b, cfg.reps,
                            delta, cfg.master_seed, tol=cfg.tolerance, workers=cfg.workers)
    rows = [_row("theta", cfg.tc_hat, cfg.n, rep.theta_at_tc)]
    rows += [_row("theta", t, cfg.n, e) for t, e in zip(cfg.t_grid, rep.theta)]
    _write_csv(out / "theta.csv", rows)
    _write_csv(out / "alpha.csv", [_row("alpha", cfg.tc_hat, None, rep.alpha_hat, delta=delta, b=b)])
    checks = {"no_violations": rep.violations == 0}
    res = {"report": rep.to_dict()}
    if cfg.power_check:
        perturbed = rate_bound_report(F, cfg.t_grid, cfg.tc_hat, L, cfg.n, cfg.dimension, b,
                                      cfg.reps, delta, cfg.master_seed, alpha_override=1.0,
                                      tol=cfg.tolerance, workers=cfg.workers)
        checks["power:alpha=1_violates"] = perturbed.violations >= 1
        res["power_check"] = perturbed.to_dict()
    _write_json(out / "rate-bound.json", res)
    res["drift"] = _drift(cfg, F, L, cfg.t_grid[-1], out)
    lhs = [r["lhs"] for r in rep.rows]
    plot = line_plot([("lhs", cfg.t_grid, lhs, [r["stderr"] for r in rep.rows]),
                      ("rhs", cfg.t_grid, [r["rhs"] for r in rep.rows], [0.0] * len(lhs))],
                     "t", "theta(t) - theta(tc)", "linear lower bound")
    return checks, res, plot


def _slab(cfg, F, L, out):
    curve = slab_crossing_curve(F, cfg.t, cfg.K_grid, cfg.length_a, cfg.dimension, cfg.reps,
                                cfg.master_seed, workers=cfg.workers)
    _write_csv(out / "slab.csv", [_row("slab", cfg.t, None, e, K=K, length_a=cfg.length_a)
                                  for K, e in zip(cfg.K_grid, curve)])
    checks = {
        "monotone_in_K": all(b.mean >= a.mean for a, b in zip(curve, curve[1:])),
        "thickest>thinnest": curve[-1].mean - curve[0].mean
        > cfg.tolerance * math.hypot(curve[-1].stderr, curve[0].stderr),
    }
    plot = line_plot([("slab", cfg.K_grid, [e.mean for e in curve], [e.stderr for e in curve])],
                     "K", "crossing probability", f"slab crossing, t={cfg.t:g}")
    return checks, {"points": [dict(K=K, **e.to_dict()) for K, e in zip(cfg.K_grid, curve)]}, plot


def _stab_radius(cfg, F, L, out):
    b = F.support_bound
    rep = stabilization_survey(F, cfg.t, L, b, cfg.half_width, cfg.dimension, cfg.reps,
                               cfg.master_seed, k_max=cfg.k_max, workers=cfg.workers)
    tag = f"{cfg.master_seed}:stab-radius"
    rows = []
    for k, p, count in rep.survival:
        se = math.sqrt(p * (1 - p) / max(rep.radii.size, 1))
        rows.append(_row("survival", cfg.t, k * b, Estimate(p, se, cfg.reps, tag), count=count))
    _write_csv(out / "stab-radius.csv", rows)
    _write_json(out / "stab-radius.json", rep.to_dict())
    lo, hi = rep.ci95
    checks = {"negative_slope": bool(hi < 0), "censored<5%": rep.censored_fraction < 0.05}
    ks = [k for k, p, _ in rep.survival if p > 0]
    logs = [math.log(p) for _, p, _ in rep.survival if p > 0]
    plot = line_plot([("log P(R > kb)", ks, logs, [0.0] * len(ks))], "k", "log survival",
                     "stabilization radius")
    return checks, rep.to_dict(), plot


KIND_RUNNERS = {
    "volume-fraction": _volume_fraction,
    "mecke": _mecke,
    "theta-curve": _theta_curve,
    "derivative": _derivative,
    "threshold": _threshold,
    "rate-bound": _rate_bound,
    "slab": _slab,
    "stab-radius": _stab_radius,
}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run ``cfg`` and write its output directory; returns the summary dict."""
    F, L = cfg.resolve()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    checks, results, plot = KIND_RUNNERS[cfg.kind](cfg, F, L, out)
    wall = time.perf_counter() - start
    summary = {
        "kind": cfg.kind,
        "master_seed": cfg.master_seed,
        "checks": checks,
        "pass": all(checks.values()),
        "results": results,
    }
    _write_json(out / "summary.json", summary)
    if plot is not None and cfg.plot:
        (out / f"{cfg.kind}.svg").write_text(plot)
    _write_json(out / "manifest.json", {
        "config": cfg.model_dump(mode="json"),
        "version": __version__,
        "wall_time_s": wall,
        "workers": cfg.workers,
    })
    return summary
