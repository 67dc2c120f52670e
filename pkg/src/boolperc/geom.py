"""Grain intersection graphs with two virtual terminals.

The graph has one vertex per grain plus two terminals: TARGET (the compact
set ``L``) and OUTSIDE (the complement of the ball ``B_n``). The event that
``L`` is joined to the complement of ``B_n`` is terminal-to-terminal
connectivity; pivotal grains are the grain vertices separating the two
terminals.

Contact conventions: grains touch when ``|x_i - x_j| <= r_i + r_j``, a grain
meets ``L`` when ``dist(x, L) <= r``, and a grain reaches OUTSIDE when
``|x| + r > n`` (strict).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components, minimum_spanning_tree

from .errors import TargetTooLarge
from .pointproc import Configuration, Window

__all__ = [
    "TargetSet",
    "IntersectionGraph",
    "PivotalReport",
    "UNBOUNDED",
    "grid_pairs",
    "all_pairs",
    "build_graph",
    "terminal_graph",
    "connects_J",
    "cluster_of_target",
    "stabilization_radius",
    "pivotal_report",
    "bridge_test",
    "bridge_mask",
    "ball_covered",
    "box_distance",
    "first_passage_level",
]

UNBOUNDED = math.inf


def box_distance(x: np.ndarray, lo, hi) -> np.ndarray:
    """Euclidean distance from each row of ``x`` to the box ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    gap = np.maximum(np.maximum(lo - x, x - hi), 0.0)
    return np.sqrt(np.sum(gap * gap, axis=-1))


@dataclass(frozen=True)
class TargetSet:
    """Compact target set ``L``: a point, a ball, a box or a union of balls.

    A point is a ball of radius zero; all kinds but ``box`` are stored as
    ``centers``/``radii``.
    """

    kind: str
    centers: tuple[tuple[float, ...], ...] = ()
    radii: tuple[float, ...] = ()
    lo: tuple[float, ...] = ()
    hi: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("point", "ball", "box", "union-of-balls"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind == "box":
            if len(self.lo) != len(self.hi) or not self.lo:
                raise ValueError("box target needs lo and hi of equal length")
            if any(h < l for l, h in zip(self.lo, self.hi)):
                raise ValueError("box target has lo > hi")
        else:
            if not self.centers or len(self.centers) != len(self.radii):
                raise ValueError("target needs at least one center with a radius")
            if any(r < 0 for r in self.radii):
                raise ValueError("target radii must be nonnegative")

    @classmethod
    def point(cls, p) -> "TargetSet":
        return cls("point", (tuple(float(v) for v in p),), (0.0,))

    @classmethod
    def ball(cls, center, radius: float) -> "TargetSet":
        return cls("ball", (tuple(float(v) for v in center),), (float(radius),))

    @classmethod
    def box(cls, lo, hi) -> "TargetSet":
        return cls("box", lo=tuple(float(v) for v in lo), hi=tuple(float(v) for v in hi))

    @classmethod
    def balls(cls, centers, radii) -> "TargetSet":
        return cls("union-of-balls", tuple(tuple(float(v) for v in c) for c in centers),
                   tuple(float(r) for r in radii))

    @classmethod
    def from_spec(cls, spec: dict, d: int | None = None) -> "TargetSet":
        kind = spec["kind"]
        if kind == "point":
            return cls.point(spec.get("center", [0.0] * (d or 2)))
        if kind == "ball":
            return cls.ball(spec.get("center", [0.0] * (d or 2)), spec["radius"])
        if kind == "box":
            return cls.box(spec["lo"], spec["hi"])
        if kind == "union-of-balls":
            return cls.balls(spec["centers"], spec["radii"])
        raise ValueError(f"unknown target kind {kind!r}")

    def to_spec(self) -> dict:
        if self.kind == "box":
            return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}
        if self.kind in ("point", "ball"):
            out = {"kind": self.kind, "center": list(self.centers[0])}
            if self.kind == "ball":
                out["radius"] = self.radii[0]
            return out
        return {"kind": self.kind, "centers": [list(c) for c in self.centers],
                "radii": list(self.radii)}

    @property
    def d(self) -> int:
        return len(self.lo) if self.kind == "box" else len(self.centers[0])

    def distance(self, x: np.ndarray) -> np.ndarray:
        """Distance from each row of ``x`` to the set (zero inside)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "box":
            return box_distance(x, self.lo, self.hi)
        c = np.asarray(self.centers)
        r = np.asarray(self.radii)
        dist = np.sqrt(np.sum((x[:, None, :] - c[None, :, :]) ** 2, axis=-1)) - r
        return np.maximum(dist.min(axis=1), 0.0)

    @property
    def max_norm(self) -> float:
        """``max |y|`` over ``y`` in the set."""
        if self.kind == "box":
            far = np.maximum(np.abs(self.lo), np.abs(self.hi))
            return float(np.sqrt(np.sum(far**2)))
        c = np.asarray(self.centers)
        return float(np.max(np.sqrt(np.sum(c**2, axis=1)) + np.asarray(self.radii)))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "box":
            return np.array(self.lo), np.array(self.hi)
        c = np.asarray(self.centers)
        r = np.asarray(self.radii)[:, None]
        return (c - r).min(axis=0), (c + r).max(axis=0)


# neighbour search

def _pair_filter(x, r, i, j):
    diff = x[i] - x[j]
    touch = np.sum(diff * diff, axis=1) <= (r[i] + r[j]) ** 2
    return i[touch], j[touch]


def _sorted_pairs(i, j) -> np.ndarray:
    out = np.stack([i, j], axis=1).astype(np.int64) if len(i) else np.empty((0, 2), np.int64)
    if len(out):
        out = out[np.lexsort((out[:, 1], out[:, 0]))]
    return out


def all_pairs(x: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Every touching pair ``i < j`` by exhaustive comparison."""
    n = len(r)
    i, j = np.triu_indices(n, k=1)
    return _sorted_pairs(*_pair_filter(x, r, i, j))


def grid_pairs(x: np.ndarray, r: np.ndarray, cell: float) -> np.ndarray:
    """Every touching pair ``i < j`` using a uniform grid of side ``cell``.

    ``cell`` must be at least twice the largest radius so that touching
    grains sit in the same or adjacent cells.
    """
    n, d = x.shape
    if n < 2:
        return np.empty((0, 2), np.int64)
    idx = np.floor((x - x.min(axis=0)) / cell).astype(np.int64) + 1
    dims = idx.max(axis=0) + 2
    strides = np.ones(d, np.int64)
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * dims[k + 1]
    key = idx @ strides
    order = np.argsort(key, kind="stable")
    skey = key[order]
    ii, jj = [], []
    for off in itertools.product((-1, 0, 1), repeat=d):
        okey = key + np.asarray(off, np.int64) @ strides
        start = np.searchsorted(skey, okey, side="left")
        cnt = np.searchsorted(skey, okey, side="right") - start
        total = int(cnt.sum())
        if total == 0:
            continue
        i = np.repeat(np.arange(n), cnt)
        first = np.repeat(np.cumsum(cnt) - cnt, cnt)
        j = order[np.arange(total) - first + np.repeat(start, cnt)]
        keep = i < j
        ii.append(i[keep])
        jj.append(j[keep])
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    return _sorted_pairs(*_pair_filter(x, r, i, j))


# graphs

@dataclass(eq=False)
class IntersectionGraph:
    """Grain adjacency plus TARGET/OUTSIDE terminal links.

    ``target_links`` and ``outside_links`` are boolean masks over grains. The
    same structure serves face-to-face crossing problems, where the two
    terminals are opposite faces of a box.
    """

    n_grains: int
    edges: np.ndarray
    target_links: np.ndarray
    outside_links: np.ndarray
    n: float = math.inf
    target_touches_outside: bool = False

    @cached_property
    def csr(self) -> csr_matrix:
        m = self.n_grains
        e = self.edges
        data = np.ones(2 * len(e), dtype=np.int8)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return coo_matrix((data, (rows, cols)), shape=(m, m)).tocsr()

    @property
    def adjacency(self) -> list[list[int]]:
        """Neighbour index lists per grain (sorted)."""
        a = self.csr
        a.sort_indices()
        ind = a.indices.tolist()
        ptr = a.indptr.tolist()
        return [ind[ptr[k]:ptr[k + 1]] for k in range(self.n_grains)]

    @cached_property
    def labels(self) -> np.ndarray:
        if self.n_grains == 0:
            return np.empty(0, np.int64)
        _, lab = connected_components(self.csr, directed=False)
        return lab

    @cached_property
    def connected(self) -> bool:
        if self.target_touches_outside:
            return True
        lab = self.labels
        t = np.unique(lab[self.target_links])
        o = np.unique(lab[self.outside_links])
        return bool(np.intersect1d(t, o, assume_unique=True).size)

    def write_edge_list(self, path) -> None:
        """``i j`` per line; terminal links use ``T`` and ``O``."""
        with open(path, "w") as fh:
            for i, j in self.edges.tolist():
                fh.write(f"{i} {j}\n")
            for i in np.flatnonzero(self.target_links).tolist():
                fh.write(f"T {i}\n")
            for i in np.flatnonzero(self.outside_links).tolist():
                fh.write(f"{i} O\n")
            if self.target_touches_outside:
                fh.write("T O\n")


def terminal_graph(positions, radii, target_links, outside_links, cell: float,
                   n: float = math.inf, use_grid: bool = True) -> IntersectionGraph:
    positions = np.asarray(positions, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if use_grid:
        edges = grid_pairs(positions, radii, cell)
    else:
        edges = all_pairs(positions, radii)
    return IntersectionGraph(len(radii), edges, np.asarray(target_links, bool),
                             np.asarray(outside_links, bool), n)


def build_graph(c: Configuration, L: TargetSet, n: float, use_grid: bool = True,
                strict: bool = True) -> IntersectionGraph:
    """Intersection graph of the grains of ``c`` with terminals ``L`` and ``R^d \\ B_n``."""
    b = c.margin
    if strict and L.max_norm > n - 2 * b:
        raise TargetTooLarge(f"target reaches |y| = {L.max_norm:.6g} > n - 2b = {n - 2 * b:.6g}")
    x, r = c.positions, c.radii
    target = L.distance(x) <= r if len(r) else np.zeros(0, bool)
    outside = np.sqrt(np.sum(x * x, axis=1)) + r > n
    g = terminal_graph(x, r, target, outside, 2 * b, n, use_grid)
    g.target_touches_outside = L.max_norm > n
    return g


def connects_J(g: IntersectionGraph) -> bool:
    """Whether TARGET and OUTSIDE are joined through grains."""
    return g.connected


def cluster_of_target(c: Configuration, L: TargetSet) -> np.ndarray:
    """Sorted indices of the grains in clusters meeting ``L``."""
    if len(c) == 0:
        return np.empty(0, np.int64)
    target = L.distance(c.positions) <= c.radii
    g = terminal_graph(c.positions, c.radii, target, np.zeros(len(c), bool), 2 * c.margin)
    hit = np.unique(g.labels[target])
    return np.flatnonzero(np.isin(g.labels, hit))


# pivotal grains

@dataclass(frozen=True)
class PivotalReport:
    connected: bool
    pivotal: tuple[int, ...]
    last_pivotal: int | None
    two_disjoint_paths: bool


def pivotal_report(g: IntersectionGraph) -> PivotalReport:
    """Grains whose removal separates TARGET from OUTSIDE, in path order.

    A depth-first search is rooted at TARGET. Along the tree path to OUTSIDE,
    a grain ``v`` with path child ``c`` separates the terminals exactly when
    no back edge leaves the subtree of ``c`` above ``v``
    (``low[c] >= disc[v]``); these are the articulation points of the
    block-cut tree lying between the two terminals.
    """
    if g.target_touches_outside:
        return PivotalReport(True, (), None, True)
    if not g.connected:
        return PivotalReport(False, (), None, False)
    m = g.n_grains
    src, snk = m, m + 1
    adj = g.adjacency
    adj.append(np.flatnonzero(g.target_links).tolist())
    adj.append([])
    for v in adj[src]:
        adj[v] = adj[v] + [src]
    for v in np.flatnonzero(g.outside_links).tolist():
        adj[v] = adj[v] + [snk]
        adj[snk].append(v)

    disc = [-1] * (m + 2)
    low = [0] * (m + 2)
    parent = [-1] * (m + 2)
    disc[src] = low[src] = 0
    clock = 1
    stack = [(src, 0)]
    while stack:
        v, k = stack[-1]
        nbrs = adj[v]
        if k < len(nbrs):
            stack[-1] = (v, k + 1)
            w = nbrs[k]
            if disc[w] < 0:
                parent[w] = v
                disc[w] = low[w] = clock
                clock += 1
                stack.append((w, 0))
            elif w != parent[v] and disc[w] < low[v]:
                low[v] = disc[w]
        else:
            stack.pop()
            p = parent[v]
            if p >= 0 and low[v] < low[p]:
                low[p] = low[v]

    path = [snk]
    while path[-1] != src:
        path.append(parent[path[-1]])
    path.reverse()
    piv = tuple(v for v, child in zip(path[1:-1], path[2:]) if low[child] >= disc[v])
    return PivotalReport(True, piv, piv[-1] if piv else None, not piv)


# bridges

def bridge_mask(c: Configuration, g: IntersectionGraph, L: TargetSet, n: float,
                xs: np.ndarray, rs: np.ndarray) -> np.ndarray:
    """Vectorised :func:`bridge_test` for candidate grains ``(xs[k], rs[k])``.

    ``g`` must be ``build_graph(c, L, n)``. When ``c`` does not connect, a new
    grain creates the connection exactly when it touches ``L`` or the
    TARGET-side clusters, and reaches OUTSIDE itself or touches an
    OUTSIDE-reaching cluster.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    rs = np.asarray(rs, dtype=float).reshape(-1)
    if g.connected:
        return np.zeros(len(rs), bool)
    lab = g.labels
    tcomp = np.isin(lab, lab[g.target_links])
    ocomp = np.isin(lab, lab[g.outside_links])
    hit_t = L.distance(xs) <= rs
    hit_o = np.sqrt(np.sum(xs * xs, axis=1)) + rs > n
    for mask, hit in ((tcomp, hit_t), (ocomp, hit_o)):
        idx = np.flatnonzero(mask)
        if not len(idx):
            continue
        px, pr = c.positions[idx], c.radii[idx]
        for s in range(0, len(rs), 512):
            sl = slice(s, s + 512)
            d2 = np.sum((xs[sl, None, :] - px[None, :, :]) ** 2, axis=-1)
            hit[sl] |= np.any(d2 <= (rs[sl, None] + pr[None, :]) ** 2, axis=1)
    return hit_t & hit_o


def bridge_test(c: Configuration, L: TargetSet, n: float, x, r: float) -> bool:
    """Whether ``c + delta_(x, r)`` joins ``L`` to OUTSIDE while ``c`` does not."""
    g = build_graph(c, L, n)
    return bool(bridge_mask(c, g, L, n, np.asarray(x, dtype=float)[None, :], np.array([r]))[0])


# coverage

def _split(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Halve every index box along each axis with more than one index."""
    mid = (lo + hi) // 2
    d = lo.shape[1]
    out_lo, out_hi = [], []
    for corner in itertools.product((0, 1), repeat=d):
        c = np.array(corner, bool)
        clo = np.where(c, mid + 1, lo)
        chi = np.where(c, hi, mid)
        ok = np.all(clo <= chi, axis=1)
        out_lo.append(clo[ok])
        out_hi.append(chi[ok])
    return np.concatenate(out_lo), np.concatenate(out_hi)


def ball_covered(c: Configuration, center, rho: float, delta: float) -> bool:
    """Whether every lattice point of spacing ``delta`` in ``B_rho(center)`` is covered.

    A resolution-``delta`` approximation of ``B_rho(center) subset Z``. The
    lattice ``delta Z^d`` is searched by recursive halving of index boxes: a
    box is settled when one grain holds all of it or when it has no lattice
    point in the ball; a box with lattice points in the ball that meets no
    grain is a witness of non-coverage.
    """
    if not delta > 0:
        raise ValueError("lattice spacing must be > 0")
    center = np.asarray(center, dtype=float)
    if len(c) == 0:
        return False
    dist = np.sqrt(np.sum((c.positions - center) ** 2, axis=1))
    if np.any(dist + rho <= c.radii):
        return True
    near = dist <= rho + c.radii
    if not near.any():
        return False
    px = c.positions[near] - center
    pr = c.radii[near]
    m = int(math.floor(rho / delta))
    lo = np.full((1, c.d), -m, np.int64)
    hi = np.full((1, c.d), m, np.int64)
    while len(lo):
        # lattice point of each box nearest the centre decides if the box meets the ball
        q = np.clip(0, lo, hi) * delta
        inside = np.sum(q * q, axis=1) <= rho * rho
        lo, hi = lo[inside], hi[inside]
        if not len(lo):
            break
        blo, bhi = lo * delta, hi * delta
        gap = np.maximum(np.maximum(blo[:, None, :] - px[None], px[None] - bhi[:, None, :]), 0.0)
        dmin2 = np.sum(gap * gap, axis=-1)
        far = np.maximum(np.abs(px[None] - blo[:, None, :]), np.abs(px[None] - bhi[:, None, :]))
        dmax2 = np.sum(far * far, axis=-1)
        r2 = pr[None, :] ** 2
        if np.any(np.all(dmin2 > r2, axis=1)):
            return False
        open_ = ~np.any(dmax2 <= r2, axis=1)
        lo, hi = _split(lo[open_], hi[open_])
    return True


# stabilization

def _reaches_boundary(x: np.ndarray, r: np.ndarray, window: Window) -> np.ndarray:
    lo = np.asarray(window.lo)
    hi = np.asarray(window.hi)
    return np.any(x - r[:, None] <= lo, axis=1) | np.any(x + r[:, None] >= hi, axis=1)


def _radius_index(extent: float, b: float) -> int:
    """Smallest ``n >= 1`` with ``extent <= (n - 1) b``."""
    n = max(1, int(math.ceil(extent / b)) + 1)
    while not extent <= (n - 1) * b:
        n += 1
    while n > 1 and extent <= (n - 2) * b:
        n -= 1
    return n


def stabilization_radius(c: Configuration, K: TargetSet, b: float,
                         extra: Configuration | None = None) -> float:
    """Radius of stabilization ``R_{K,b}(phi, phi')`` with ``phi = c``, ``phi' = extra``.

    The infinite cluster is represented by the clusters of ``c`` reaching the
    window boundary. Returns ``n b`` for the smallest ``n >= 1`` such that
    ``K`` and the remaining clusters meeting ``K`` fit in ``B_{(n-1)b}``, or
    :data:`UNBOUNDED` when such a remaining cluster itself touches the window
    boundary (containment cannot be certified).
    """
    if c.margin < b:
        raise ValueError("configuration margin is smaller than b")
    x, r = c.positions, c.radii
    infinite = np.zeros(len(c), bool)
    if len(c):
        g = terminal_graph(x, r, _reaches_boundary(x, r, c.window), np.zeros(len(c), bool), 2 * c.margin)
        infinite = np.isin(g.labels, g.labels[g.target_links])
    fx, fr = x[~infinite], r[~infinite]
    n_fin = len(fr)
    if extra is not None and len(extra):
        fx = np.concatenate([fx, extra.positions])
        fr = np.concatenate([fr, extra.radii])
    extent = K.max_norm
    if len(fr):
        is_extra = np.arange(len(fr)) >= n_fin
        blocked = np.zeros(len(fr), bool)
        if is_extra.any() and infinite.any():
            ix, ir = x[infinite], r[infinite]
            ex, er = fx[is_extra], fr[is_extra]
            d2 = np.sum((ex[:, None, :] - ix[None, :, :]) ** 2, axis=-1)
            blocked[is_extra] = np.any(d2 <= (er[:, None] + ir[None, :]) ** 2, axis=1)
        touch = K.distance(fx) <= fr
        cell = 2 * max(c.margin, float(fr.max()) if len(fr) else 0.0)
        g = terminal_graph(fx, fr, touch, blocked, cell)
        lab = g.labels
        keep = np.isin(lab, lab[touch]) & ~np.isin(lab, lab[blocked])
        if keep.any():
            if np.any(_reaches_boundary(fx[keep], fr[keep], c.window)):
                return UNBOUNDED
            reach = np.sqrt(np.sum(fx[keep] ** 2, axis=1)) + fr[keep]
            extent = max(extent, float(reach.max()))
    return _radius_index(extent, b) * b


# first-passage levels

def first_passage_level(g: IntersectionGraph, births: np.ndarray) -> float:
    """Smallest birth level at which the terminals become connected.

    Each grain enters at ``births[i]``; an edge is usable from the later of
    its endpoints' births. The answer is the bottleneck (minimax) weight of a
    TARGET-to-OUTSIDE path, read off a minimum spanning tree. Returns
    ``inf`` when the terminals are never joined.
    """
    if not g.connected:
        return math.inf
    if g.target_touches_outside:
        return 0.0
    m = g.n_grains
    src, snk = m, m + 1
    e = g.edges
    births = np.asarray(births, dtype=float)
    ti = np.flatnonzero(g.target_links)
    oi = np.flatnonzero(g.outside_links)
    rows = np.concatenate([e[:, 0], ti, oi])
    cols = np.concatenate([e[:, 1], np.full(len(ti), src), np.full(len(oi), snk)])
    w = np.concatenate([np.maximum(births[e[:, 0]], births[e[:, 1]]), births[ti], births[oi]])
    if np.any(w <= 0):
        raise ValueError("birth levels must be positive")
    mst = minimum_spanning_tree(coo_matrix((w, (rows, cols)), shape=(m + 2, m + 2)).tocsr())
    sym = (mst + mst.T).tocsr()
    _, pred = breadth_first_order(sym, src, directed=False, return_predecessors=True)
    best = 0.0
    v = snk
    while v != src:
        p = pred[v]
        best = max(best, sym[p, v])
        v = p
    return float(best)
