"""Warped metrics on finite metric spaces and their level stacks (cones)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csgraph

from .errors import DimensionError, UnknownLevelError
from .group_actions import ball_image
from .markov_core import FiniteMeasureSpace, _frozen

METRIC_TOL = 1e-12
FLOYD_LIMIT = 512
# relative margin a detour must beat before it replaces the current entry
IMPROVE_RTOL = 1e-13
DEFAULT_EXPONENTS = tuple(range(7))


def min_plus(W, D):
    """``(W * D)[x, y] = min_z W[x, z] + D[z, y]``, in row blocks."""
    n = len(D)
    block = max(1, (1 << 22) // max(1, n * n))
    out = np.empty((n, D.shape[1]))
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        out[lo:hi] = (W[lo:hi, :, None] + D[None, :, :]).min(axis=1)
    return out


def triangle_violation(D):
    """Largest ``D[x,y] - D[x,z] - D[z,y]`` (0 for a metric)."""
    if len(D) == 0:
        return 0.0
    return max(0.0, float(np.max(D - min_plus(D, D))))


def bellman_gap(W, D):
    """Largest ``|min_{z != x} (W[x,z] + D[z,y]) - D[x,y]|`` over ``x != y``.

    Zero exactly when D is the shortest-path metric of the edge weights W.
    """
    n = len(D)
    if n < 2:
        return 0.0
    Wo = np.array(W, dtype=float)
    np.fill_diagonal(Wo, np.inf)
    best = min_plus(Wo, D)
    off = ~np.eye(n, dtype=bool)
    diff = np.abs(best - D)[off]
    return float(np.max(diff))


@dataclass(frozen=True, eq=False)
class FiniteMetric:
    space: FiniteMeasureSpace
    dist: np.ndarray
    diameter: float = 0.0

    def __post_init__(self):
        D = np.array(self.dist, dtype=float)
        n = self.space.n
        if D.shape != (n, n):
            raise DimensionError(f"distance matrix has shape {D.shape}, expected {(n, n)}")
        if not np.array_equal(D, D.T):
            raise ValueError("distance matrix must be exactly symmetric")
        if np.any(np.diag(D) != 0) or np.any(D < 0) or not np.all(np.isfinite(D)):
            raise ValueError("distances must be finite, nonnegative, zero on the diagonal")
        if n <= FLOYD_LIMIT:
            bad = triangle_violation(D)
            if bad > METRIC_TOL * max(1.0, float(D.max())):
                raise ValueError(f"triangle inequality fails by {bad:.3e}")
        object.__setattr__(self, "dist", _frozen(D))
        object.__setattr__(self, "diameter", float(D.max()))


def normalize_diameter(metric):
    """Rescale to diameter 2 when larger; the cone formula needs diameter <= 2."""
    if metric.diameter <= 0:
        raise ValueError("cannot normalize a metric of diameter 0")
    if metric.diameter <= 2:
        return metric
    return FiniteMetric(metric.space, metric.dist * (2.0 / metric.diameter))


@dataclass(frozen=True, eq=False)
class WarpedLevel:
    t: float
    base: FiniteMetric
    action: object
    warped: np.ndarray
    bellman_gap: Optional[float] = None

    def distance(self, x, y):
        return float(self.warped[x, y])


def constraint_matrix(metric, action, t):
    """Edge weights: ``t d`` on all pairs, lowered to ``l(s)`` on generator edges."""
    W = t * np.asarray(metric.dist, dtype=float)
    rows = np.arange(action.n)
    for s in action.gens.symbols:
        if s == action.gens.identity:
            continue
        ln = float(action.gens.length[s])
        p = action.perm[s]
        np.minimum.at(W, (rows, p), ln)
        np.minimum.at(W, (p, rows), ln)
    np.fill_diagonal(W, 0.0)
    return W


def _floyd_warshall(W):
    D = W.copy()
    for k in range(len(D)):
        cand = D[:, k, None] + D[None, k, :]
        better = cand < D * (1 - IMPROVE_RTOL)
        if np.any(better):
            D = np.where(better, cand, D)
    return D


def warp(metric, action, t, certify=None):
    """Largest metric below ``t d`` with every generator move costing at most ``l(s)``.

    On finitely many points this is the shortest-path metric of the constraint
    graph.  ``certify`` (default: for n <= FLOYD_LIMIT) records the Bellman
    gap of the result, which is 0 for the exact answer.
    """
    if t < 1:
        raise ValueError(f"warping scale must be >= 1, got {t}")
    if action.space.n != metric.space.n:
        raise DimensionError("action and metric live on different atom sets")
    W = constraint_matrix(metric, action, float(t))
    n = len(W)
    if n <= FLOYD_LIMIT:
        D = _floyd_warshall(W)
    else:
        D = csgraph.shortest_path(W, method="D", directed=False)
        # csgraph treats zero off-diagonal weights as absent; those pairs are at 0
        D = np.minimum(D, W)
    D = np.minimum(D, D.T)
    np.fill_diagonal(D, 0.0)
    gap = None
    if certify or (certify is None and n <= FLOYD_LIMIT):
        gap = bellman_gap(W, D)
    return WarpedLevel(float(t), metric, action, _frozen(D), gap)


def warped_level_residuals(level):
    """Violations of the defining properties: ``D <= tD``, generator bound,
    triangle inequality, and Bellman optimality."""
    D = level.warped
    t, d, act = level.t, level.base.dist, level.action
    below = float(np.max(D - t * d))
    gen = 0.0
    rows = np.arange(act.n)
    for s in act.gens.symbols:
        gen = max(gen, float(np.max(D[rows, act.perm[s]] - act.gens.length[s])))
    W = constraint_matrix(level.base, act, t)
    return {
        "below_scaled_base": max(below, 0.0),
        "generator_bound": max(gen, 0.0),
        "triangle": triangle_violation(D),
        "bellman": bellman_gap(W, D),
    }


@dataclass(frozen=True, eq=False)
class SparseCone:
    """Finitely many levels ``X x {t}`` with the unified cone distance."""

    levels: tuple
    level_offsets: tuple

    def level(self, t):
        for lev in self.levels:
            if lev.t == t:
                return lev
        raise UnknownLevelError(t, self.level_offsets)


def cone_from_levels(metric, action, ts):
    metric = normalize_diameter(metric)
    levels = tuple(warp(metric, action, t) for t in ts)
    return SparseCone(levels, tuple(float(t) for t in ts))


def sparse_cone(metric, action, exponents=DEFAULT_EXPONENTS):
    """Levels at ``t = 2^n``."""
    return cone_from_levels(metric, action, [2.0 ** k for k in exponents])


def integral_cone(metric, action, n_max):
    """Levels at ``t = 1, ..., n_max``."""
    return cone_from_levels(metric, action, range(1, n_max + 1))


def cone_distance(cone, p, q):
    """``d^{min(t1,t2)}(x, y) + |t1 - t2|`` for points ``(x, t1)`` and ``(y, t2)``."""
    (x, t1), (y, t2) = p, q
    lo = cone.level(min(t1, t2))
    cone.level(max(t1, t2))
    return float(lo.warped[x, y]) + abs(float(t1) - float(t2))


def _ball_tol(R):
    return R + METRIC_TOL * max(1.0, abs(R))


def warped_ball(level, x, R):
    if R < 0:
        raise ValueError("radius must be nonnegative")
    return tuple(int(y) for y in np.flatnonzero(level.warped[x] <= _ball_tol(R)))


def neighborhood(level, A, R):
    """Closed R-neighbourhood of A in the warped metric."""
    A = list(A)
    if not A:
        return ()
    return tuple(int(y) for y in np.flatnonzero(level.warped[A].min(axis=0) <= _ball_tol(R)))


@dataclass(frozen=True)
class StabilizationReport:
    R: float
    t_list: tuple
    neighborhoods: tuple
    stable_value: tuple
    first_stable_t: float
    expected: tuple
    matches: bool


def neighborhood_stabilization(metric, action, A, R, t_list, levels=None):
    """Follow ``N_R(A; d^t)`` along ``t_list`` and compare the stable tail
    with ``B_floor(R) . A``."""
    t_list = tuple(float(t) for t in t_list)
    if not t_list:
        raise ValueError("t_list is empty")
    if any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise ValueError("t_list must be increasing")
    if levels is None:
        levels = [warp(metric, action, t) for t in t_list]
    nbhd = tuple(neighborhood(lev, A, R) for lev in levels)
    first = len(nbhd) - 1
    while first > 0 and nbhd[first - 1] == nbhd[-1]:
        first -= 1
    expected = ball_image(action, A, math.floor(R + METRIC_TOL))
    stable = nbhd[-1]
    return StabilizationReport(float(R), t_list, nbhd, stable, t_list[first],
                               expected, stable == expected)


# -- default base metrics ----------------------------------------------------

def chord_metric(space):
    """Chord lengths of the regular n-gon on the unit circle: ``2 sin(pi |j-k| / n)``."""
    n = space.n
    j = np.arange(n)
    diff = np.abs(j[:, None] - j[None, :])
    D = 2.0 * np.sin(np.pi * np.minimum(diff, n - diff) / n)
    D = np.maximum(D, D.T)
    np.fill_diagonal(D, 0.0)
    return FiniteMetric(space, D)


def torus_metric(space, n, coords):
    """Flat metric on points ``(i/n, j/n)`` of the unit torus."""
    c = np.asarray(coords, dtype=float)
    diff = np.abs(c[:, None, :] - c[None, :, :])
    diff = np.minimum(diff, n - diff) / n
    D = np.sqrt((diff ** 2).sum(axis=2))
    D = np.maximum(D, D.T)
    np.fill_diagonal(D, 0.0)
    return FiniteMetric(space, D)


def dyadic_ultrametric(space):
    """``d(x, y) = 2^-v`` where ``2^v`` exactly divides ``x - y`` (n a power of 2)."""
    n = space.n
    if n & (n - 1):
        raise ValueError("dyadic ultrametric needs a power-of-two atom count")
    j = np.arange(n)
    diff = (j[:, None] - j[None, :]) % n
    D = np.zeros((n, n))
    nz = diff != 0
    low = diff[nz] & -diff[nz]
    D[nz] = 1.0 / low
    return FiniteMetric(space, D)


def discrete_metric(space, value=1.0):
    D = np.full((space.n, space.n), float(value))
    np.fill_diagonal(D, 0.0)
    return FiniteMetric(space, D)


# -- export ------------------------------------------------------------------

def levels_to_csv(levels):
    """Long-format CSV: one row per (t, x, y)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "y", "distance"])
    for lev in levels:
        ids = lev.base.space.point_ids
        n = len(ids)
        for i in range(n):
            for j in range(n):
                w.writerow([repr(lev.t), ids[i], ids[j], "%.16e" % lev.warped[i, j]])
    return buf.getvalue()


def level_to_csv(level):
    """Square matrix CSV with atom ids as row and column headers."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    ids = level.base.space.point_ids
    w.writerow([""] + list(ids))
    for i, pid in enumerate(ids):
        w.writerow([pid] + ["%.16e" % v for v in level.warped[i]])
    return buf.getvalue()
