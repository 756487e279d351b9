import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.sparse.csgraph import floyd_warshall

from expansionlab.errors import DimensionError, UnknownLevelError
from expansionlab.families import build
from expansionlab.group_actions import (
    FiniteAction,
    GeneratorSet,
    ball_image,
    gen_cycle,
    gen_swap,
    random_weighted_action,
)
from expansionlab.markov_core import FiniteMeasureSpace
from expansionlab.warped_cone import (
    FiniteMetric,
    bellman_gap,
    chord_metric,
    cone_distance,
    discrete_metric,
    dyadic_ultrametric,
    integral_cone,
    level_to_csv,
    levels_to_csv,
    neighborhood,
    neighborhood_stabilization,
    normalize_diameter,
    sparse_cone,
    warp,
    warped_ball,
    warped_level_residuals,
)

seeds = st.integers(0, 2 ** 32 - 1)
scales = st.floats(1.0, 200.0)


def random_metric(space, rng):
    """Shortest-path metric of a random complete graph."""
    n = space.n
    W = rng.random((n, n)) + 0.05
    W = np.triu(W, 1)
    W = W + W.T
    D = floyd_warshall(W, directed=False)
    D = np.maximum(D, D.T)
    return FiniteMetric(space, D)


def oracle_warp(metric, action, t):
    n = action.n
    W = t * np.array(metric.dist)
    for s in action.gens.symbols:
        for x in range(n):
            y = int(action.perm[s][x])
            if x != y:
                L = action.gens.length[s]
                W[x, y] = min(W[x, y], L)
                W[y, x] = min(W[y, x], L)
    return floyd_warshall(W, directed=False)


def trivial(space):
    return FiniteAction(space, GeneratorSet(("e",), {"e": "e"}, {"e": 0}, "e"),
                        {"e": np.arange(space.n)})


def rand_case(seed):
    rng = np.random.default_rng(seed)
    a = random_weighted_action(int(rng.integers(2, 10)), rng, n_pairs=int(rng.integers(0, 3)),
                               self_inverse=int(rng.integers(0, 2)))
    return a, random_metric(a.space, rng)


# -- metrics -------------------------------------------------------------------

def test_metric_validation():
    s = FiniteMeasureSpace.uniform(3)
    with pytest.raises(ValueError):
        FiniteMetric(s, [[0, 1, 5], [1, 0, 1], [5, 1, 0]])
    with pytest.raises(ValueError):
        FiniteMetric(s, [[0, 1, 1], [1, 0, 1], [1, 1.5, 0]])
    with pytest.raises(DimensionError):
        FiniteMetric(s, np.zeros((2, 2)))


def test_base_metrics():
    s = FiniteMeasureSpace.uniform(8)
    assert chord_metric(s).diameter == pytest.approx(2.0)
    d = dyadic_ultrametric(s).dist
    assert d[0, 4] == 0.25 and d[0, 1] == 1.0 and d[2, 6] == 0.25
    assert discrete_metric(s, 3.0).diameter == 3.0
    assert normalize_diameter(discrete_metric(s, 4.0)).diameter == pytest.approx(2.0)


# -- hand examples -----------------------------------------------------------------

@pytest.mark.parametrize("t", [1.0, 2.0, 10.0, 1e3, 1e6])
def test_swap_warp_is_one(t):
    a = gen_swap()
    lev = warp(discrete_metric(a.space, 2.0), a, t)
    assert lev.warped[0, 1] == 1.0


def test_swap_cone_distance():
    a = gen_swap()
    cone = integral_cone(discrete_metric(a.space, 2.0), a, 8)
    assert cone_distance(cone, (0, 2), (1, 8)) == 7.0
    with pytest.raises(UnknownLevelError):
        cone_distance(cone, (0, 2), (1, 9))


def test_trivial_action_scales_exactly():
    s = FiniteMeasureSpace.uniform(6)
    m = chord_metric(s)
    for t in (1.0, 2.5, 64.0):
        assert np.array_equal(warp(m, trivial(s), t).warped, t * m.dist)


def test_warp_rejects_small_scale():
    a = gen_swap()
    with pytest.raises(ValueError):
        warp(discrete_metric(a.space), a, 0.5)


def test_cycle_stabilization():
    a = gen_cycle(12)
    m = chord_metric(a.space)
    rep = neighborhood_stabilization(m, a, [0], 2, [2.0 ** k for k in range(8)])
    assert rep.matches
    assert rep.stable_value == ball_image(a, [0], 2) == (0, 1, 2, 10, 11)
    # neighbourhoods shrink as t grows
    for big, small in zip(rep.neighborhoods, rep.neighborhoods[1:]):
        assert set(small) <= set(big)


def test_balls():
    a = gen_cycle(8)
    lev = warp(chord_metric(a.space), a, 100.0)
    assert warped_ball(lev, 0, 1) == (0, 1, 7)
    assert neighborhood(lev, [], 1) == ()
    assert neighborhood(lev, [0, 4], 0) == (0, 4)


def test_csv_exports():
    a = gen_swap()
    levels = [warp(discrete_metric(a.space, 2.0), a, t) for t in (1.0, 10.0)]
    rows = list(csv.reader(io.StringIO(levels_to_csv(levels))))
    assert rows[0] == ["t", "x", "y", "distance"]
    assert len(rows) == 1 + 2 * 4
    assert {float(r[3]) for r in rows[1:] if r[1] != r[2]} == {1.0}
    sq = list(csv.reader(io.StringIO(level_to_csv(levels[0]))))
    assert sq[0] == ["", "0", "1"] and float(sq[1][2]) == 1.0


# -- properties ------------------------------------------------------------------

@given(seeds, scales)
def test_warp_matches_oracle(seed, t):
    a, m = rand_case(seed)
    lev = warp(m, a, t)
    assert np.allclose(lev.warped, oracle_warp(m, a, t), rtol=1e-12, atol=1e-12)
    assert lev.bellman_gap <= 1e-12 * max(1.0, t)


@given(seeds, scales)
def test_warp_defining_properties(seed, t):
    a, m = rand_case(seed)
    res = warped_level_residuals(warp(m, a, t))
    assert max(res.values()) <= 1e-12 * max(1.0, t * m.diameter)


@given(seeds, scales, scales)
def test_monotone_in_t(seed, t1, t2):
    a, m = rand_case(seed)
    lo, hi = sorted((t1, t2))
    assert np.all(warp(m, a, lo).warped <= warp(m, a, hi).warped + 1e-12)


@given(seeds, scales)
def test_more_generators_shrink_distances(seed, t):
    a, m = rand_case(seed)
    assert np.all(warp(m, a, t).warped <= warp(m, trivial(a.space), t).warped + 1e-12)


@given(seeds)
def test_cone_triangle(seed):
    a, m = rand_case(seed)
    cone = sparse_cone(m, a, range(5))
    rng = np.random.default_rng(seed)
    ts = cone.level_offsets
    for _ in range(50):
        p, q, r = [(int(rng.integers(a.n)), ts[int(rng.integers(len(ts)))]) for _ in range(3)]
        assert cone_distance(cone, p, r) <= cone_distance(cone, p, q) + cone_distance(cone, q, r) + 1e-12


@given(seeds, st.integers(0, 3))
def test_stabilization_reaches_ball(seed, R):
    a, m = rand_case(seed)
    rng = np.random.default_rng(seed)
    A = np.flatnonzero(rng.random(a.n) < 0.4) if a.n > 1 else [0]
    if not len(A):
        A = [0]
    # beyond t > R / min positive distance the generator graph alone decides
    t_top = 2.0 ** math.ceil(math.log2((R + 1) / m.dist[m.dist > 0].min() + 1))
    rep = neighborhood_stabilization(m, a, A, R, [1.0, t_top, 2 * t_top])
    assert rep.matches


def test_bellman_gap_detects_non_shortest_paths():
    W = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float)
    assert bellman_gap(W, floyd_warshall(W)) == 0.0
    assert bellman_gap(W, W) == pytest.approx(3.0)


def test_registry_metrics_certified():
    for name in ("margulis:4", "schreier-dyadic:4", "split-cycle:6"):
        fam = build(name)
        cone = sparse_cone(fam.metric, fam.action)
        assert all(lev.bellman_gap <= 1e-12 for lev in cone.levels)
