import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.sparse.csgraph import floyd_warshall

from expansionlab.errors import CompatibilityError, UnknownAtomError
from expansionlab.group_actions import (
    ChainLevel,
    FiniteAction,
    GeneratorSet,
    ball_image,
    dyadic_chain_levels,
    gen_cycle,
    gen_dyadic_chain,
    gen_margulis_torus,
    gen_schreier_chain,
    gen_swap,
    is_free,
    orbit_distance,
    random_weighted_action,
    rn_table,
    theta_bound,
    words,
)
from expansionlab.markov_core import FiniteMeasureSpace

seeds = st.integers(0, 2 ** 32 - 1)


def rand_action(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(1, 11))
    return random_weighted_action(n, rng, n_pairs=int(rng.integers(0, 3)),
                                  self_inverse=int(rng.integers(0, 2)))


def graph_distances(action):
    """Orbit distance from scipy's Floyd-Warshall on the generator graph."""
    n = action.n
    W = np.full((n, n), np.inf)
    for s in action.gens.symbols:
        if s == action.gens.identity:
            continue
        for x, y in enumerate(action.perm[s]):
            if x != y:
                W[x, y] = min(W[x, y], action.gens.length[s])
    return floyd_warshall(np.where(np.isinf(W), 0, W), directed=True)


# -- validation ------------------------------------------------------------------

def test_generator_set_validation():
    with pytest.raises(ValueError):
        GeneratorSet(("a", "b"), {"a": "b", "b": "b"}, {"a": 1, "b": 1})
    with pytest.raises(ValueError):
        GeneratorSet(("a", "A"), {"a": "A", "A": "a"}, {"a": 1, "A": 2})
    with pytest.raises(ValueError):
        GeneratorSet(("e",), {"e": "e"}, {"e": 1}, "e")


def test_action_rejects_non_bijection_and_bad_inverse():
    gens = GeneratorSet(("a", "A"), {"a": "A", "A": "a"}, {})
    space = FiniteMeasureSpace.uniform(3)
    with pytest.raises(ValueError):
        FiniteAction(space, gens, {"a": [0, 0, 1], "A": [0, 1, 2]})
    with pytest.raises(ValueError):
        FiniteAction(space, gens, {"a": [1, 2, 0], "A": [1, 2, 0]})


def test_schreier_chain_incompatible_projection():
    gens = GeneratorSet(("e", "+1", "-1"), {"e": "e", "+1": "-1", "-1": "+1"}, {}, "e")
    levels = dyadic_chain_levels(2)
    bad = ChainLevel(4, levels[1].perms, [0, 0, 1, 1])
    with pytest.raises(CompatibilityError):
        gen_schreier_chain(gens, [levels[0], bad])


def test_dyadic_chain_sizes():
    chain = gen_dyadic_chain(4)
    assert [a.n for a in chain] == [2, 4, 8, 16]


# -- hand examples -----------------------------------------------------------------

def test_cycle_ball_and_distance():
    a = gen_cycle(8)
    assert ball_image(a, [0], 2) == (0, 1, 2, 6, 7)
    assert orbit_distance(a, 0, 3) == 3
    assert orbit_distance(a, 0, 5) == 3


def test_distance_across_orbits_is_infinite():
    a = gen_margulis_torus(3)
    origin = a.space.index_of("0_0")
    assert orbit_distance(a, origin, a.space.index_of("1_0")) == math.inf
    with pytest.raises(UnknownAtomError):
        orbit_distance(a, 0, 99)


def test_margulis_orbits():
    assert len(gen_margulis_torus(3).orbits()) == 2
    assert len(gen_margulis_torus(3, punctured=True).orbits()) == 1
    assert len(gen_margulis_torus(5, punctured=True).orbits()) == 1


def test_word_perm_rightmost_acts_first():
    a = gen_margulis_torus(5)
    x = a.space.index_of("1_0")
    # b first: (1,0) -> (1,1); then a: (1,1) -> (2,1)
    assert a.space.point_ids[a.word_perm(("a", "b"))[x]] == "2_1"


def test_theta_for_weighted_swap():
    a = gen_swap([1 / 3, 2 / 3])
    assert theta_bound(a, [0, 1]) == pytest.approx(2.0)
    assert theta_bound(a, [0]) == 1.0


def test_freeness():
    # (+1)^5 fixes every atom of Z/5 but is only found once the cap reaches 5
    assert is_free(gen_cycle(5), length_cap=4).free
    rep = is_free(gen_cycle(5), length_cap=5)
    assert not rep.free and rep.witness_word == ("+1",) * 5
    assert not is_free(gen_margulis_torus(3)).free


def test_words_by_length():
    a = gen_cycle(5)
    assert len(words(a, 0)) == 1
    assert len(words(a, 2)) == 1 + 2 + 4


# -- properties ------------------------------------------------------------------

@given(seeds)
def test_distance_matrix_matches_scipy(seed):
    a = rand_action(seed)
    assert np.array_equal(a.distance_matrix(), graph_distances(a))


@given(seeds)
def test_rn_inversion_and_change_of_variable(seed):
    a = rand_action(seed)
    tab = rn_table(a)
    assert tab.inversion_residual() < 1e-12
    rng = np.random.default_rng(seed)
    Y = np.flatnonzero(rng.random(a.n) < 0.6)
    if len(Y):
        assert tab.change_of_variable_residual(rng.normal(size=a.n), Y) < 1e-12


@given(seeds, st.integers(0, 4), st.integers(0, 4))
def test_balls_submultiplicative_and_monotone(seed, k, l):
    a = rand_action(seed)
    rng = np.random.default_rng(seed)
    A = np.flatnonzero(rng.random(a.n) < 0.4)
    if not len(A):
        A = [0]
    inner = ball_image(a, ball_image(a, A, k), l)
    assert set(inner) <= set(ball_image(a, A, k + l))
    assert set(ball_image(a, A, k)) <= set(ball_image(a, A, k + 1))
    assert set(int(x) for x in A) <= set(ball_image(a, A, k))


@given(seeds)
def test_orbit_distance_symmetric_triangle(seed):
    a = rand_action(seed)
    D = a.distance_matrix()
    assert np.array_equal(D, D.T)
    fin = np.where(np.isfinite(D), D, 1e9)
    assert np.all(fin[:, None, :] <= fin[:, :, None] + fin[None, :, :] + 1e-9)


@given(seeds)
def test_theta_at_least_one_and_inverse_symmetric(seed):
    a = rand_action(seed)
    assert theta_bound(a, range(a.n)) >= 1.0
