import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import all_subsets
from expansionlab.errors import CapExceededError, DimensionError
from expansionlab.expansion import build_action_kernel
from expansionlab.families import build, margulis_refining, split_cycle
from expansionlab.group_actions import (
    gen_cycle,
    gen_margulis_torus,
    gen_swap,
    random_weighted_action,
    words,
)
from expansionlab.markov_core import FiniteMeasureSpace, symmetrized, two_point_kernel
from expansionlab.operator_analysis import (
    RankOneProjection,
    WeightedOperator,
    ad_embedding_projection,
    averaging_projection,
    cut_norm,
    finite_propagation_witnesses,
    generator_operator,
    ghost_profile,
    hat_embedding_projection,
    hat_markov_operator,
    markov_power_projection,
    poincare_obstruction_witness,
    refining_ghost_profile,
    rho_propagation,
    rho_quasi_locality_profile,
    truncate,
    warped_quasi_locality_profile,
    word_operator,
)
from expansionlab.warped_cone import sparse_cone, warp

seeds = st.integers(0, 2 ** 32 - 1)


def rand_action(seed, lo=2, hi=8):
    rng = np.random.default_rng(seed)
    return random_weighted_action(int(rng.integers(lo, hi + 1)), rng,
                                  n_pairs=int(rng.integers(0, 3)),
                                  self_inverse=int(rng.integers(0, 2)))


def brute_eps(M, close):
    """max over all (A, C) with no close pair of the block's top singular value."""
    n = len(M)
    best = 0.0
    for A in all_subsets(n):
        for C in all_subsets(n):
            if np.any(close[np.ix_(A, C)]):
                continue
            best = max(best, np.linalg.svd(M[np.ix_(A, C)], compute_uv=False)[0])
    return best


# -- basic operators -------------------------------------------------------------

def test_rank_one_validation():
    s = FiniteMeasureSpace.uniform(2)
    with pytest.raises(ValueError):
        RankOneProjection(s, [1.0, 1.0])
    with pytest.raises(DimensionError):
        RankOneProjection(s, [1.0])


def test_frames_round_trip():
    s = FiniteMeasureSpace((0, 1, 2), [0.2, 0.3, 0.5])
    K = np.arange(9.0).reshape(3, 3)
    op = WeightedOperator.from_function_frame(s, K)
    assert np.allclose(op.function_frame(), K)
    f = np.array([1.0, -2.0, 0.5])
    assert np.allclose(op.apply(f), K @ f)


def test_averaging_projection_matrix():
    s = FiniteMeasureSpace((0, 1, 2), [0.2, 0.3, 0.5])
    P = averaging_projection(s).operator()
    f = np.array([1.0, 2.0, 3.0])
    assert np.allclose(P.apply(f), np.full(3, 0.2 + 0.6 + 1.5))
    assert P.hermitian_residual() == 0.0
    assert np.allclose((P @ P).matrix, P.matrix)


def test_generators_are_unitary_permutations():
    a = gen_margulis_torus(3)
    for s in a.gens.symbols:
        U = generator_operator(a, s).matrix
        assert np.allclose(U @ U.T, np.eye(a.n))
    w = ("a", "b", "A")
    assert np.array_equal(word_operator(a, w).matrix,
                          (generator_operator(a, "a") @ generator_operator(a, "b")
                           @ generator_operator(a, "A")).matrix)


@given(seeds)
def test_word_propagation_at_most_length(seed):
    a = rand_action(seed)
    for w in words(a, 3):
        L = sum(a.gens.length[s] for s in w)
        assert rho_propagation(word_operator(a, w), a) <= L


def test_propagation_infinite_across_orbits():
    a = split_cycle(3)
    assert rho_propagation(averaging_projection(a.space), a) == math.inf
    assert rho_propagation(np.zeros((6, 6)), a) == 0


# -- cut norms and quasi-locality -----------------------------------------------

@given(seeds)
def test_cut_norm_formula(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    w = rng.random(n) + 0.01
    s = FiniteMeasureSpace(tuple(range(n)), w / w.sum())
    P = averaging_projection(s)
    nu = s.weights
    for _ in range(20):
        A = np.flatnonzero(rng.random(n) < 0.5)
        C = np.flatnonzero(rng.random(n) < 0.5)
        assert cut_norm(P, A, C) == pytest.approx(math.sqrt(nu[A].sum() * nu[C].sum()), abs=1e-12)


@given(seeds)
def test_qlocal_scan_matches_brute_force(seed):
    a = rand_action(seed, 2, 5)
    P = averaging_projection(a.space)
    H = hat_markov_operator(build_action_kernel(a))
    D = a.distance_matrix()
    for T, M in ((P, P.operator().matrix), (H, H.matrix)):
        prof = rho_quasi_locality_profile(T, a, [0, 1, 2])
        for k, e, (A, C) in zip(prof.radii, prof.eps, prof.witnesses):
            assert e == pytest.approx(brute_eps(M, D <= k), abs=1e-12)
            assert cut_norm(T, A, C) == pytest.approx(e, abs=1e-12)


@given(seeds)
def test_rank_one_fast_path_agrees_with_general(seed):
    a = rand_action(seed)
    P = averaging_projection(a.space)
    fast = rho_quasi_locality_profile(P, a, range(3))
    slow = rho_quasi_locality_profile(P.operator(), a, range(3))
    assert np.allclose(fast.eps, slow.eps, atol=1e-12)


def test_qlocal_expanding_vs_split():
    a = build("margulis-punctured:3").action
    prof = rho_quasi_locality_profile(averaging_projection(a.space), a, range(5))
    assert prof.eps[-1] == 0.0
    assert all(x >= y for x, y in zip(prof.eps, prof.eps[1:]))
    b = split_cycle(4)
    prof = rho_quasi_locality_profile(averaging_projection(b.space), b, range(8))
    assert min(prof.eps) >= math.sqrt(0.5 * 0.5) - 1e-10


def test_qlocal_cap_and_sampling():
    a = gen_cycle(24)
    H = hat_markov_operator(build_action_kernel(a))
    with pytest.raises(CapExceededError):
        rho_quasi_locality_profile(H, a, [1], mode="exact")
    prof = rho_quasi_locality_profile(H, a, [1], rng=np.random.default_rng(1), n_samples=200)
    assert prof.mode == "sampled" and prof.is_lower_bound


def test_warped_profile_below_dynamical():
    fam = build("cycle:8")
    P = averaging_projection(fam.action.space)
    dyn = rho_quasi_locality_profile(P, fam.action, range(4))
    for lev in sparse_cone(fam.metric, fam.action).levels:
        prof = warped_quasi_locality_profile(P, lev, [0.5, 1.0, 2.0, 3.0])
        for R, e in zip(prof.radii, prof.eps):
            assert e <= dyn.eps[int(R)] + 1e-12


# -- Markov operators ------------------------------------------------------------

def test_two_point_power_rate():
    r = markov_power_projection(two_point_kernel(0.3, 0.3), 50)
    assert np.allclose(r.norms, 0.4 ** np.arange(1, 51), atol=1e-12)
    assert r.has_gap and r.holds and r.predicted_rate == pytest.approx(0.4)


@given(seeds)
def test_power_convergence_and_propagation(seed):
    ak = build_action_kernel(rand_action(seed))
    r = markov_power_projection(ak, 20)
    if r.has_gap:
        assert r.holds
    assert all(p <= b for p, b in zip(r.propagation, r.propagation_bound))


def test_power_without_gap():
    r = markov_power_projection(build_action_kernel(split_cycle(3)), 5)
    assert not r.has_gap and not r.holds


def test_margulis_punctured_rate():
    r = markov_power_projection(build_action_kernel(gen_margulis_torus(3, punctured=True)), 10)
    assert r.predicted_rate == pytest.approx(0.7464, abs=1e-4)
    assert r.holds


@given(seeds)
def test_hat_projection_properties(seed):
    ak = build_action_kernel(rand_action(seed))
    P = hat_embedding_projection(ak).operator().matrix
    assert np.allclose(P @ P, P) and np.allclose(P, P.T)
    H = hat_markov_operator(ak).matrix
    assert np.allclose(H, H.T)
    # the projection is the top spectral projection of the hat Markov operator
    assert np.allclose(H @ P, P, atol=1e-12)


def test_hat_equals_averaging_when_measure_preserving():
    a = gen_cycle(6)
    ak = build_action_kernel(a)
    assert np.allclose(hat_embedding_projection(ak).operator().matrix,
                       averaging_projection(a.space).operator().matrix)
    assert np.allclose(hat_markov_operator(ak).matrix, symmetrized(ak.kernel))


@given(seeds)
def test_ad_identity(seed):
    a = rand_action(seed)
    rng = np.random.default_rng(seed)
    Y = np.flatnonzero(rng.random(a.n) < 0.7)
    if not len(Y):
        return
    r = ad_embedding_projection(build_action_kernel(a, Y=Y), n_powers=5)
    assert r.residual < 1e-10 and r.holds


def test_ad_scale_weighted_swap():
    a = gen_swap([1 / 3, 2 / 3])
    r = ad_embedding_projection(build_action_kernel(a), n_powers=30)
    assert r.scale == pytest.approx(3 / (3 + 2 * math.sqrt(2)))
    assert r.power_distances[-1] < 1e-8


def test_finite_propagation_witnesses():
    ak = build_action_kernel(gen_margulis_torus(3, punctured=True))
    wit = finite_propagation_witnesses(ak, [0, 1, 2, 3])
    assert wit[0].markov_power_bound == 1.0
    assert all(w.truncation_bound <= 1.0 + 1e-12 for w in wit)
    assert wit[-1].truncation_bound == pytest.approx(0.0, abs=1e-12)
    P = hat_embedding_projection(ak)
    assert rho_propagation(truncate(P, ak.action, 1), ak.action) <= 1


# -- ghost and Poincare ------------------------------------------------------------

def test_ghost_on_refining_margulis():
    pairs = [(averaging_projection(a.space), warp(m, a, t)) for _, a, m, t in margulis_refining()]
    g = [lev.g for lev in refining_ghost_profile(pairs, 2.0)]
    assert np.allclose(g, [1.0, math.sqrt(11 / 16), 0.5, math.sqrt(17 / 256)], atol=1e-12)
    assert all(y < x for x, y in zip(g, g[1:]))


def test_ghost_profile_on_cone():
    fam = build("cycle:12")
    levels = ghost_profile(averaging_projection(fam.action.space),
                           sparse_cone(fam.metric, fam.action), 1.0)
    # the warped 1-ball ends as the 3-atom orbit ball
    assert levels[-1].g == pytest.approx(math.sqrt(3 / 12))
    with pytest.raises(ValueError):
        ghost_profile(averaging_projection(fam.action.space), sparse_cone(fam.metric, fam.action), -1)


def test_poincare_swap():
    a = gen_swap()
    ak = build_action_kernel(a)
    rep = poincare_obstruction_witness(ak, [np.array([[0.0], [1.0]])])
    (lev,) = rep.levels
    assert rep.kappa == pytest.approx(0.5)
    assert lev.lhs[0] == pytest.approx(0.25) and lev.rhs[0] == pytest.approx(0.5)
    assert rep.holds


@given(seeds)
def test_poincare_random_embeddings(seed):
    a = rand_action(seed)
    ak = build_action_kernel(a)
    rng = np.random.default_rng(seed)
    rep = poincare_obstruction_witness(ak, [rng.normal(size=(a.n, 3)), np.ones((a.n, 2))])
    if math.isfinite(rep.kappa):
        assert rep.holds


def test_poincare_with_levels():
    fam = build("cycle:8")
    cone = sparse_cone(fam.metric, fam.action, range(3))
    ak = build_action_kernel(fam.action)
    rng = np.random.default_rng(0)
    rep = poincare_obstruction_witness(ak, [rng.normal(size=(8, 2)) for _ in cone.levels],
                                       levels=cone.levels)
    assert rep.holds and all(l.mean_warped_distance > 0 for l in rep.levels)
    with pytest.raises(DimensionError):
        poincare_obstruction_witness(ak, [np.zeros((3, 1))])
