import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.sparse.csgraph import connected_components

from conftest import brute_cheeger
from expansionlab.errors import CapExceededError
from expansionlab.expansion import (
    asymptotic_profile,
    build_action_kernel,
    edge_vertex_comparison,
    growth_ratio,
    local_spectral_gap,
    markov_expansion_constant,
    measure_bounds_residual,
    transfer_check,
    vertex_expansion_constant,
)
from expansionlab.families import split_cycle
from expansionlab.group_actions import (
    gen_cycle,
    gen_margulis_torus,
    gen_swap,
    random_weighted_action,
)
from expansionlab.markov_core import detailed_balance_residual, edge_measure

seeds = st.integers(0, 2 ** 32 - 1)
R2 = math.sqrt(2)


def rand_action(seed, max_n=9):
    rng = np.random.default_rng(seed)
    return random_weighted_action(int(rng.integers(2, max_n + 1)), rng,
                                  n_pairs=int(rng.integers(0, 3)),
                                  self_inverse=int(rng.integers(0, 2)))


def brute_vertex(action, Y, S):
    """min nu((S.A) cap Y)/nu(A) - 1 over 0 < nu(A) <= nu(Y)/2, by itertools."""
    nu = action.space.weights
    half = 0.5 * nu[list(Y)].sum() * (1 + 1e-12)
    best = math.inf
    for r in range(1, len(Y) + 1):
        for A in itertools.combinations(Y, r):
            mA = nu[list(A)].sum()
            if mA > half:
                continue
            img = {int(action.perm[s][a]) for s in S for a in A} & set(Y)
            best = min(best, nu[list(img)].sum() / mA - 1)
    return best


def components_meeting(action, Y):
    """Connected components of the graph {y, s y} (y in Y) that contain atoms of Y."""
    n = action.n
    G = np.zeros((n, n))
    for s in action.gens.symbols:
        for y in Y:
            G[y, action.perm[s][y]] = 1
    _, lab = connected_components(G, directed=False)
    return len(set(lab[list(Y)]))


def direct_Q(action, Y, S, f):
    nu = action.space.weights
    return sum(float(np.sum((f[action.perm[s][list(Y)]] - f[list(Y)]) ** 2 * nu[list(Y)]))
               for s in S)


# -- worked examples -------------------------------------------------------------

def test_weighted_swap():
    ak = build_action_kernel(gen_swap([1 / 3, 2 / 3]))
    assert np.allclose(ak.sigma, [1 + R2, 1 + 1 / R2], atol=1e-12)
    mu = edge_measure(ak.kernel).mu
    assert mu[0, 1] == pytest.approx(R2 / 3, abs=1e-12)
    assert mu[1, 0] == pytest.approx(R2 / 3, abs=1e-12)
    assert markov_expansion_constant(ak) == pytest.approx(R2 / (1 + R2), abs=1e-12)


def test_cycle8_vertex_expansion():
    c, A = vertex_expansion_constant(gen_cycle(8))
    assert c == pytest.approx(0.5)
    assert len(A) == 4


def test_cycle8_profile_at_04():
    prof = asymptotic_profile(gen_cycle(8), alpha_grid=(0.4,))
    (rec,) = prof.records
    assert rec.k == 1 and rec.c == pytest.approx(0.5) and rec.status == "expanding"


def test_profile_vacuous_band():
    # on 2 atoms every nonempty subset has mass >= 1/2, alpha = 0.05 still sees {0}
    prof = asymptotic_profile(gen_swap(), alpha_grid=(0.05,))
    assert prof.records[0].status == "expanding"
    prof = asymptotic_profile(gen_swap([0.1, 0.9]), alpha_grid=(0.2,))
    assert prof.records[0].status == "vacuous"


def test_split_cycle_not_expanding():
    a = split_cycle(4)
    c, A = vertex_expansion_constant(a)
    assert c == 0.0
    prof = asymptotic_profile(a, k_max=6)
    assert not prof.expanding


def test_swap_local_gap():
    r = local_spectral_gap(gen_swap())
    assert r.lambda_Q == pytest.approx(4.0)
    lo, hi = r.kappa_interval
    assert lo == pytest.approx(1 / math.sqrt(2 * 4)) and hi == pytest.approx(0.5)


def test_margulis_full_torus_has_no_gap():
    a = gen_margulis_torus(3)
    assert vertex_expansion_constant(a)[0] == 0.0
    assert local_spectral_gap(a).lambda_Q == 0.0
    assert vertex_expansion_constant(gen_margulis_torus(3, punctured=True))[0] == pytest.approx(2 / 3)


def test_single_atom_domain():
    a = gen_cycle(5)
    assert vertex_expansion_constant(a, Y=[2]) == (math.inf, ())
    assert math.isinf(local_spectral_gap(a, Y=[2]).lambda_Q)


def test_subset_must_contain_identity_and_be_symmetric():
    a = gen_cycle(5)
    with pytest.raises(ValueError):
        build_action_kernel(a, S=["+1", "-1"])
    with pytest.raises(ValueError):
        build_action_kernel(a, S=["e", "+1"])


def test_cap():
    with pytest.raises(CapExceededError):
        vertex_expansion_constant(gen_cycle(30))


# -- properties ------------------------------------------------------------------

@given(seeds)
def test_action_kernel_reversible_and_bounded(seed):
    a = rand_action(seed)
    ak = build_action_kernel(a)
    assert detailed_balance_residual(ak.kernel, ak.tilde_nu)[0] < 1e-12
    assert measure_bounds_residual(ak) <= 1e-12


@given(seeds)
def test_kernel_on_subdomain(seed):
    a = rand_action(seed)
    rng = np.random.default_rng(seed)
    Y = np.flatnonzero(rng.random(a.n) < 0.6)
    if not len(Y):
        return
    ak = build_action_kernel(a, Y=Y)
    assert np.allclose(ak.kernel.transition.sum(axis=1), 1)
    assert detailed_balance_residual(ak.kernel, ak.tilde_nu)[0] < 1e-12


@given(seeds)
def test_vertex_constant_matches_brute_force(seed):
    a = rand_action(seed)
    Y = tuple(range(a.n))
    c, A = vertex_expansion_constant(a)
    assert c == pytest.approx(brute_vertex(a, Y, a.gens.symbols), abs=1e-12)
    if A:
        assert growth_ratio(a, Y, A, 1) - 1 == pytest.approx(c, abs=1e-12)


@given(seeds)
def test_markov_constant_matches_brute_force(seed):
    ak = build_action_kernel(rand_action(seed))
    kappa = markov_expansion_constant(ak)
    assert kappa == pytest.approx(brute_cheeger(ak.kernel.transition, ak.tilde_nu), abs=1e-12)


@given(seeds)
def test_transfer_and_edge_vertex(seed):
    a = rand_action(seed)
    tr = transfer_check(a)
    assert tr.slack_kappa >= -1e-9 and tr.slack_c >= -1e-9
    assert tr.positivity_agrees
    assert edge_vertex_comparison(build_action_kernel(a)).per_subset_bounds_hold


@given(seeds)
def test_local_gap_is_a_minimum(seed):
    a = rand_action(seed)
    rng = np.random.default_rng(seed)
    Y = np.flatnonzero(rng.random(a.n) < 0.7)
    if len(Y) < 2:
        return
    r = local_spectral_gap(a, Y=Y)
    nu = a.space.weights
    S = a.gens.symbols
    for _ in range(20):
        f = rng.normal(size=a.n)
        g = f[Y] - np.sum(f[Y] * nu[Y]) / nu[Y].sum()
        f[Y] = g
        norm2 = float(np.sum(g * g * nu[Y]))
        assert direct_Q(a, Y, S, f) >= r.lambda_Q * norm2 - 1e-9
    # gap bound from the Markov spectrum and gap iff expansion
    if r.lambda_Q > 0:
        assert r.lambda_Q >= 2 * (1 - r.lambda2) / math.sqrt(r.theta) - 1e-9
    # zero gap exactly when the pieces of Y stay apart, even through atoms outside Y
    assert (r.lambda_Q == 0) == (components_meeting(a, Y) > 1)
    c, _ = vertex_expansion_constant(a, Y=Y)
    if c > 0:
        assert r.lambda_Q > 0


@given(seeds)
def test_gap_iff_expansion_on_whole_space(seed):
    a = rand_action(seed)
    c, _ = vertex_expansion_constant(a)
    assert (local_spectral_gap(a).lambda_Q > 0) == (c > 0)


@given(seeds)
def test_profile_witnesses_reproduce(seed):
    a = rand_action(seed, max_n=7)
    prof = asymptotic_profile(a, k_max=4)
    Y = tuple(range(a.n))
    for rec in prof.records:
        if rec.status == "expanding":
            assert growth_ratio(a, Y, rec.witness_subset, rec.k) - 1 == pytest.approx(rec.c)
