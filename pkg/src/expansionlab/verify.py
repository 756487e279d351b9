"""The invariant suite behind ``expansionlab verify``.

Each check scans every applicable family and keeps the largest signed
violation (``lhs - rhs`` for an inequality ``lhs <= rhs``, absolute error
for an identity).  A check passes when that value is within its tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from . import _subsets
from .expansion import (
    DEFAULT_ALPHAS,
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
from .families import margulis_refining
from .group_actions import (
    FiniteAction,
    GeneratorSet,
    ball_image,
    random_weighted_action,
    rn_table,
    theta_bound,
    words,
)
from .markov_core import (
    boundary_size,
    cheeger_exact,
    cheeger_sweep,
    detailed_balance_residual,
    dirichlet_energy,
    dual_apply,
    lambda2,
    lazy_cycle_kernel,
    markov_apply,
    random_reversible_kernel,
    symmetrized,
    two_point_kernel,
    uniform_kernel,
    verify_cheeger_sandwich,
)
from .operator_analysis import (
    ad_embedding_projection,
    averaging_projection,
    cut_norm,
    generator_operator,
    hat_embedding_projection,
    hat_markov_operator,
    markov_power_projection,
    poincare_obstruction_witness,
    refining_ghost_profile,
    rho_propagation,
    rho_quasi_locality_profile,
    warped_quasi_locality_profile,
    word_operator,
)
from .warped_cone import (
    cone_distance,
    sparse_cone,
    warp,
    warped_level_residuals,
)

DEFAULT_TOLERANCES = {
    "balance": 1e-10,
    "eig": 1e-9,
    "exact": 1e-12,
    "identity": 1e-10,
    "energy": 1e-11,
    "sandwich": 1e-9,
    "transfer": 1e-9,
    "metric": 1e-12,
    "cut": 1e-10,
    "power": 1e-10,
}

SMALL = 12
MEDIUM = 16
N_RANDOM_KERNELS = 200
N_RANDOM_ACTIONS = 100


@dataclass(frozen=True)
class CheckResult:
    check_name: str
    status: str
    worst_violation: float
    witness: object


@dataclass(frozen=True)
class VerifyReport:
    seed: int
    families: tuple
    n_checks: int
    n_failed: int
    checks: tuple

    @property
    def passed(self):
        return self.n_failed == 0


class _Tally:
    def __init__(self):
        self.worst = None
        self.witness = "no applicable cases"

    def see(self, value, witness):
        value = float(value)
        if self.worst is None or value > self.worst or (math.isnan(value)):
            self.worst = value
            self.witness = witness


@dataclass
class Context:
    families: list
    rng: np.random.Generator
    tol: dict
    n_random_kernels: int = N_RANDOM_KERNELS
    n_random_actions: int = N_RANDOM_ACTIONS
    _cache: dict = field(default_factory=dict)

    def memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def actions(self, max_atoms=None):
        return [f for f in self.families
                if f.action is not None and (max_atoms is None or f.action.n <= max_atoms)]

    def action_kernel(self, fam):
        return self.memo(("ak", fam.name), lambda: build_action_kernel(fam.action))

    def kernels(self, max_atoms=None):
        """(label, kernel, reversing measure) for every family."""
        out = []
        for f in self.families:
            if f.kernel is not None:
                k, m = f.kernel, f.kernel.reversing_measure
            else:
                ak = self.action_kernel(f)
                k, m = ak.kernel, ak.tilde_nu
            if max_atoms is None or k.n <= max_atoms:
                out.append((f.name, k, m))
        return out

    def random_kernels(self):
        def make():
            rng = np.random.default_rng(self.rng.integers(2 ** 63))
            return [random_reversible_kernel(int(rng.integers(1, SMALL + 1)), rng)
                    for _ in range(self.n_random_kernels)]
        return self.memo("random_kernels", make)

    def random_actions(self):
        def make():
            rng = np.random.default_rng(self.rng.integers(2 ** 63))
            return [random_weighted_action(int(rng.integers(1, 11)), rng,
                                           n_pairs=int(rng.integers(0, 3)),
                                           self_inverse=int(rng.integers(0, 2)))
                    for _ in range(self.n_random_actions)]
        return self.memo("random_actions", make)

    def cone(self, fam):
        return self.memo(("cone", fam.name), lambda: sparse_cone(fam.metric, fam.action))


CHECKS = []


def check(name, tol_key):
    def deco(fn):
        CHECKS.append((name, tol_key, fn))
        return fn
    return deco


def _random_subset(rng, n, nonempty=True):
    while True:
        A = np.flatnonzero(rng.random(n) < 0.5)
        if len(A) or not nonempty:
            return A


# -- markov_core -------------------------------------------------------------

@check("detailed_balance", "balance")
def _(ctx, t):
    for name, k, m in ctx.kernels():
        t.see(detailed_balance_residual(k, m)[0], name)
    for i, k in enumerate(ctx.random_kernels()):
        t.see(detailed_balance_residual(k, k.reversing_measure)[0], f"random kernel {i}")


@check("boundary_complement_symmetry", "exact")
def _(ctx, t):
    for name, k, m in ctx.kernels():
        for _ in range(32):
            A = _random_subset(ctx.rng, k.n, nonempty=False)
            Ac = np.setdiff1d(np.arange(k.n), A)
            t.see(abs(boundary_size(k, m, A) - boundary_size(k, m, Ac)), (name, A.tolist()))


@check("dirichlet_energy_of_indicator", "exact")
def _(ctx, t):
    for name, k, m in ctx.kernels(max_atoms=10):
        for mask in range(1 << k.n):
            A = _subsets.to_indices(mask)
            chi = np.zeros(k.n)
            chi[list(A)] = 1.0
            b = boundary_size(k, m, A)
            for p in (1, 2, 3):
                t.see(abs(dirichlet_energy(k, m, chi, p) - b), (name, A, p))


@check("dirichlet_quadratic_identity", "energy")
def _(ctx, t):
    for name, k, m in ctx.kernels():
        for _ in range(100):
            f = ctx.rng.normal(size=k.n)
            rhs = float(np.sum(m * f * f) - np.sum(m * f * markov_apply(k, f)))
            t.see(abs(dirichlet_energy(k, m, f, 2) - rhs), name)


@check("dual_operator_duality", "exact")
def _(ctx, t):
    for name, k, m in ctx.kernels():
        f = ctx.rng.normal(size=k.n)
        nu = ctx.rng.random(k.n)
        t.see(abs(markov_apply(k, f) @ nu - f @ dual_apply(k, nu)), name)


@check("reversing_measure_invariance", "exact")
def _(ctx, t):
    for name, k, m in ctx.kernels():
        t.see(float(np.max(np.abs(dual_apply(k, m) - m))) / max(1.0, float(m.max())), name)


@check("sobolev_step", "sandwich")
def _(ctx, t):
    _sobolev(ctx, t, p=1)


@check("dirichlet_step", "sandwich")
def _(ctx, t):
    _sobolev(ctx, t, p=2)


def _sobolev(ctx, t, p):
    items = [(n, k, m) for n, k, m in ctx.kernels(SMALL)]
    items += [(f"random kernel {i}", k, k.reversing_measure)
              for i, k in enumerate(ctx.random_kernels()[:50])]
    for name, k, m in items:
        if k.n < 2:
            continue
        kappa, _ = cheeger_exact(k, m)
        half = 0.5 * m.sum()
        for _ in range(10):
            order = ctx.rng.permutation(k.n)
            A = order[np.cumsum(m[order]) <= half * (1 + 1e-12)]
            if len(A) == 0:
                continue
            g = np.zeros(k.n)
            g[A] = ctx.rng.random(len(A))
            if p == 1:
                lhs, rhs = kappa * float(np.sum(m * g)), dirichlet_energy(k, m, g, 1)
            else:
                lhs, rhs = 0.5 * kappa ** 2 * float(np.sum(m * g * g)), dirichlet_energy(k, m, g, 2)
            t.see(lhs - rhs, (name, A.tolist()))


@check("spectral_inclusion", "eig")
def _(ctx, t):
    items = [(n, k, m) for n, k, m in ctx.kernels()]
    items += [(f"random kernel {i}", k, k.reversing_measure)
              for i, k in enumerate(ctx.random_kernels())]
    for name, k, m in items:
        spectrum = lambda2(k, m)
        ev = np.asarray(spectrum.eigenvalues)
        t.see(max(float(np.max(np.abs(ev))) - 1.0, abs(ev[0] - 1.0)), name)
        if spectrum.one_eigenspace_dim == 1:
            vals, vecs = np.linalg.eigh(symmetrized(k, m))
            v = vecs[:, np.argmax(vals)]
            r = np.sqrt(m) / np.linalg.norm(np.sqrt(m))
            t.see(1.0 - abs(float(v @ r)), (name, "top eigenvector"))


@check("cheeger_sandwich", "sandwich")
def _(ctx, t):
    items = [(n, k, m) for n, k, m in ctx.kernels(SMALL)]
    items += [(f"random kernel {i}", k, k.reversing_measure)
              for i, k in enumerate(ctx.random_kernels())]
    for name, k, m in items:
        r = verify_cheeger_sandwich(k, m)
        if math.isinf(r.kappa):
            continue
        t.see(max(r.lower - r.spectral_gap, r.spectral_gap - r.upper), name)


@check("sweep_bounds_exact_cheeger", "exact")
def _(ctx, t):
    items = [(n, k, m) for n, k, m in ctx.kernels(SMALL)]
    items += [(f"random kernel {i}", k, k.reversing_measure)
              for i, k in enumerate(ctx.random_kernels()[:50])]
    for name, k, m in items:
        if k.n < 2:
            continue
        t.see(cheeger_exact(k, m).kappa - cheeger_sweep(k, m).kappa_upper, name)


@check("cheeger_tightness_witnesses", "identity")
def _(ctx, t):
    k = two_point_kernel(0.3, 0.3)
    r = verify_cheeger_sandwich(k)
    t.see(max(abs(r.kappa - 0.3), abs(r.spectral_gap - 0.6), abs(r.spectral_gap - r.upper)),
          "two-point p=q=0.3")
    k = uniform_kernel(8)
    r = verify_cheeger_sandwich(k)
    t.see(max(abs(r.kappa - 0.5), abs(r.spectral_gap - 1.0), abs(r.spectral_gap - r.upper)),
          "uniform n=8")


@check("lazy_cycle_spectrum", "eig")
def _(ctx, t):
    for n in range(3, 17):
        lam = lambda2(lazy_cycle_kernel(n)).lambda2
        t.see(abs(lam - (1 + 2 * math.cos(2 * math.pi / n)) / 3), f"n={n}")


# -- group_actions -----------------------------------------------------------

def _all_actions(ctx, max_atoms=None):
    out = [(f.name, f.action) for f in ctx.actions(max_atoms)]
    out += [(f"random action {i}", a) for i, a in enumerate(ctx.random_actions()[:20])
            if max_atoms is None or a.n <= max_atoms]
    return out


@check("radon_nikodym_inversion", "exact")
def _(ctx, t):
    for name, a in _all_actions(ctx):
        t.see(rn_table(a).inversion_residual(), name)


@check("radon_nikodym_change_of_variable", "identity")
def _(ctx, t):
    for name, a in _all_actions(ctx):
        tab = rn_table(a)
        for _ in range(5):
            f = ctx.rng.normal(size=a.n)
            t.see(tab.change_of_variable_residual(f, _random_subset(ctx.rng, a.n)), name)


@check("ball_submultiplicativity", "exact")
def _(ctx, t):
    for name, a in _all_actions(ctx):
        for _ in range(8):
            A = _random_subset(ctx.rng, a.n)
            k, l = (int(v) for v in ctx.rng.integers(0, 5, size=2))
            inner = set(ball_image(a, ball_image(a, A, k), l))
            t.see(len(inner - set(ball_image(a, A, k + l))), (name, A.tolist(), k, l))


@check("ball_monotonicity", "exact")
def _(ctx, t):
    for name, a in _all_actions(ctx):
        for _ in range(8):
            A = _random_subset(ctx.rng, a.n)
            B = np.union1d(A, _random_subset(ctx.rng, a.n, nonempty=False))
            k = int(ctx.rng.integers(0, 4))
            small = set(ball_image(a, A, k))
            t.see(len(small - set(ball_image(a, A, k + 1))), (name, "k", A.tolist(), k))
            t.see(len(small - set(ball_image(a, B, k))), (name, "A", A.tolist(), k))
            t.see(len(set(A.tolist()) - small), (name, "contains A", A.tolist(), k))


@check("orbit_distance_metric", "exact")
def _(ctx, t):
    for name, a in _all_actions(ctx):
        D = a.distance_matrix()
        fin = np.where(np.isfinite(D), D, 1e300)
        t.see(float(np.max(np.abs(fin - fin.T))), (name, "symmetry"))
        tri = fin[:, :, None] + fin[None, :, :]
        t.see(float(np.max(fin[:, None, :] - tri)) if a.n <= 64 else 0.0, (name, "triangle"))


@check("ball_matches_orbit_distance", "exact")
def _(ctx, t):
    for name, a in _all_actions(ctx):
        D = a.distance_matrix()
        for _ in range(8):
            A = _random_subset(ctx.rng, a.n)
            k = int(ctx.rng.integers(0, 5))
            via = set(np.flatnonzero(D[A].min(axis=0) <= k).tolist())
            t.see(len(via ^ set(ball_image(a, A, k))), (name, A.tolist(), k))


# -- expansion ---------------------------------------------------------------

@check("action_kernel_reversibility", "balance")
def _(ctx, t):
    items = [(f.name, f.action) for f in ctx.actions()]
    items += [(f"random action {i}", a) for i, a in enumerate(ctx.random_actions())]
    for name, a in items:
        ak = build_action_kernel(a)
        t.see(detailed_balance_residual(ak.kernel, ak.tilde_nu)[0], name)


@check("action_kernel_measure_bounds", "exact")
def _(ctx, t):
    for name, a in _all_actions(ctx, SMALL):
        ak = build_action_kernel(a)
        t.see(measure_bounds_residual(ak, exhaustive_limit=SMALL), name)


@check("edge_vertex_comparison", "identity")
def _(ctx, t):
    for name, a in _all_actions(ctx, SMALL):
        r = edge_vertex_comparison(build_action_kernel(a))
        t.see(-min(r.worst_lower_edge, r.worst_upper_edge, r.worst_lower_measure,
                   r.worst_upper_measure), name)


@check("vertex_markov_transfer", "transfer")
def _(ctx, t):
    for name, a in _all_actions(ctx, SMALL):
        r = transfer_check(a)
        t.see(-min(r.slack_kappa, r.slack_c), (name, r.vertex_c, r.markov_kappa))


@check("vertex_markov_positivity_equivalence", "exact")
def _(ctx, t):
    for name, a in _all_actions(ctx, SMALL):
        r = transfer_check(a)
        t.see(0.0 if r.positivity_agrees else 1.0, (name, r.vertex_c, r.markov_kappa))


@check("expansion_profile_witnesses", "exact")
def _(ctx, t):
    for f in ctx.actions(SMALL):
        a = f.action
        prof = _profile(ctx, f)
        Y = tuple(range(a.n))
        for rec in prof.records + prof.upper_range:
            if not rec.witness_subset:
                continue
            k = rec.k if rec.k is not None else prof.k_max
            t.see(abs(growth_ratio(a, Y, rec.witness_subset, k) - 1.0 - rec.c),
                  (f.name, rec.alpha))


def _k_max(action):
    D = action.distance_matrix()
    return max(6, int(np.max(D[np.isfinite(D)])))


def _alpha_grid(action):
    w = action.space.weights
    return tuple(sorted(set(DEFAULT_ALPHAS) | {float(min(0.5, w.min() / w.sum()))}))


def _profile(ctx, f):
    a = f.action
    return ctx.memo(("profile", f.name),
                    lambda: asymptotic_profile(a, alpha_grid=_alpha_grid(a), k_max=_k_max(a)))


@check("local_gap_vs_markov_gap", "transfer")
def _(ctx, t):
    for name, a in _all_actions(ctx, SMALL):
        r = local_spectral_gap(a)
        if math.isinf(r.lambda_Q):
            continue
        gap = 1.0 - r.lambda2
        t.see(2 * gap / math.sqrt(r.theta) - r.lambda_Q, (name, "lambda_Q bound"))
        c, _ = vertex_expansion_constant(a)
        t.see(0.0 if (r.lambda_Q > 0) == (c > 0) else 1.0, (name, "gap iff expansion"))


@check("weighted_swap_example", "identity")
def _(ctx, t):
    from .group_actions import gen_swap
    from .markov_core import edge_measure

    ak = build_action_kernel(gen_swap([1 / 3, 2 / 3]))
    r2 = math.sqrt(2)
    mu = edge_measure(ak.kernel).mu
    t.see(float(np.max(np.abs(ak.sigma - [1 + r2, 1 + 1 / r2]))), "sigma")
    t.see(max(abs(mu[0, 1] - r2 / 3), abs(mu[1, 0] - r2 / 3)), "mu")
    t.see(abs(markov_expansion_constant(ak) - r2 / (1 + r2)), "kappa")


# -- warped_cone -------------------------------------------------------------

def _cones(ctx, max_atoms=MEDIUM):
    return [(f, ctx.cone(f)) for f in ctx.actions(max_atoms) if f.metric is not None]


@check("warped_metric_certificate", "metric")
def _(ctx, t):
    for f, cone in _cones(ctx):
        for lev in cone.levels:
            res = warped_level_residuals(lev)
            scale = max(1.0, lev.t * float(lev.base.diameter))
            for key, v in res.items():
                t.see(v / scale, (f.name, lev.t, key))


@check("warped_trivial_action", "exact")
def _(ctx, t):
    for f, cone in _cones(ctx):
        a = f.action
        triv = FiniteAction(a.space, GeneratorSet(("e",), {"e": "e"}, {"e": 0}, "e"),
                            {"e": np.arange(a.n)})
        for tt in (1.0, 3.5, 64.0):
            lev = warp(f.metric, triv, tt)
            t.see(float(np.max(np.abs(lev.warped - tt * f.metric.dist))), (f.name, tt))


@check("warped_word_bound", "metric")
def _(ctx, t):
    for f, cone in _cones(ctx):
        a = f.action
        ws = words(a, 4)
        for lev in cone.levels:
            rows = np.arange(a.n)
            for w in ws:
                L = sum(a.gens.length[s] for s in w)
                t.see(float(np.max(lev.warped[rows, a.word_perm(w)])) - L, (f.name, lev.t, w))


@check("warped_monotone_in_t", "metric")
def _(ctx, t):
    for f, cone in _cones(ctx):
        for lo, hi in zip(cone.levels, cone.levels[1:]):
            t.see(float(np.max(lo.warped - hi.warped)), (f.name, lo.t, hi.t))


@check("warped_monotone_in_generators", "metric")
def _(ctx, t):
    for f, cone in _cones(ctx):
        a = f.action
        triv = FiniteAction(a.space, GeneratorSet(("e",), {"e": "e"}, {"e": 0}, "e"),
                            {"e": np.arange(a.n)})
        for lev in cone.levels:
            fewer = warp(lev.base, triv, lev.t)
            t.see(float(np.max(lev.warped - fewer.warped)), (f.name, lev.t))


@check("cone_triangle_inequality", "metric")
def _(ctx, t):
    for f, cone in _cones(ctx):
        ts = cone.level_offsets
        for _ in range(200):
            p, q, r = [(int(ctx.rng.integers(f.action.n)), ts[int(ctx.rng.integers(len(ts)))])
                       for _ in range(3)]
            lhs = cone_distance(cone, p, r)
            rhs = cone_distance(cone, p, q) + cone_distance(cone, q, r)
            t.see(lhs - rhs, (f.name, p, q, r))


@check("neighbourhood_stabilization", "exact")
def _(ctx, t):
    for f, cone in _cones(ctx):
        a = f.action
        n = a.n
        D = a.distance_matrix()
        for R in (0, 1, 2, 3):
            expect_rows = [_subsets.to_mask(np.flatnonzero(D[x] <= R)) for x in range(n)]
            per_level = []
            for lev in cone.levels:
                rows = [_subsets.to_mask(np.flatnonzero(lev.warped[x] <= R + 1e-12))
                        for x in range(n)]
                per_level.append(rows)
            for masks in _subsets.mask_chunks(1 << n, start=1):
                expect = _subsets.union_masks(masks, expect_rows)
                last = _subsets.union_masks(masks, per_level[-1])
                bad = np.flatnonzero(last != expect)
                t.see(len(bad), (f.name, R, _subsets.to_indices(masks[bad[0]]) if len(bad) else ()))
                # the chain is nonincreasing in t, and constant from some level on
                prev = None
                for rows in per_level:
                    cur = _subsets.union_masks(masks, rows)
                    if prev is not None:
                        t.see(int(np.count_nonzero(cur & ~prev)), (f.name, R, "increase"))
                    prev = cur


@check("swap_warp_example", "exact")
def _(ctx, t):
    from .group_actions import gen_swap
    from .warped_cone import discrete_metric

    a = gen_swap()
    m = discrete_metric(a.space, 2.0)
    for tt in (1.0, 2.0, 10.0, 100.0, 1e6):
        t.see(abs(warp(m, a, tt).warped[0, 1] - 1.0), tt)


# -- operator_analysis -------------------------------------------------------

@check("averaging_cut_norm_formula", "cut")
def _(ctx, t):
    spaces = [(f.name, f.action.space) for f in ctx.actions()]
    spaces += [(f.name, f.kernel.space) for f in ctx.families if f.kernel is not None]
    for name, space in spaces:
        P = averaging_projection(space)
        nu = space.weights / space.total_mass
        for _ in range(200):
            A = _random_subset(ctx.rng, space.n, nonempty=False)
            C = _random_subset(ctx.rng, space.n, nonempty=False)
            t.see(abs(cut_norm(P, A, C) - math.sqrt(nu[A].sum() * nu[C].sum())),
                  (name, A.tolist(), C.tolist()))


@check("quasi_locality_iff_expansion", "exact")
def _(ctx, t):
    for f in ctx.actions(SMALL):
        a = f.action
        D = a.distance_matrix()
        diam = int(np.max(D[np.isfinite(D)]))
        prof = rho_quasi_locality_profile(averaging_projection(a.space), a, range(diam + 1))
        decays = prof.eps[-1] <= 1e-12
        expanding = _profile(ctx, f).expanding
        t.see(0.0 if decays == expanding else 1.0, (f.name, prof.eps[-1], expanding))
        if len(a.orbits()) > 1:
            # an invariant orbit A pins eps(k) >= sqrt(nu(A) nu(X minus A))
            nu = a.space.weights / a.space.total_mass
            floor = max(math.sqrt(nu[list(o)].sum() * (1 - nu[list(o)].sum())) for o in a.orbits())
            t.see(floor - min(prof.eps), (f.name, "invariant split"))


@check("quasi_locality_profile_consistency", "cut")
def _(ctx, t):
    for f in ctx.actions(SMALL):
        a = f.action
        ops = [("P_X", averaging_projection(a.space))]
        if a.n <= 8:
            ak = ctx.action_kernel(f)
            ops += [("hat Markov", hat_markov_operator(ak))]
            ops += [(f"pi({s})", generator_operator(a, s)) for s in a.gens.symbols[:2]]
        for label, T in ops:
            prof = rho_quasi_locality_profile(T, a, range(5))
            for lo, hi in zip(prof.eps, prof.eps[1:]):
                t.see(hi - lo, (f.name, label, "monotone"))
            for e, (A, C) in zip(prof.eps, prof.witnesses):
                t.see(abs(cut_norm(T, A, C) - e), (f.name, label, "witness"))


def _gapped_sources(ctx):
    out = []
    for f in ctx.families:
        if f.kernel is not None:
            out.append((f.name, f.kernel))
        else:
            out.append((f.name, ctx.action_kernel(f)))
    return out


@check("markov_power_convergence", "power")
def _(ctx, t):
    for name, src in _gapped_sources(ctx):
        r = markov_power_projection(src, 50)
        if not r.has_gap:
            continue
        t.see(-r.worst_slack + ctx.tol["power"], name)
        for n, (p, b) in enumerate(zip(r.propagation, r.propagation_bound), 1):
            t.see(p - b, (name, "propagation", n))


@check("two_point_power_rate", "eig")
def _(ctx, t):
    r = markov_power_projection(two_point_kernel(0.3, 0.3), 50)
    for n, v in enumerate(r.norms, 1):
        t.see(abs(v - 0.4 ** n), n)


@check("generator_word_propagation", "exact")
def _(ctx, t):
    for name, a in _all_actions(ctx, SMALL):
        ws = words(a, 4)
        for i in ctx.rng.choice(len(ws), size=min(20, len(ws)), replace=False):
            w = ws[int(i)]
            L = sum(a.gens.length[s] for s in w)
            t.see(rho_propagation(word_operator(a, w), a) - L, (name, w))


@check("dynamical_implies_warped_propagation", "exact")
def _(ctx, t):
    for f, cone in _cones(ctx, SMALL):
        ak = ctx.action_kernel(f)
        P = hat_markov_operator(ak).matrix
        Q = np.eye(len(P))
        for n in (1, 2, 3):
            Q = Q @ P
            k = rho_propagation(Q, f.action)
            if math.isinf(k):
                continue
            for lev in cone.levels:
                far = lev.warped > k + 1e-12
                t.see(float(np.max(np.abs(Q[far]), initial=0.0)), (f.name, n, lev.t))


@check("warped_locality_below_dynamical", "cut")
def _(ctx, t):
    for f, cone in _cones(ctx, SMALL):
        a = f.action
        P = averaging_projection(a.space)
        Rs = (0.5, 1.0, 2.0, 3.0)
        dyn = rho_quasi_locality_profile(P, a, range(4))
        for lev in cone.levels[::2]:
            prof = warped_quasi_locality_profile(P, lev, Rs)
            for R, e in zip(Rs, prof.eps):
                t.see(e - dyn.eps[int(math.floor(R))], (f.name, lev.t, R))


@check("ad_embedding_identity", "identity")
def _(ctx, t):
    for f in ctx.actions():
        r = ad_embedding_projection(ctx.action_kernel(f), n_powers=0)
        t.see(r.residual, f.name)


@check("hat_projection_properties", "identity")
def _(ctx, t):
    for f in ctx.actions():
        ak = ctx.action_kernel(f)
        P = hat_embedding_projection(ak).operator().matrix
        t.see(float(np.max(np.abs(P @ P - P))), (f.name, "idempotent"))
        t.see(float(np.max(np.abs(P - P.T))), (f.name, "self-adjoint"))
        if theta_bound(f.action, ak.Y, ak.S) == 1.0:
            PX = averaging_projection(f.action.space).operator().matrix
            t.see(float(np.max(np.abs(P - PX))), (f.name, "equals P_X"))


@check("ghost_trend_refining_margulis", "exact")
def _(ctx, t):
    def make():
        pairs = [(averaging_projection(a.space), warp(m, a, tt))
                 for _, a, m, tt in margulis_refining()]
        return refining_ghost_profile(pairs, 2.0)
    prof = ctx.memo("ghost", make)
    gs = [g.g for g in prof]
    for lo, hi in zip(gs, gs[1:]):
        t.see(hi - lo + ctx.tol["exact"], tuple(round(g, 6) for g in gs))


@check("poincare_inequality", "energy")
def _(ctx, t):
    for f in ctx.actions(SMALL):
        ak = ctx.action_kernel(f)
        embs = [ctx.rng.normal(size=(f.action.n, 3)), np.ones((f.action.n, 2))]
        r = poincare_obstruction_witness(ak, embs)
        if math.isinf(r.kappa):
            continue
        for lev in r.levels:
            for lhs, rhs in zip(lev.lhs, lev.rhs):
                t.see(lhs - rhs, f.name)


# -- runner ------------------------------------------------------------------

def run_verify(families, seed=0, tolerances=None, n_random_kernels=N_RANDOM_KERNELS,
               n_random_actions=N_RANDOM_ACTIONS, only=None):
    tol = dict(DEFAULT_TOLERANCES)
    if tolerances:
        unknown = set(tolerances) - set(tol)
        if unknown:
            raise KeyError(f"unknown tolerance keys {sorted(unknown)}")
        tol.update({k: float(v) for k, v in tolerances.items()})
    ctx = Context(list(families), np.random.default_rng(seed), tol,
                  n_random_kernels, n_random_actions)
    results = []
    for name, key, fn in CHECKS:
        if only is not None and name not in only:
            continue
        tally = _Tally()
        fn(ctx, tally)
        worst = 0.0 if tally.worst is None else tally.worst
        ok = not math.isnan(worst) and worst <= tol[key]
        results.append(CheckResult(name, "pass" if ok else "fail", worst, tally.witness))
    failed = sum(r.status == "fail" for r in results)
    return VerifyReport(int(seed), tuple(f.name for f in families), len(results), failed,
                        tuple(results))
