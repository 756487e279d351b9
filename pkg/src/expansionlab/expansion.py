"""From actions to Markov kernels, and expansion constants on both sides."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from . import _subsets
from .errors import CapExceededError
from .group_actions import rn_table, theta_bound
from .markov_core import (
    ENUMERATION_CAP,
    MarkovKernel,
    _frozen,
    cheeger_exact,
    edge_measure,
    lambda2,
)

DEFAULT_ALPHAS = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_BETAS = (0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_K_MAX = 6
BOUNDS_EXHAUSTIVE = 16
HALF_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class ActionKernel:
    """Normalized local kernel of an action on a domain Y.

    ``sigma`` and ``tilde_nu`` are indexed by position in ``Y``; the kernel
    lives on the restricted space with atoms ordered as ``Y``.
    """

    action: object
    Y: tuple
    S: tuple
    sigma: np.ndarray
    tilde_nu: np.ndarray
    kernel: MarkovKernel

    @property
    def nu_Y(self):
        return self.action.space.weights[list(self.Y)]


def _local_index(action, Y):
    loc = np.full(action.n, -1, dtype=np.int64)
    loc[np.asarray(Y, dtype=np.int64)] = np.arange(len(Y))
    return loc


def _generator_subset(action, S):
    S = action.symbols(S)
    e = action.gens.identity
    if e is None or e not in S:
        raise ValueError("the generator subset must contain the identity")
    inv = action.gens.inverse_of
    missing = [s for s in S if inv[s] not in S]
    if missing:
        raise ValueError(f"generator subset is not symmetric: inverses of {missing} missing")
    return S


def build_action_kernel(action, Y=None, S=None):
    """``Pi(x, s x) = r(s,x)^(1/2) / sigma(x)`` summed over s with ``s x`` in Y."""
    Y = tuple(int(y) for y in action.space.indices(range(action.n) if Y is None else Y))
    if not Y:
        raise ValueError("Y must be nonempty")
    S = _generator_subset(action, S)
    r = rn_table(action).r
    loc = _local_index(action, Y)
    Yi = np.asarray(Y, dtype=np.int64)
    m = len(Y)
    W = np.zeros((m, m))
    for s in S:
        tgt = loc[action.perm[s][Yi]]
        ok = tgt >= 0
        np.add.at(W, (np.flatnonzero(ok), tgt[ok]), np.sqrt(r[s][Yi[ok]]))
    sigma = W.sum(axis=1)
    P = W / sigma[:, None]
    nu = action.space.weights[Yi]
    tilde = sigma * nu
    kernel = MarkovKernel(action.space.restrict(Y), P, tilde)
    ak = ActionKernel(action, Y, S, _frozen(sigma), _frozen(tilde), kernel)
    worst = measure_bounds_residual(ak)
    if worst > 1e-12 * max(1.0, float(nu.sum())):
        raise ArithmeticError(f"measure bounds for the normalized kernel fail by {worst:.3e}")
    return ak


def measure_bounds_residual(ak, exhaustive_limit=BOUNDS_EXHAUSTIVE):
    """Worst violation of ``nu(A) <= tilde_nu(A) <= |S| sqrt(nu(A) nu(Y))``.

    Every subset is checked when ``|Y| <= exhaustive_limit``; above that only
    singletons and Y itself.
    """
    nu, tilde = ak.nu_Y, ak.tilde_nu
    m = len(nu)
    nY = float(nu.sum())
    k = len(ak.S)
    worst = 0.0
    if m <= exhaustive_limit:
        for masks in _subsets.mask_chunks(1 << m, start=1):
            B = _subsets.bit_matrix(masks, m).astype(float)
            a, b = B @ nu, B @ tilde
            worst = max(worst, float(np.max(a - b)), float(np.max(b - k * np.sqrt(a * nY))))
    else:
        worst = max(float(np.max(nu - tilde)), float(np.max(tilde - k * np.sqrt(nu * nY))))
        worst = max(worst, float(tilde.sum() - k * nY))
    return max(worst, 0.0)


def _check_cap(m, cap):
    if m > cap:
        raise CapExceededError(m, cap, "restrict Y or raise the cap")


def _neighbour_masks(action, Y, targets_per_atom):
    loc = _local_index(action, Y)
    out = []
    for ts in targets_per_atom:
        out.append(_subsets.to_mask(int(loc[t]) for t in ts if loc[t] >= 0))
    return out


def _growth_scan(nbr, weights, bands, cap):
    """Minimal ``nu(image(A)) / nu(A)`` over A in each mass band.

    ``bands`` is a list of ``(lo, hi)`` mass intervals (closed).  Returns one
    ``(ratio, witness_mask)`` per band, ``(inf, None)`` for empty bands.
    """
    m = len(weights)
    _check_cap(m, cap)
    per_band = [[] for _ in bands]
    for masks in _subsets.mask_chunks(1 << m, start=1):
        mass = _subsets.masses(masks, weights)
        img = _subsets.union_masks(masks, nbr)
        ratio = _subsets.masses(img, weights) / mass
        for i, (lo, hi) in enumerate(bands):
            ok = (mass >= lo) & (mass <= hi)
            if not np.any(ok):
                continue
            r = ratio[ok]
            best = float(r.min())
            per_band[i].append((best, _subsets.lex_smallest(masks[ok][_subsets.near_ties(r, best)])))
    out = []
    for found in per_band:
        if not found:
            out.append((math.inf, None))
            continue
        best = min(v for v, _ in found)
        out.append((best, _subsets.lex_smallest([w for v, w in found if _subsets.near_ties(v, best)])))
    return out


def _global(Y, mask):
    return tuple(Y[i] for i in _subsets.to_indices(mask))


def vertex_expansion_constant(action, Y=None, S=None, cap=ENUMERATION_CAP):
    """``min nu((S.A) cap Y) / nu(A) - 1`` over ``0 < nu(A) <= nu(Y)/2``.

    Returns ``(inf, ())`` when no subset is admissible (one-atom Y).
    """
    Y = tuple(int(y) for y in action.space.indices(range(action.n) if Y is None else Y))
    S = action.symbols(S)
    nu = action.space.weights[list(Y)]
    nbr = _neighbour_masks(action, Y, [[action.perm[s][y] for s in S] for y in Y])
    half = 0.5 * float(nu.sum()) * (1 + HALF_SLACK)
    ((ratio, w),) = _growth_scan(nbr, nu, [(0.0, half)], cap)
    if w is None:
        return math.inf, ()
    return ratio - 1.0, _global(Y, w)


def markov_expansion_constant(ak, cap=ENUMERATION_CAP):
    """Cheeger constant of the normalized kernel for ``tilde_nu``."""
    kappa, _ = cheeger_exact(ak.kernel, ak.tilde_nu, cap=cap)
    return kappa


@dataclass(frozen=True)
class EdgeVertexReport:
    theta: float
    per_subset_bounds_hold: bool
    worst_lower_edge: float
    worst_upper_edge: float
    worst_lower_measure: float
    worst_upper_measure: float


def vertex_boundary_sum(ak, A_local_masks):
    """``sum_s nu((s A \\ A) cap Y)`` for each local mask."""
    act, Y = ak.action, ak.Y
    loc = _local_index(act, Y)
    Yi = np.asarray(Y, dtype=np.int64)
    nu = ak.nu_Y
    total = np.zeros(len(A_local_masks))
    for s in ak.S:
        img = _subsets.image_masks(A_local_masks, loc[act.perm[s][Yi]])
        total += _subsets.masses(img & ~A_local_masks, nu)
    return total


def edge_vertex_comparison(ak, cap=ENUMERATION_CAP, tol=1e-10):
    """Check the edge/vertex boundary comparison and the measure comparison.

    ``(1/sqrt T)|dA| <= sum_s nu((sA \\ A) cap Y) <= sqrt T |dA|`` and
    ``nu(A) <= tilde_nu(A) <= |S| sqrt T nu(A)`` for every A in Y.  Worst
    values are reported as slacks (negative means violated).
    """
    m = len(ak.Y)
    _check_cap(m, cap)
    theta = theta_bound(ak.action, ak.Y, ak.S)
    rt = math.sqrt(theta)
    mu = edge_measure(ak.kernel).mu
    nu, tilde = ak.nu_Y, ak.tilde_nu
    k = len(ak.S)
    w = [math.inf] * 4
    for masks in _subsets.mask_chunks(1 << m):
        B = _subsets.bit_matrix(masks, m).astype(float)
        bnd = np.einsum("ij,ij->i", B @ mu, 1.0 - B)
        V = vertex_boundary_sum(ak, masks)
        a, b = B @ nu, B @ tilde
        for i, slack in enumerate((V - bnd / rt, rt * bnd - V, b - a, k * rt * a - b)):
            w[i] = min(w[i], float(slack.min()))
    holds = all(x >= -tol for x in w)
    return EdgeVertexReport(theta, holds, *w)


@dataclass(frozen=True)
class TransferReport:
    theta: float
    n_generators: int
    vertex_c: float
    markov_kappa: float
    kappa_lower_from_c: float
    c_lower_from_kappa: float
    slack_kappa: float
    slack_c: float
    positivity_agrees: bool


def transfer_check(action, Y=None, S=None, cap=ENUMERATION_CAP):
    """Quantitative vertex/Markov transfer: ``kappa >= c/(|S| T)`` and
    ``c >= kappa/(|S| sqrt T + kappa)``."""
    ak = build_action_kernel(action, Y, S)
    c, _ = vertex_expansion_constant(action, ak.Y, ak.S, cap=cap)
    kappa = markov_expansion_constant(ak, cap=cap)
    theta = theta_bound(action, ak.Y, ak.S)
    k = len(ak.S)
    if math.isinf(c) or math.isinf(kappa):
        return TransferReport(theta, k, c, kappa, math.inf, math.inf, 0.0, 0.0,
                              math.isinf(c) and math.isinf(kappa))
    kl = c / (k * theta)
    cl = kappa / (k * math.sqrt(theta) + kappa)
    agree = (c > 0) == (kappa > 0)
    return TransferReport(theta, k, c, kappa, kl, cl, kappa - kl, c - cl, agree)


@dataclass(frozen=True)
class ProfileRecord:
    alpha: float
    k: Optional[int]
    c: float
    witness_subset: tuple
    status: str


@dataclass(frozen=True)
class ExpansionProfile:
    alphas: tuple
    records: tuple
    upper_range: tuple
    k_max: int

    @property
    def c_of_alpha(self):
        return {r.alpha: r.c for r in self.records}

    @property
    def k_of_alpha(self):
        return {r.alpha: r.k for r in self.records}

    @property
    def expanding(self):
        return all(r.status != "not expanding" for r in self.records)


def asymptotic_profile(action, Y=None, alpha_grid=DEFAULT_ALPHAS, k_max=DEFAULT_K_MAX,
                       beta_grid=DEFAULT_BETAS, cap=ENUMERATION_CAP):
    """Smallest ball radius that makes every sub-half set of mass >= alpha grow.

    For each alpha the scan covers ``alpha nu(Y) <= nu(A) <= nu(Y)/2``; the
    upper range covers ``nu(Y)/2 <= nu(A) <= beta nu(Y)``.  The minimum ratio
    minus 1 is reported as is (strictly positive means expansion).  Bands with
    no subset are marked ``vacuous``; bands that never grow up to ``k_max``
    are marked ``not expanding`` and carry the ``k_max`` witness.
    """
    alpha_grid = tuple(float(a) for a in alpha_grid)
    if not alpha_grid:
        raise ValueError("alpha grid is empty")
    if any(not 0 < a <= 0.5 for a in alpha_grid):
        raise ValueError("alphas must lie in (0, 1/2]")
    if any(not 0.5 <= b < 1 for b in beta_grid):
        raise ValueError("betas must lie in [1/2, 1)")
    Y = tuple(int(y) for y in action.space.indices(range(action.n) if Y is None else Y))
    _check_cap(len(Y), cap)
    nu = action.space.weights[list(Y)]
    nY = float(nu.sum())
    lo_eps, hi_eps = 1 - HALF_SLACK, 1 + HALF_SLACK
    bands = [(a * nY * lo_eps, 0.5 * nY * hi_eps) for a in alpha_grid]
    bands += [(0.5 * nY * lo_eps, b * nY * hi_eps) for b in beta_grid]
    D = action.distance_matrix()
    Yi = list(Y)
    found = [None] * len(bands)
    last = [None] * len(bands)
    for k in range(1, k_max + 1):
        todo = [i for i in range(len(bands)) if found[i] is None]
        if not todo:
            break
        nbr = _neighbour_masks(action, Y, [np.flatnonzero(D[y] <= k) for y in Yi])
        res = _growth_scan(nbr, nu, [bands[i] for i in todo], cap)
        for i, (ratio, w) in zip(todo, res):
            if w is None:
                found[i] = ProfileRecord(_grid(i, alpha_grid, beta_grid), None, math.inf, (), "vacuous")
            elif ratio > 1.0:
                found[i] = ProfileRecord(_grid(i, alpha_grid, beta_grid), k, ratio - 1.0,
                                         _global(Y, w), "expanding")
            else:
                last[i] = ProfileRecord(_grid(i, alpha_grid, beta_grid), None, ratio - 1.0,
                                        _global(Y, w), "not expanding")
    for i in range(len(bands)):
        if found[i] is None:
            found[i] = last[i] or ProfileRecord(_grid(i, alpha_grid, beta_grid), None,
                                                0.0, (), "not expanding")
    na = len(alpha_grid)
    return ExpansionProfile(alpha_grid, tuple(found[:na]), tuple(found[na:]), k_max)


def _grid(i, alphas, betas):
    return alphas[i] if i < len(alphas) else betas[i - len(alphas)]


def growth_ratio(action, Y, A, k):
    """``nu((B_k . A) cap Y) / nu(A)``, evaluated directly (for witness checks)."""
    D = action.distance_matrix()
    A = list(A)
    nu = action.space.weights
    reach = np.any(D[A] <= k, axis=0)
    inY = np.zeros(action.n, dtype=bool)
    inY[list(Y)] = True
    return float(nu[reach & inY].sum() / nu[A].sum())


@dataclass(frozen=True)
class LocalGapReport:
    lambda_Q: float
    kappa_interval: tuple
    kappa_from_markov: float
    has_gap: bool
    theta: float
    lambda2: float


def poincare_form(action, Y, S):
    """Reduced quadratic form of ``Q(f) = sum_s ||s.f - f||^2_{nu|Y}`` on L^2(Y).

    Returns the symmetric matrix ``H`` over Y (in function coordinates) after
    minimizing out the values of f on atoms outside Y.
    """
    Yi = np.asarray(Y, dtype=np.int64)
    nu = action.space.weights
    inY = np.zeros(action.n, dtype=bool)
    inY[Yi] = True
    # coordinates: Y first, then outside atoms that some s maps Y into
    outside = sorted({int(action.perm[s][y]) for s in S for y in Yi} - set(Yi.tolist()))
    coords = np.concatenate([Yi, np.asarray(outside, dtype=np.int64)])
    pos = np.full(action.n, -1, dtype=np.int64)
    pos[coords] = np.arange(len(coords))
    N = len(coords)
    H = np.zeros((N, N))
    # S symmetric: sum over s of |f(s^-1 x) - f(x)|^2 equals the same with s x
    for s in S:
        a = pos[Yi]
        b = pos[action.perm[s][Yi]]
        w = nu[Yi]
        np.add.at(H, (a, a), w)
        np.add.at(H, (b, b), w)
        np.add.at(H, (a, b), -w)
        np.add.at(H, (b, a), -w)
    m = len(Yi)
    Hyy, Hyz, Hzz = H[:m, :m], H[:m, m:], H[m:, m:]
    if Hzz.size:
        # outside coordinates never couple to each other, so Hzz is diagonal
        Hyy = Hyy - Hyz @ (Hyz.T / np.diag(Hzz)[:, None])
    return 0.5 * (Hyy + Hyy.T)


def local_spectral_gap(action, Y=None, S=None):
    """Quadratic local spectral gap ``lambda_Q`` and the bracket it gives for kappa.

    ``lambda_Q = min Q(f)`` over ``int_Y f dnu = 0``, ``||f||_{nu|Y} = 1``.
    """
    ak = build_action_kernel(action, Y, S)
    Yi = np.asarray(ak.Y, dtype=np.int64)
    H = poincare_form(action, Yi, ak.S)
    nu = action.space.weights[Yi]
    r = np.sqrt(nu)
    K = H / r[:, None] / r[None, :]
    theta = theta_bound(action, ak.Y, ak.S)
    lam2 = lambda2(ak.kernel).lambda2
    gap = 1.0 - lam2
    kappa_m = 1.0 / math.sqrt(2.0 * gap) if gap > 1e-9 else math.inf
    if len(Yi) == 1:
        return LocalGapReport(math.inf, (0.0, 0.0), kappa_m, True, theta, lam2)
    basis = null_space(r[None, :])
    lam = float(np.linalg.eigvalsh(basis.T @ K @ basis)[0])
    scale = max(1.0, float(np.max(np.abs(K))))
    if lam <= 1e-10 * scale:
        return LocalGapReport(0.0, (math.inf, math.inf), kappa_m, False, theta, lam2)
    k = len(ak.S)
    interval = (1.0 / math.sqrt(k * lam), 1.0 / math.sqrt(lam))
    return LocalGapReport(lam, interval, kappa_m, True, theta, lam2)
