"""Operators on L^2(X, nu): projections, cut norms, propagation, locality.

Every matrix here is written in the orthonormal frame ``e_x = chi_x / sqrt(nu(x))``,
so operator norms are plain spectral norms.  An operator with function-frame
matrix ``K`` (``(Kf)(x) = sum_y K[x,y] f(y)``) has frame matrix
``D^(1/2) K D^(-1/2)`` with ``D = diag(nu)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _subsets
from .errors import CapExceededError, DimensionError
from .expansion import ActionKernel
from .markov_core import MarkovKernel, _frozen, lambda2, symmetrized
from .warped_cone import _ball_tol

ENTRY_TOL = 1e-12
EXACT_CAP = 20
RANK_ONE_CAP = 22
N_SAMPLES = 10_000
SVD_BATCH = 2048


@dataclass(frozen=True, eq=False)
class WeightedOperator:
    space: object
    matrix: np.ndarray
    origin_frame_note: str = "orthonormal frame e_x = chi_x / sqrt(nu(x))"

    def __post_init__(self):
        M = np.asarray(self.matrix)
        n = self.space.n
        if M.shape != (n, n):
            raise DimensionError(f"operator matrix has shape {M.shape}, expected {(n, n)}")
        object.__setattr__(self, "matrix", _frozen(M))

    @classmethod
    def from_function_frame(cls, space, K, note="converted from the function frame"):
        r = np.sqrt(space.weights)
        return cls(space, r[:, None] * np.asarray(K) / r[None, :], note)

    def function_frame(self):
        r = np.sqrt(self.space.weights)
        return self.matrix / r[:, None] * r[None, :]

    def norm(self):
        return _spectral_norm(self.matrix)

    def hermitian_residual(self):
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def __matmul__(self, other):
        return WeightedOperator(self.space, self.matrix @ other.matrix, self.origin_frame_note)

    def __sub__(self, other):
        return WeightedOperator(self.space, self.matrix - other.matrix, self.origin_frame_note)

    def apply(self, f):
        """Act on a function given by its values (function frame)."""
        r = np.sqrt(self.space.weights)
        return (self.matrix @ (r * np.asarray(f))) / r


@dataclass(frozen=True, eq=False)
class RankOneProjection:
    space: object
    xi: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        if xi.shape != (self.space.n,):
            raise DimensionError(f"xi has {xi.size} entries, expected {self.space.n}")
        if abs(np.linalg.norm(xi) - 1) > 1e-12:
            raise ValueError("xi must be a unit vector")
        object.__setattr__(self, "xi", _frozen(xi))

    def operator(self):
        return WeightedOperator(self.space, np.outer(self.xi, self.xi), "rank-one projection")


def _spectral_norm(M):
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def averaging_projection(space, Y=None):
    """Projection onto ``chi_Y``: ``f -> (int_Y f dnu / nu(Y)) chi_Y``."""
    Y = space.indices(range(space.n) if Y is None else Y)
    xi = np.zeros(space.n)
    xi[Y] = np.sqrt(space.weights[Y])
    mass = float(xi @ xi)
    if mass <= 0:
        raise ValueError("Y must have positive measure")
    return RankOneProjection(space, xi / math.sqrt(mass))


def generator_operator(action, s):
    """Unitary ``pi(s)`` in the orthonormal frame: the permutation ``e_x -> e_{s x}``."""
    n = action.n
    M = np.zeros((n, n))
    M[action.perm[s], np.arange(n)] = 1.0
    return WeightedOperator(action.space, M, f"pi({s}) in the orthonormal frame")


def word_operator(action, word):
    n = action.n
    M = np.zeros((n, n))
    M[action.word_perm(word), np.arange(n)] = 1.0
    return WeightedOperator(action.space, M, f"pi of word {''.join(word) or 'e'}")


def _matrix(T):
    if isinstance(T, RankOneProjection):
        return np.outer(T.xi, T.xi)
    if isinstance(T, WeightedOperator):
        return T.matrix
    return np.asarray(T)


def cut_norm(T, A, C):
    """``||chi_A T chi_C||``: top singular value of the A x C block."""
    M = _matrix(T)
    A = np.asarray(list(A), dtype=np.int64)
    C = np.asarray(list(C), dtype=np.int64)
    if len(A) == 0 or len(C) == 0:
        return 0.0
    return _spectral_norm(M[np.ix_(A, C)])


def rho_propagation(T, action, tol=ENTRY_TOL):
    """Largest orbit distance between coordinates coupled by a nonzero entry."""
    M = _matrix(T)
    if M.shape != (action.n, action.n):
        raise DimensionError("operator and action live on different atom sets")
    nz = np.abs(M) > tol
    if not np.any(nz):
        return 0
    d = float(np.max(action.distance_matrix()[nz]))
    return int(d) if math.isfinite(d) else math.inf


@dataclass(frozen=True)
class QuasiLocalityProfile:
    radii: tuple
    eps: tuple
    witnesses: tuple
    mode: str = "exact"

    @property
    def is_lower_bound(self):
        return self.mode == "sampled"


def _reach_masks(close):
    """Per-atom bitmask of the boolean relation ``close[x, y]``."""
    return [_subsets.to_mask(np.flatnonzero(row)) for row in close]


def _batched_cut(M, Abits, Cbits):
    """Top singular value of ``M`` masked to rows A and columns C, per row of the masks."""
    out = np.empty(len(Abits))
    for lo in range(0, len(Abits), SVD_BATCH):
        hi = min(len(Abits), lo + SVD_BATCH)
        sub = M[None, :, :] * Abits[lo:hi, :, None] * Cbits[lo:hi, None, :]
        out[lo:hi] = np.linalg.svd(sub, compute_uv=False)[:, 0]
    return out


def _scan_cut(T, close, cap):
    """Max cut norm over pairs (A, X minus N(A)) with ``N(A)`` the union of ``close`` rows."""
    n = len(close)
    rank_one = isinstance(T, RankOneProjection)
    limit = RANK_ONE_CAP if rank_one else cap
    if n > limit:
        raise CapExceededError(n, limit, "pass a RankOneProjection for the fast path "
                                         "or use sampled mode")
    full = (1 << n) - 1
    reach = _reach_masks(close)
    M = _matrix(T)
    xi2 = T.xi ** 2 if rank_one else None
    found = []
    for masks in _subsets.mask_chunks(1 << n, start=1):
        C = full & ~_subsets.union_masks(masks, reach)
        if rank_one:
            val = np.sqrt(_subsets.masses(masks, xi2) * _subsets.masses(C, xi2))
        else:
            val = _batched_cut(M, _subsets.bit_matrix(masks, n).astype(float),
                               _subsets.bit_matrix(C, n).astype(float))
        top = float(val.max())
        found.append((top, _subsets.lex_smallest(masks[val >= _lower(top)])))
    best = max(v for v, _ in found)
    bestA = _subsets.lex_smallest([w for v, w in found if v >= _lower(best)])
    A = _subsets.to_indices(bestA)
    Cm = full & ~_subsets.union_masks(np.array([bestA], dtype=np.int64), reach)[0]
    C = _subsets.to_indices(Cm)
    return cut_norm(T, A, C), (A, C)


def _lower(top):
    return top - 1e-12 * abs(top) - 1e-15


def _sample_cut(T, close, rng, n_samples):
    n = len(close)
    close = np.asarray(close, dtype=bool)
    best, wit = 0.0, ((), ())
    for _ in range(n_samples):
        size = int(rng.integers(1, n + 1))
        A = np.sort(rng.choice(n, size=size, replace=False))
        C = np.flatnonzero(~np.any(close[A], axis=0))
        val = cut_norm(T, A, C)
        if val > best:
            best, wit = val, (tuple(int(a) for a in A), tuple(int(c) for c in C))
    return best, wit


def _profile(T, relation_for, radii, cap, mode, rng, n_samples):
    n = T.space.n
    if mode == "auto":
        limit = RANK_ONE_CAP if isinstance(T, RankOneProjection) else cap
        mode = "exact" if n <= limit else "sampled"
    eps, wits = [], []
    for r in radii:
        close = relation_for(r)
        if mode == "exact":
            e, w = _scan_cut(T, close, cap)
        elif mode == "sampled":
            rng = rng if rng is not None else np.random.default_rng(0)
            e, w = _sample_cut(T, close, rng, n_samples)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        eps.append(e)
        wits.append(w)
    return QuasiLocalityProfile(tuple(radii), tuple(eps), tuple(wits), mode)


def rho_quasi_locality_profile(T, action, k_list, cap=EXACT_CAP, mode="auto", rng=None,
                               n_samples=N_SAMPLES):
    """``eps(k) = max ||chi_A T chi_C||`` over ``(B_k . A) cap C = {}``.

    A cut norm only grows with C, so for each A the largest admissible
    ``C = X minus B_k . A`` is decisive; the scan runs over A alone.
    """
    D = action.distance_matrix()
    return _profile(T, lambda k: D <= k, tuple(int(k) for k in k_list), cap, mode, rng,
                    n_samples)


def warped_quasi_locality_profile(T, level, R_list, cap=EXACT_CAP, mode="auto", rng=None,
                                  n_samples=N_SAMPLES):
    """Same scan with warped separation ``d^t(A, C) > R``."""
    D = level.warped
    return _profile(T, lambda R: D <= _ball_tol(R), tuple(float(R) for R in R_list), cap,
                    mode, rng, n_samples)


def uniform_warped_profile(T, levels, R_list, **kw):
    """Pointwise max of the per-level warped profiles."""
    per = [warped_quasi_locality_profile(T, lev, R_list, **kw) for lev in levels]
    eps, wits = [], []
    for i in range(len(R_list)):
        j = max(range(len(per)), key=lambda j: per[j].eps[i])
        eps.append(per[j].eps[i])
        wits.append((levels[j].t,) + per[j].witnesses[i])
    return QuasiLocalityProfile(tuple(float(R) for R in R_list), tuple(eps), tuple(wits),
                                per[0].mode)


# -- projections from Markov kernels ------------------------------------------

def hat_embedding_projection(ak):
    """Projection onto ``sqrt(sigma) chi_Y``: ``xi`` proportional to ``sqrt(sigma nu)`` on Y."""
    space = ak.action.space
    xi = np.zeros(space.n)
    xi[list(ak.Y)] = np.sqrt(ak.tilde_nu)
    return RankOneProjection(space, xi / np.linalg.norm(xi))


def hat_markov_operator(ak):
    """Markov operator of ``ak`` moved to L^2(X, nu) by ``f -> sqrt(sigma) f``.

    In orthonormal frames the embedding is the coordinate inclusion, so the
    result is the symmetrized kernel on the Y block and zero elsewhere.
    """
    space = ak.action.space
    M = np.zeros((space.n, space.n))
    Y = list(ak.Y)
    M[np.ix_(Y, Y)] = symmetrized(ak.kernel, ak.tilde_nu)
    return WeightedOperator(space, M, "hat-embedded Markov operator")


@dataclass(frozen=True)
class PowerReport:
    norms: tuple
    predicted_rate: float
    bounds: tuple
    has_gap: bool
    holds: bool
    worst_slack: float
    propagation: tuple = ()
    propagation_bound: tuple = ()


def markov_power_projection(source, n_max, tol=1e-10):
    """``||P^n - P_inf||`` for n = 1..n_max against ``lambda_hat^n``.

    ``source`` is an ActionKernel (hat-embedded into L^2(X, nu), with
    propagation checked) or a reversible MarkovKernel (its own L^2(m)).
    ``lambda_hat`` is the largest modulus of the spectrum off the top
    eigenvalue 1.
    """
    if isinstance(source, ActionKernel):
        P = hat_markov_operator(source).matrix
        Pinf = _matrix(hat_embedding_projection(source))
        spectrum = lambda2(source.kernel, source.tilde_nu)
        action = source.action
        step = max(source.action.gens.length[s] for s in source.S)
    elif isinstance(source, MarkovKernel):
        P = symmetrized(source)
        m = source.reversing_measure
        xi = np.sqrt(m) / math.sqrt(m.sum())
        Pinf = np.outer(xi, xi)
        spectrum = lambda2(source)
        action = None
    else:
        raise TypeError("expected an ActionKernel or a MarkovKernel")
    vals = np.asarray(spectrum.eigenvalues)
    has_gap = spectrum.one_eigenspace_dim == 1
    lam_hat = float(np.max(np.abs(vals[1:]))) if len(vals) > 1 else 0.0
    norms, bounds, props, pbounds = [], [], [], []
    Q = np.eye(len(P))
    slack = math.inf
    for n in range(1, n_max + 1):
        Q = Q @ P
        val = _spectral_norm(Q - Pinf)
        b = lam_hat ** n
        norms.append(val)
        bounds.append(b)
        slack = min(slack, b + tol - val)
        if action is not None:
            props.append(rho_propagation(Q, action))
            pbounds.append(n * step)
    holds = has_gap and slack >= 0 and all(p <= b for p, b in zip(props, pbounds))
    return PowerReport(tuple(norms), lam_hat, tuple(bounds), has_gap, bool(holds), slack,
                       tuple(props), tuple(pbounds))


@dataclass(frozen=True)
class AdReport:
    operator: WeightedOperator
    scale: float
    residual: float
    holds: bool
    power_distances: tuple


def _ad(ak, K_Y):
    """``I K I*`` in the function frame of X, for a function-frame matrix on Y.

    ``I`` is extension by zero and ``I* g = (g / sigma)|_Y``.
    """
    n = ak.action.n
    Y = list(ak.Y)
    out = np.zeros((n, n))
    out[np.ix_(Y, Y)] = K_Y / ak.sigma[None, :]
    return out


def ad_embedding_projection(ak, n_powers=20, tol=1e-10):
    """Zero-extension image of the projection onto constants of L^2(Y, tilde_nu).

    It equals ``(nu(Y) / tilde_nu(Y)) P_Y``.  Also records
    ``||Ad(Pi^n) - Ad(P_tilde)||`` for n = 1..n_powers.
    """
    space = ak.action.space
    t = ak.tilde_nu
    Ptilde = np.outer(np.ones(len(t)), t) / t.sum()
    ad = WeightedOperator.from_function_frame(space, _ad(ak, Ptilde), "Ad of the projection")
    scale = float(ak.nu_Y.sum() / t.sum())
    target = scale * _matrix(averaging_projection(space, ak.Y))
    residual = _spectral_norm(ad.matrix - target)
    dists = []
    Pi = np.asarray(ak.kernel.transition)
    Q = np.eye(len(t))
    for _ in range(n_powers):
        Q = Q @ Pi
        adq = WeightedOperator.from_function_frame(space, _ad(ak, Q)).matrix
        dists.append(_spectral_norm(adq - ad.matrix))
    return AdReport(ad, scale, residual, residual < tol, tuple(dists))


@dataclass(frozen=True)
class FinitePropagationWitness:
    k: int
    markov_power_n: int
    markov_power_bound: float
    truncation_bound: float


def truncate(T, action, k):
    """Zero every entry at orbit distance > k."""
    M = np.array(_matrix(T))
    M[action.distance_matrix() > k] = 0.0
    return M


def finite_propagation_witnesses(ak, k_list):
    """Two upper bounds on the distance from ``P_hat`` to propagation <= k."""
    P = hat_embedding_projection(ak)
    step = max(ak.action.gens.length[s] for s in ak.S)
    n_top = max(int(k) // step for k in k_list)
    power = markov_power_projection(ak, max(n_top, 1)) if n_top >= 1 else None
    out = []
    for k in k_list:
        n = int(k) // step
        if n >= 1:
            mp = power.norms[n - 1]
        else:
            # the zero operator has propagation 0
            mp = 1.0
        tr = _spectral_norm(_matrix(P) - truncate(P, ak.action, k))
        out.append(FinitePropagationWitness(int(k), n, mp, tr))
    return tuple(out)


# -- ghost statistic ----------------------------------------------------------

@dataclass(frozen=True)
class GhostLevel:
    t: float
    n_atoms: int
    g: float
    worst_atom: int
    ball: tuple


def _ghost_level(P, level, R):
    close = level.warped <= _ball_tol(R)
    vals = np.sqrt(close.astype(float) @ (P.xi ** 2))
    x = int(np.argmax(vals))
    return GhostLevel(level.t, level.action.n, float(vals[x]), x,
                      tuple(int(y) for y in np.flatnonzero(close[x])))


def ghost_profile(P, cone, R):
    """``g_t = max_x ||chi_{B_R(x)} xi||`` per cone level: the norm of P
    compressed to the worst R-ball."""
    if R < 0:
        raise ValueError("radius must be nonnegative")
    return tuple(_ghost_level(P, lev, R) for lev in cone.levels)


def refining_ghost_profile(pairs, R):
    """Ghost statistic along levels that each carry their own space and projection."""
    return tuple(_ghost_level(P, lev, R) for P, lev in pairs)


# -- Poincare witness ---------------------------------------------------------

@dataclass(frozen=True)
class PoincareLevel:
    t: Optional[float]
    lhs: tuple
    rhs: tuple
    holds: bool
    variance: float
    edge_energy: float
    max_edge_stretch: float
    mean_warped_distance: Optional[float]


@dataclass(frozen=True)
class PoincareReport:
    kappa: float
    theta: float
    levels: tuple
    holds: bool


def poincare_obstruction_witness(ak, embeddings, levels=None, tol=1e-9):
    """Check ``||g||^2 <= kappa sqrt(T) sum_s sum_{x in Y, s x in Y} |g(x) - g(s x)|^2 nu(x)``
    for each nu-centred coordinate of each embedding, ``kappa = 1/(2(1 - lambda2))``.

    ``embeddings`` is one array (atoms x dim) per level; ``levels`` optionally
    supplies the matching warped levels so the report can set the embedded
    variance against the mean warped distance on Y.
    """
    from .group_actions import theta_bound

    act = ak.action
    Y = np.asarray(ak.Y, dtype=np.int64)
    nu = act.space.weights
    inY = np.zeros(act.n, dtype=bool)
    inY[Y] = True
    spectrum = lambda2(ak.kernel, ak.tilde_nu)
    gap = 1.0 - spectrum.lambda2 if spectrum.one_eigenspace_dim == 1 else 0.0
    kappa = 1.0 / (2.0 * gap) if gap > 0 else math.inf
    theta = theta_bound(act, ak.Y, ak.S)
    out = []
    for i, F in enumerate(embeddings):
        F = np.asarray(F, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        if F.shape[0] != act.n:
            raise DimensionError(f"embedding has {F.shape[0]} rows, expected {act.n}")
        G = F[Y] - (nu[Y] @ F[Y]) / nu[Y].sum()
        lhs = (nu[Y][:, None] * G ** 2).sum(axis=0)
        full = np.zeros_like(F)
        full[Y] = G
        energy = np.zeros(F.shape[1])
        stretch = 0.0
        for s in ak.S:
            p = act.perm[s]
            ok = Y[inY[p[Y]]]
            diff = full[ok] - full[p[ok]]
            energy += (nu[ok][:, None] * diff ** 2).sum(axis=0)
            if len(ok):
                stretch = max(stretch, float(np.max(np.linalg.norm(diff, axis=1))))
        # zero energy stays zero even without a gap (kappa = inf)
        rhs = np.zeros_like(energy)
        pos = energy > 0
        rhs[pos] = kappa * math.sqrt(theta) * energy[pos]
        ok_all = bool(np.all(lhs <= rhs + tol))
        mean_d = None
        t = None
        if levels is not None:
            lev = levels[i]
            t = lev.t
            w = nu[Y] / nu[Y].sum()
            mean_d = float(w @ lev.warped[np.ix_(Y, Y)] @ w)
        out.append(PoincareLevel(t, tuple(map(float, lhs)), tuple(map(float, rhs)), ok_all,
                                 float(lhs.sum()), float(energy.sum()), stretch, mean_d))
    return PoincareReport(kappa, theta, tuple(out), all(l.holds for l in out))
