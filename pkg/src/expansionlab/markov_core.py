"""Reversible Markov kernels on finite measure spaces.

A kernel is stored as a dense row-stochastic matrix ``P`` with ``P[x, y]`` the
probability of moving from atom ``x`` to atom ``y``.  All spectral work happens
in the frame ``f -> sqrt(m) * f``, where a kernel reversible for ``m`` becomes
a plain symmetric matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import _subsets
from .errors import CapExceededError, DetailedBalanceError, DimensionError, UnknownAtomError

ROW_SUM_TOL = 1e-12
BALANCE_TOL = 1e-10
EIG_TOL = 1e-9
ENUMERATION_CAP = 22


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteMeasureSpace:
    """Labeled atoms with strictly positive masses."""

    point_ids: tuple
    weights: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        ids = tuple(self.point_ids)
        w = np.asarray(self.weights, dtype=float).ravel()
        if len(ids) != len(w):
            raise DimensionError(f"{len(ids)} point ids but {len(w)} weights")
        if len(ids) == 0:
            raise ValueError("a measure space needs at least one atom")
        if len(set(ids)) != len(ids):
            raise ValueError("point ids must be pairwise distinct")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("atom weights must be finite and strictly positive")
        object.__setattr__(self, "point_ids", ids)
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "total_mass", float(math.fsum(w)))

    @classmethod
    def from_masses(cls, point_ids, masses):
        """Build a space, silently dropping atoms of mass zero."""
        keep = [(p, float(w)) for p, w in zip(point_ids, masses) if w != 0]
        return cls(tuple(p for p, _ in keep), [w for _, w in keep])

    @classmethod
    def uniform(cls, n, total=1.0, point_ids=None):
        ids = tuple(range(n)) if point_ids is None else tuple(point_ids)
        return cls(ids, np.full(n, total / n))

    @property
    def n(self):
        return len(self.point_ids)

    def index_of(self, point_id):
        try:
            return self.point_ids.index(point_id)
        except ValueError:
            raise UnknownAtomError([point_id], self.n) from None

    def indices(self, subset):
        """Validate a collection of atom indices; returns a sorted int array."""
        idx = np.unique(np.asarray(list(subset), dtype=np.int64))
        bad = idx[(idx < 0) | (idx >= self.n)]
        if len(bad):
            raise UnknownAtomError(bad.tolist(), self.n)
        return idx

    def mass(self, subset):
        return float(math.fsum(self.weights[self.indices(subset)]))

    def restrict(self, subset):
        idx = self.indices(subset)
        return FiniteMeasureSpace(tuple(self.point_ids[i] for i in idx), self.weights[idx])


@dataclass(frozen=True, eq=False)
class MarkovKernel:
    """Row-stochastic transition matrix, optionally with a reversing measure."""

    space: FiniteMeasureSpace
    transition: np.ndarray
    reversing_measure: Optional[np.ndarray] = None

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        n = self.space.n
        if P.shape != (n, n):
            raise DimensionError(f"transition has shape {P.shape}, expected {(n, n)}")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise ValueError("transition entries must be finite and nonnegative")
        rows = P.sum(axis=1)
        worst = int(np.argmax(np.abs(rows - 1)))
        if abs(rows[worst] - 1) > ROW_SUM_TOL:
            raise ValueError(f"row {worst} sums to {rows[worst]!r}, not 1")
        object.__setattr__(self, "transition", _frozen(P))
        if self.reversing_measure is not None:
            m = _measure(self.space, self.reversing_measure)
            if np.any(m <= 0):
                raise ValueError("reversing measure must be strictly positive")
            object.__setattr__(self, "reversing_measure", _frozen(m))
            check_detailed_balance(self, m)

    @property
    def n(self):
        return self.space.n


@dataclass(frozen=True, eq=False)
class SymmetricEdgeMeasure:
    space: FiniteMeasureSpace
    mu: np.ndarray


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: tuple
    lambda2: float
    spectral_gap: float
    one_eigenspace_dim: int


class CheegerResult(NamedTuple):
    kappa: float
    argmin_subset: tuple


class SweepResult(NamedTuple):
    kappa_upper: float
    sweep_subset: tuple


@dataclass(frozen=True)
class SandwichReport:
    kappa: float
    lambda2: float
    spectral_gap: float
    lower: float
    upper: float
    holds: bool


def _measure(space, m):
    m = np.asarray(m, dtype=float).ravel()
    if m.shape != (space.n,):
        raise DimensionError(f"measure has {m.size} entries, expected {space.n}")
    if np.any(m < 0):
        raise ValueError("measures are nonnegative")
    return m


def _vector(kernel, f, dtype=float):
    f = np.asarray(f, dtype=dtype)
    if f.shape != (kernel.n,):
        raise DimensionError(f"vector has shape {f.shape}, expected ({kernel.n},)")
    return f


def _reversing(kernel, m):
    if m is None:
        if kernel.reversing_measure is None:
            raise ValueError("no reversing measure given and the kernel carries none")
        return kernel.reversing_measure
    return _measure(kernel.space, m)


def detailed_balance_residual(kernel, m):
    """Return ``(max residual, worst (x, y))`` of ``m(x)P(x,y) - m(y)P(y,x)``."""
    flux = np.asarray(m, dtype=float)[:, None] * kernel.transition
    diff = np.abs(flux - flux.T)
    x, y = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return float(diff[x, y]), (int(x), int(y))


def check_detailed_balance(kernel, m, tol=BALANCE_TOL):
    res, pair = detailed_balance_residual(kernel, m)
    if res > tol:
        raise DetailedBalanceError(pair, res, tol)
    return res


def markov_apply(kernel, f):
    """``(Pf)(x) = sum_y P(x, y) f(y)``."""
    f = np.asarray(f)
    if f.shape != (kernel.n,):
        raise DimensionError(f"vector has shape {f.shape}, expected ({kernel.n},)")
    return kernel.transition @ f


def dual_apply(kernel, nu):
    """Push a measure forward one step: ``(nu P)(y) = sum_x nu(x) P(x, y)``."""
    nu = _measure(kernel.space, nu)
    return nu @ kernel.transition


def edge_measure(kernel, m=None):
    m = _reversing(kernel, m)
    mu = m[:, None] * kernel.transition
    res = float(np.max(np.abs(mu - mu.T)))
    if res > BALANCE_TOL:
        check_detailed_balance(kernel, m)
    return SymmetricEdgeMeasure(kernel.space, _frozen(mu))


def boundary_size(kernel, m, A):
    """Mass carried out of ``A`` in one step, started from ``m`` restricted to ``A``."""
    m = _reversing(kernel, m)
    idx = kernel.space.indices(A)
    inside = np.zeros(kernel.n, dtype=bool)
    inside[idx] = True
    out = kernel.transition[np.ix_(inside, ~inside)].sum(axis=1)
    return float(math.fsum(m[inside] * out))


def dirichlet_energy(kernel, m, f, p=2.0):
    """``(1/2) sum_{x,y} |f(x) - f(y)|^p mu(x, y)`` with ``mu = m(x) P(x, y)``."""
    if p < 1:
        raise ValueError(f"Dirichlet energy needs p >= 1, got {p}")
    m = _reversing(kernel, m)
    f = _vector(kernel, f, dtype=complex)
    mu = m[:, None] * kernel.transition
    diff = np.abs(f[:, None] - f[None, :]) ** p
    return 0.5 * float(np.sum(diff * mu))


def symmetrized(kernel, m=None):
    """``M = D^{1/2} P D^{-1/2}`` with ``D = diag(m)``; symmetric under detailed balance."""
    m = _reversing(kernel, m)
    check_detailed_balance(kernel, m)
    r = np.sqrt(m)
    M = r[:, None] * kernel.transition / r[None, :]
    return 0.5 * (M + M.T)


def _spectrum(kernel, m):
    M = symmetrized(kernel, m)
    vals, vecs = np.linalg.eigh(M)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def lambda2(kernel, m=None):
    """Top of the spectrum on mean-zero functions.

    The constant function sits at eigenvalue 1 (vector ``sqrt(m)`` in the
    symmetric frame), so removing one copy of 1 leaves the spectrum on the
    orthogonal complement.  A one-atom space has a trivial complement and
    reports ``lambda2 = -inf``.
    """
    m = _reversing(kernel, m)
    vals, _ = _spectrum(kernel, m)
    dim1 = int(np.sum(np.abs(vals - 1.0) <= EIG_TOL))
    lam2 = float(vals[1]) if len(vals) > 1 else -math.inf
    gap = 0.0 if dim1 > 1 else 1.0 - lam2
    return SpectralReport(tuple(float(v) for v in vals), lam2, gap, dim1)


def _check_cap(n, cap, advice):
    if n > cap:
        raise CapExceededError(n, cap, advice)


def cheeger_exact(kernel, m=None, cap=ENUMERATION_CAP):
    """Exact Cheeger constant by enumerating every proper subset.

    Subsets are visited in complement pairs (masks avoiding the last atom);
    each pair contributes the side of mass at most ``m(X)/2``, or both sides
    when the masses are equal.  Ties are broken toward the lexicographically
    smallest sorted index tuple.
    """
    m = _reversing(kernel, m)
    n = kernel.n
    _check_cap(n, cap, "use cheeger_sweep for an upper bound")
    check_detailed_balance(kernel, m)
    if n == 1:
        return CheegerResult(math.inf, ())
    mu = m[:, None] * kernel.transition
    mu = 0.5 * (mu + mu.T)
    total = float(math.fsum(m))
    half = 0.5 * total * (1 + 1e-12)
    full = (1 << n) - 1

    winners = []
    for masks in _subsets.mask_chunks(1 << (n - 1), start=1):
        B = _subsets.bit_matrix(masks, n).astype(float)
        mA = B @ m
        bnd = np.einsum("ij,ij->i", B @ mu, 1.0 - B)
        for side_mass, side_masks in ((mA, masks), (total - mA, full ^ masks)):
            ok = side_mass <= half
            if not np.any(ok):
                continue
            ratio = bnd[ok] / side_mass[ok]
            lo = float(ratio.min())
            tie = _subsets.near_ties(ratio, lo)
            winners.append((lo, _subsets.lex_smallest(side_masks[ok][tie])))
    best = min(v for v, _ in winners)
    winner = _subsets.lex_smallest([w for v, w in winners if _subsets.near_ties(v, best)])
    return CheegerResult(float(best), _subsets.to_indices(winner))


def cheeger_sweep(kernel, m=None):
    """Fiedler sweep: an upper bound on the Cheeger constant.

    Atoms are ordered by the lambda2 eigenvector (symmetric frame, divided
    by ``sqrt(m)``); every prefix cut is scored on its lighter side.
    """
    m = _reversing(kernel, m)
    n = kernel.n
    if n == 1:
        return SweepResult(math.inf, ())
    vals, vecs = _spectrum(kernel, m)
    order = np.argsort(vecs[:, 1] / np.sqrt(m), kind="stable")
    mu = m[:, None] * kernel.transition
    total = float(math.fsum(m))
    half = 0.5 * total * (1 + 1e-12)
    best, best_set = math.inf, ()
    inside = np.zeros(n, dtype=bool)
    for k in range(n - 1):
        inside[order[k]] = True
        bnd = float(mu[np.ix_(inside, ~inside)].sum())
        mA = float(m[inside].sum())
        for side, side_mass in ((inside, mA), (~inside, total - mA)):
            if side_mass <= half and bnd / side_mass < best:
                best = bnd / side_mass
                best_set = tuple(int(i) for i in np.flatnonzero(side))
    return SweepResult(best, best_set)


def verify_cheeger_sandwich(kernel, m=None, cap=ENUMERATION_CAP, tol=EIG_TOL):
    """Check ``kappa^2 / 2 <= 1 - lambda2 <= 2 kappa`` with exact ``kappa``."""
    m = _reversing(kernel, m)
    kappa, _ = cheeger_exact(kernel, m, cap=cap)
    spectrum = lambda2(kernel, m)
    gap = 1.0 - spectrum.lambda2
    lower, upper = kappa * kappa / 2.0, 2.0 * kappa
    holds = bool(lower <= gap + tol and gap <= upper + tol)
    return SandwichReport(kappa, spectrum.lambda2, gap, lower, upper, holds)


# -- kernel families ---------------------------------------------------------

def identity_kernel(n):
    space = FiniteMeasureSpace.uniform(n)
    return MarkovKernel(space, np.eye(n), space.weights)


def uniform_kernel(n):
    """Rank-one kernel: every row is the uniform distribution."""
    space = FiniteMeasureSpace.uniform(n)
    return MarkovKernel(space, np.full((n, n), 1.0 / n), space.weights)


def two_point_kernel(p, q):
    """``P(a, b) = p``, ``P(b, a) = q``; reversing measure ``(q, p)/(p + q)``."""
    if not (0 <= p <= 1 and 0 <= q <= 1) or p + q == 0:
        raise ValueError("need 0 <= p, q <= 1 and p + q > 0")
    space = FiniteMeasureSpace(("a", "b"), [0.5, 0.5])
    m = np.array([q, p]) / (p + q)
    return MarkovKernel(space, [[1 - p, p], [q, 1 - q]], m)


def lazy_cycle_kernel(n):
    """``(I + shift + shift^-1) / 3`` on Z/n with the uniform measure."""
    if n < 3:
        raise ValueError("lazy cycle needs n >= 3")
    P = np.eye(n) / 3.0
    for j in range(n):
        P[j, (j + 1) % n] += 1.0 / 3.0
        P[j, (j - 1) % n] += 1.0 / 3.0
    space = FiniteMeasureSpace.uniform(n)
    return MarkovKernel(space, P, space.weights)


def random_reversible_kernel(n, rng, density=0.6):
    """Random kernel from a symmetric nonnegative weight matrix.

    With ``W`` symmetric, ``m = W 1`` and ``P = W / m`` satisfy detailed
    balance by construction.  Sparse draws may be reducible, which is kept
    on purpose (it exercises the no-gap branch).
    """
    W = rng.random((n, n)) * (rng.random((n, n)) < density)
    W = np.triu(W, 1)
    W = W + W.T + np.diag(rng.random(n) * (rng.random(n) < 0.5))
    deg = W.sum(axis=1)
    lonely = deg == 0
    W[lonely, lonely] = 1.0
    deg = W.sum(axis=1)
    m = deg / deg.sum()
    P = W / deg[:, None]
    P /= P.sum(axis=1, keepdims=True)
    space = FiniteMeasureSpace(tuple(range(n)), m)
    return MarkovKernel(space, P, m)
