"""Finite models of group actions: generator permutations on weighted atoms."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.sparse import csgraph

from .errors import CompatibilityError, DimensionError, UnknownAtomError
from .markov_core import FiniteMeasureSpace, _frozen

RN_TOL = 1e-12


@dataclass(frozen=True)
class GeneratorSet:
    """Symmetric generating set with integer lengths.

    ``identity`` names the identity symbol (length 0) or is None.
    """

    symbols: tuple
    inverse_of: Mapping
    length: Mapping
    identity: Optional[str] = None

    def __post_init__(self):
        syms = tuple(self.symbols)
        if len(set(syms)) != len(syms):
            raise ValueError("generator symbols must be distinct")
        inv = dict(self.inverse_of)
        ln = {s: int(self.length.get(s, 0 if s == self.identity else 1)) for s in syms}
        for s in syms:
            if s not in inv or inv[s] not in syms:
                raise ValueError(f"generator {s!r} has no inverse in the set")
            if inv[inv[s]] != s:
                raise ValueError(f"inverse map is not an involution at {s!r}")
            if ln[s] != ln[inv[s]]:
                raise ValueError(f"length of {s!r} differs from its inverse")
            if s == self.identity:
                if ln[s] != 0 or inv[s] != s:
                    raise ValueError("identity must have length 0 and be self-inverse")
            elif ln[s] <= 0:
                raise ValueError(f"generator {s!r} needs a positive length")
        if self.identity is not None and self.identity not in syms:
            raise ValueError("identity symbol is not among the generators")
        object.__setattr__(self, "symbols", syms)
        object.__setattr__(self, "inverse_of", inv)
        object.__setattr__(self, "length", ln)

    @property
    def includes_identity(self):
        return self.identity is not None

    @property
    def max_length(self):
        return max(self.length.values())


@dataclass(frozen=True, eq=False)
class FiniteAction:
    space: FiniteMeasureSpace
    gens: GeneratorSet
    perm: Mapping
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        n = self.space.n
        perms = {}
        for s in self.gens.symbols:
            if s not in self.perm:
                raise ValueError(f"no permutation given for generator {s!r}")
            p = np.asarray(self.perm[s], dtype=np.int64)
            if p.shape != (n,):
                raise DimensionError(f"permutation for {s!r} has {p.size} entries, expected {n}")
            if not np.array_equal(np.sort(p), np.arange(n)):
                raise ValueError(f"generator {s!r} does not act as a bijection")
            perms[s] = _frozen(p)
        for s in self.gens.symbols:
            t = self.gens.inverse_of[s]
            if not np.array_equal(perms[t][perms[s]], np.arange(n)):
                raise ValueError(f"permutation of {t!r} does not invert {s!r}")
        e = self.gens.identity
        if e is not None and not np.array_equal(perms[e], np.arange(n)):
            raise ValueError("identity generator moves some atom")
        object.__setattr__(self, "perm", perms)

    @property
    def n(self):
        return self.space.n

    def symbols(self, S=None):
        """Validate a generator subset (default: all generators)."""
        if S is None:
            return self.gens.symbols
        S = tuple(dict.fromkeys(S))
        bad = [s for s in S if s not in self.perm]
        if bad:
            raise ValueError(f"unknown generators {bad}")
        return S

    def word_perm(self, word):
        """Permutation of a word; the rightmost letter acts first."""
        p = np.arange(self.n)
        for s in reversed(tuple(word)):
            p = self.perm[s][p]
        return p

    def distance_matrix(self):
        """All-pairs orbit distances (word length), ``inf`` across orbits."""
        if "dist" not in self._cache:
            n = self.n
            W = np.full((n, n), np.inf)
            rows = np.arange(n)
            for s in self.gens.symbols:
                if s == self.gens.identity:
                    continue
                np.minimum.at(W, (rows, self.perm[s]), float(self.gens.length[s]))
            np.fill_diagonal(W, np.inf)
            G = csgraph.csgraph_from_dense(W, null_value=np.inf)
            D = csgraph.shortest_path(G, method="D", directed=True)
            self._cache["dist"] = _frozen(D)
        return self._cache["dist"]

    def ball_masks(self, k):
        """Boolean matrix ``B[x, y] = (y in B_k . x)``."""
        return self.distance_matrix() <= k

    def orbits(self):
        D = self.distance_matrix()
        seen, out = set(), []
        for x in range(self.n):
            if x not in seen:
                orb = tuple(int(y) for y in np.flatnonzero(np.isfinite(D[x])))
                seen.update(orb)
                out.append(orb)
        return out


@dataclass(frozen=True, eq=False)
class RadonNikodymTable:
    action: FiniteAction
    r: Mapping

    def inversion_residual(self):
        """Worst relative error of ``r(s, x) r(s^-1, s x) = 1``."""
        worst = 0.0
        for s, p in self.action.perm.items():
            t = self.action.gens.inverse_of[s]
            worst = max(worst, float(np.max(np.abs(self.r[s] * self.r[t][p] - 1.0))))
        return worst

    def change_of_variable_residual(self, f, Y):
        """Both sides of the half-density change of variable for each generator.

        ``sum_{x in Y} f(s x) r(s,x)^(1/2) nu(x) = sum_{x in sY} f(x) r(s^-1,x)^(1/2) nu(x)``
        """
        act = self.action
        nu = act.space.weights
        Y = act.space.indices(Y)
        f = np.asarray(f)
        worst = 0.0
        for s, p in act.perm.items():
            t = act.gens.inverse_of[s]
            lhs = np.sum(f[p[Y]] * np.sqrt(self.r[s][Y]) * nu[Y])
            sY = p[Y]
            rhs = np.sum(f[sY] * np.sqrt(self.r[t][sY]) * nu[sY])
            worst = max(worst, float(abs(lhs - rhs)))
        return worst


def rn_table(action):
    """``r(s, x) = nu(s x) / nu(x)`` for every generator and atom."""
    nu = action.space.weights
    r = {s: _frozen(nu[p] / nu) for s, p in action.perm.items()}
    return RadonNikodymTable(action, r)


def ball_image(action, A, k, S=None):
    """``B_k . A`` by Dijkstra over generator moves, as a sorted atom tuple."""
    if k < 0:
        raise ValueError("ball radius must be nonnegative")
    S = action.symbols(S)
    A = action.space.indices(A)
    best = {int(a): 0 for a in A}
    heap = [(0, int(a)) for a in A]
    heapq.heapify(heap)
    while heap:
        d, x = heapq.heappop(heap)
        if d > best[x]:
            continue
        for s in S:
            nd = d + action.gens.length[s]
            if nd > k:
                continue
            y = int(action.perm[s][x])
            if nd < best.get(y, math.inf):
                best[y] = nd
                heapq.heappush(heap, (nd, y))
    return tuple(sorted(best))


def orbit_distance(action, x, y):
    """Word-length distance from ``x`` to ``y``; ``inf`` across orbits."""
    n = action.n
    for a in (x, y):
        if not 0 <= int(a) < n:
            raise UnknownAtomError([a], n)
    d = float(action.distance_matrix()[int(x), int(y)])
    return int(d) if math.isfinite(d) else math.inf


def theta_bound(action, Y, S=None):
    """Largest ``max(r, 1/r)`` over ``x`` in Y and ``s`` in S with ``s x`` in Y."""
    Y = action.space.indices(Y)
    if len(Y) == 0:
        raise ValueError("Y must be nonempty")
    inY = np.zeros(action.n, dtype=bool)
    inY[Y] = True
    nu = action.space.weights
    theta = 1.0
    for s in action.symbols(S):
        p = action.perm[s]
        ok = Y[inY[p[Y]]]
        if len(ok):
            r = nu[p[ok]] / nu[ok]
            theta = max(theta, float(np.max(np.maximum(r, 1.0 / r))))
    return theta


@dataclass(frozen=True)
class FreenessReport:
    free: bool
    length_cap: int
    witness_word: tuple = ()
    witness_atom: Optional[int] = None


def is_free(action, length_cap=4):
    """Search reduced words up to ``length_cap`` for one with a fixed point.

    Only the generator words are known, not the group, so a word that is
    trivial in the group yet reduced in the free group counts as a witness.
    The report therefore means "free as a free-group action up to the cap".
    """
    gens = [s for s in action.gens.symbols if s != action.gens.identity]
    inv = action.gens.inverse_of
    frontier = [((), np.arange(action.n))]
    for _ in range(length_cap):
        nxt = []
        for word, p in frontier:
            for s in gens:
                if word and inv[s] == word[0]:
                    continue
                q = action.perm[s][p]
                w = (s,) + word
                fixed = np.flatnonzero(q == np.arange(action.n))
                if len(fixed):
                    return FreenessReport(False, length_cap, w, int(fixed[0]))
                nxt.append((w, q))
        frontier = nxt
    return FreenessReport(True, length_cap)


# -- built-in families -------------------------------------------------------

def _with_identity(symbols, inverse_of, length=None):
    syms = ("e",) + tuple(symbols)
    inv = {"e": "e", **inverse_of}
    ln = {"e": 0, **{s: 1 for s in symbols}, **(length or {})}
    return GeneratorSet(syms, inv, ln, "e")


def _space(n, weights, ids=None):
    ids = tuple(range(n)) if ids is None else tuple(ids)
    if weights is None:
        return FiniteMeasureSpace.uniform(n, point_ids=ids)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise DimensionError(f"expected {n} weights, got {w.size}")
    return FiniteMeasureSpace(ids, w)


def gen_cycle(n, weights=None):
    """Rotation action of Z on Z/n with generators ``e, +1, -1``."""
    if n < 2:
        raise ValueError("cycle needs n >= 2")
    j = np.arange(n)
    gens = _with_identity(("+1", "-1"), {"+1": "-1", "-1": "+1"})
    perm = {"e": j, "+1": (j + 1) % n, "-1": (j - 1) % n}
    return FiniteAction(_space(n, weights), gens, perm)


def gen_swap(weights=None):
    """Two atoms exchanged by a self-inverse generator ``s``."""
    gens = _with_identity(("s",), {"s": "s"})
    return FiniteAction(_space(2, weights), gens, {"e": [0, 1], "s": [1, 0]})


def gen_margulis_torus(n, punctured=False):
    """Shears ``a: (x,y) -> (x+y,y)`` and ``b: (x,y) -> (x,x+y)`` on (Z/n)^2.

    Both shears fix the origin, so on the full torus it is an orbit of its
    own.  ``punctured=True`` removes it; for prime n the rest is one orbit.
    """
    if n < 2:
        raise ValueError("torus needs n >= 2")
    pts = [(x, y) for x in range(n) for y in range(n)]
    if punctured:
        pts = pts[1:]
    index = {p: i for i, p in enumerate(pts)}
    maps = {
        "e": lambda x, y: (x, y),
        "a": lambda x, y: ((x + y) % n, y),
        "A": lambda x, y: ((x - y) % n, y),
        "b": lambda x, y: (x, (x + y) % n),
        "B": lambda x, y: (x, (y - x) % n),
    }
    perm = {s: [index[f(x, y)] for x, y in pts] for s, f in maps.items()}
    gens = _with_identity(("a", "A", "b", "B"), {"a": "A", "A": "a", "b": "B", "B": "b"})
    ids = [f"{x}_{y}" for x, y in pts]
    return FiniteAction(_space(len(pts), None, ids), gens, perm)


@dataclass(frozen=True)
class ChainLevel:
    n_cosets: int
    perms: Mapping
    project_to_previous: Optional[Sequence[int]] = None


def gen_schreier_chain(gens, levels):
    """One uniform action per level, checking that projections are equivariant.

    ``levels[i].project_to_previous[x]`` is the level-(i-1) coset under coset
    x of level i; it must commute with every generator.
    """
    if not levels:
        raise ValueError("a chain needs at least one level")
    actions = []
    for i, lev in enumerate(levels):
        act = FiniteAction(_space(lev.n_cosets, None), gens, lev.perms)
        if i > 0:
            proj = lev.project_to_previous
            if proj is None:
                raise ValueError(f"level {i} has no projection to level {i - 1}")
            proj = np.asarray(proj, dtype=np.int64)
            prev = actions[-1]
            if proj.shape != (act.n,) or np.any(proj < 0) or np.any(proj >= prev.n):
                raise DimensionError(f"level {i}: projection must map {act.n} cosets into {prev.n}")
            for s in gens.symbols:
                bad = np.flatnonzero(proj[act.perm[s]] != prev.perm[s][proj])
                if len(bad):
                    raise CompatibilityError(i, s, int(bad[0]))
        actions.append(act)
    return actions


def dyadic_chain_levels(depth):
    """Levels Z/2^i, i = 1..depth, with reduction mod 2^(i-1) between them."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    out = []
    for i in range(1, depth + 1):
        n = 2 ** i
        j = np.arange(n)
        perms = {"e": j, "+1": (j + 1) % n, "-1": (j - 1) % n}
        proj = None if i == 1 else j % (n // 2)
        out.append(ChainLevel(n, perms, proj))
    return out


def gen_dyadic_chain(depth):
    gens = _with_identity(("+1", "-1"), {"+1": "-1", "-1": "+1"})
    return gen_schreier_chain(gens, dyadic_chain_levels(depth))


def random_weighted_action(n, rng, n_pairs=2, self_inverse=0):
    """Identity plus random permutations (with inverses) and random weights."""
    syms, inv, perm = [], {}, {"e": np.arange(n)}
    for i in range(n_pairs):
        p = rng.permutation(n)
        s, t = f"g{i}", f"G{i}"
        syms += [s, t]
        inv[s], inv[t] = t, s
        perm[s], perm[t] = p, np.argsort(p)
    for i in range(self_inverse):
        # random involution
        p = np.arange(n)
        order = rng.permutation(n)
        for a, b in zip(order[0::2], order[1::2]):
            if rng.random() < 0.7:
                p[a], p[b] = b, a
        s = f"h{i}"
        syms.append(s)
        inv[s] = s
        perm[s] = p
    gens = _with_identity(syms, inv)
    w = rng.random(n) + 0.05
    return FiniteAction(_space(n, w / w.sum()), gens, perm)


def words(action, max_length, S=None):
    """All generator words of total length at most ``max_length``."""
    S = [s for s in action.symbols(S) if s != action.gens.identity]
    out = [()]
    frontier = [((), 0)]
    while frontier:
        nxt = []
        for w, L in frontier:
            for s in S:
                L2 = L + action.gens.length[s]
                if L2 <= max_length:
                    nxt.append(((s,) + w, L2))
        out.extend(w for w, _ in nxt)
        frontier = nxt
    return out
