"""Registry of built-in test families, addressable as ``name:args``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .group_actions import (
    FiniteAction,
    gen_cycle,
    dyadic_chain_levels,
    gen_schreier_chain,
    gen_margulis_torus,
    gen_swap,
    _with_identity,
)
from .markov_core import FiniteMeasureSpace, MarkovKernel, two_point_kernel
from .warped_cone import (
    FiniteMetric,
    chord_metric,
    discrete_metric,
    dyadic_ultrametric,
    torus_metric,
)

DYADIC_GENS = _with_identity(("+1", "-1"), {"+1": "-1", "-1": "+1"})


@dataclass(frozen=True, eq=False)
class Family:
    name: str
    action: Optional[FiniteAction] = None
    metric: Optional[FiniteMetric] = None
    kernel: Optional[MarkovKernel] = None
    chain: tuple = ()
    chain_levels: tuple = ()

    @property
    def n_atoms(self):
        if self.action is not None:
            return self.action.n
        return self.kernel.n


def weighted_cycle(n):
    w = np.arange(1, n + 1, dtype=float)
    return gen_cycle(n, w / w.sum())


def split_cycle(n):
    """Two disjoint copies of the n-cycle: an action with an invariant half."""
    if n < 2:
        raise ValueError("split cycle needs n >= 2")
    j = np.arange(n)
    fwd = np.concatenate([(j + 1) % n, n + (j + 1) % n])
    bwd = np.concatenate([(j - 1) % n, n + (j - 1) % n])
    gens = _with_identity(("+1", "-1"), {"+1": "-1", "-1": "+1"})
    space = FiniteMeasureSpace.uniform(2 * n)
    return FiniteAction(space, gens, {"e": np.arange(2 * n), "+1": fwd, "-1": bwd})


def split_cycle_metric(space, n):
    D = np.full((2 * n, 2 * n), 2.0)
    c = chord_metric(FiniteMeasureSpace.uniform(n)).dist
    D[:n, :n] = c
    D[n:, n:] = c
    return FiniteMetric(space, D)


def margulis_metric(action, n):
    coords = [tuple(int(v) for v in pid.split("_")) for pid in action.space.point_ids]
    return torus_metric(action.space, n, coords)


def _args(raw, default, cast):
    if raw is None or raw == "":
        return default
    return tuple(cast(a) for a in raw.split(","))


def build(text):
    """Build a family from ``name`` or ``name:args`` (comma separated)."""
    name, _, raw = text.partition(":")
    name = name.strip()
    if name == "cycle":
        (n,) = _args(raw, (8,), int)
        a = gen_cycle(n)
        return Family(f"cycle:{n}", a, chord_metric(a.space))
    if name == "weighted-cycle":
        (n,) = _args(raw, (6,), int)
        a = weighted_cycle(n)
        return Family(f"weighted-cycle:{n}", a, chord_metric(a.space))
    if name == "split-cycle":
        (n,) = _args(raw, (4,), int)
        a = split_cycle(n)
        return Family(f"split-cycle:{n}", a, split_cycle_metric(a.space, n))
    if name in ("margulis", "margulis-punctured"):
        (n,) = _args(raw, (3,), int)
        a = gen_margulis_torus(n, punctured=name.endswith("punctured"))
        return Family(f"{name}:{n}", a, margulis_metric(a, n))
    if name == "schreier-dyadic":
        (d,) = _args(raw, (3,), int)
        levels = tuple(dyadic_chain_levels(d))
        chain = tuple(gen_schreier_chain(DYADIC_GENS, levels))
        top = chain[-1]
        return Family(f"schreier-dyadic:{d}", top, dyadic_ultrametric(top.space), chain=chain,
                      chain_levels=levels)
    if name == "swap":
        a = gen_swap()
        return Family("swap", a, discrete_metric(a.space, 2.0))
    if name == "weighted-swap":
        a = gen_swap([1 / 3, 2 / 3])
        return Family("weighted-swap", a, discrete_metric(a.space, 2.0))
    if name == "two-point":
        p, q = _args(raw, (0.3, 0.3), float)
        return Family(f"two-point:{p:g},{q:g}", kernel=two_point_kernel(p, q))
    raise KeyError(f"unknown built-in family {text!r}; known: {', '.join(NAMES)}")


NAMES = ("cycle", "weighted-cycle", "split-cycle", "margulis", "margulis-punctured",
         "schreier-dyadic", "swap", "weighted-swap", "two-point")

ALL = (
    "swap",
    "weighted-swap",
    "two-point:0.3,0.3",
    "two-point:0.2,0.5",
    "cycle:3",
    "cycle:4",
    "cycle:8",
    "cycle:12",
    "weighted-cycle:6",
    "weighted-cycle:8",
    "split-cycle:3",
    "split-cycle:6",
    "margulis:2",
    "margulis:3",
    "margulis:4",
    "margulis-punctured:2",
    "margulis-punctured:3",
    "schreier-dyadic:3",
    "schreier-dyadic:4",
)


def resolve(text):
    """``all`` expands to the full list; anything else is one family."""
    if text == "all":
        return [build(s) for s in ALL]
    return [build(s) for s in text.split(";") if s.strip()]


def margulis_refining(ns=(2, 4, 8, 16), t_of_n=lambda n: float(n * n)):
    """Levels of growing torus size, each warped at its own scale."""
    out = []
    for n in ns:
        a = gen_margulis_torus(n)
        out.append((n, a, margulis_metric(a, n), t_of_n(n)))
    return out
