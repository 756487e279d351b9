"""Bitmask enumeration of subsets of a small atom set.

Subsets of ``range(n)`` are encoded as int64 masks, bit ``i`` for atom ``i``.
Everything here is vectorized over chunks of masks so that exhaustive scans
up to ~2^22 subsets stay fast.
"""

from __future__ import annotations

import numpy as np

CHUNK = 1 << 15


def mask_chunks(n_masks, start=0, chunk=CHUNK):
    """Yield consecutive int64 mask ranges covering ``[start, n_masks)``."""
    lo = start
    while lo < n_masks:
        hi = min(n_masks, lo + chunk)
        yield np.arange(lo, hi, dtype=np.int64)
        lo = hi


def bit_matrix(masks, n):
    """Boolean membership matrix, shape (len(masks), n)."""
    return ((masks[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)


def masses(masks, weights):
    weights = np.asarray(weights, dtype=float)
    return bit_matrix(masks, len(weights)) @ weights


def image_masks(masks, targets):
    """Masks of images under a partial map ``j -> targets[j]`` (-1 drops j)."""
    out = np.zeros_like(masks)
    for j, tgt in enumerate(targets):
        if tgt < 0:
            continue
        out |= ((masks >> j) & 1) << int(tgt)
    return out


def union_masks(masks, per_atom):
    """OR of ``per_atom[j]`` over the atoms ``j`` present in each mask."""
    out = np.zeros_like(masks)
    for j, m in enumerate(per_atom):
        out |= np.where((masks >> j) & 1, np.int64(m), np.int64(0))
    return out


def to_indices(mask):
    mask = int(mask)
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def to_mask(indices):
    m = 0
    for i in indices:
        m |= 1 << int(i)
    return m


def lex_smallest(masks):
    """Mask whose sorted index tuple is lexicographically smallest."""
    cand = np.unique(np.asarray(masks, dtype=np.int64))
    rem = cand.copy()
    # peel off lowest set bits; an exhausted mask is a prefix and wins
    while len(cand) > 1:
        done = rem == 0
        if np.any(done):
            return int(cand[done][0])
        low = rem & -rem
        keep = low == low.min()
        cand, rem = cand[keep], rem[keep] ^ low[keep]
    return int(cand[0])


def near_ties(values, best, rtol=1e-12, atol=1e-15):
    return values <= best + rtol * abs(best) + atol
