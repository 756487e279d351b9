import itertools
import math

import numpy as np
from hypothesis import HealthCheck, settings

settings.register_profile("lab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


def brute_cheeger(P, m):
    """Cheeger constant by itertools over all proper subsets (independent of bitmasks)."""
    n = len(m)
    mu = m[:, None] * P
    best = math.inf
    for r in range(1, n):
        for A in itertools.combinations(range(n), r):
            mass = m[list(A)].sum()
            if mass > 0.5 * m.sum() * (1 + 1e-12):
                continue
            out = [y for y in range(n) if y not in A]
            best = min(best, mu[np.ix_(A, out)].sum() / mass)
    return best


def all_subsets(n, nonempty=True):
    for r in range(1 if nonempty else 0, n + 1):
        yield from itertools.combinations(range(n), r)
