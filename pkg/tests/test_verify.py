import math

from expansionlab.families import resolve
from expansionlab.verify import CHECKS, DEFAULT_TOLERANCES, run_verify


def test_check_names_unique_and_many():
    names = [n for n, _, _ in CHECKS]
    assert len(names) == len(set(names)) >= 25
    assert {k for _, k, _ in CHECKS} <= set(DEFAULT_TOLERANCES)


def test_small_run_passes_and_is_seeded():
    fams = resolve("cycle:6;weighted-swap;two-point:0.2,0.5;split-cycle:3")
    a = run_verify(fams, seed=5, n_random_kernels=20, n_random_actions=10)
    b = run_verify(fams, seed=5, n_random_kernels=20, n_random_actions=10)
    assert a.passed
    assert [c.worst_violation for c in a.checks] == [c.worst_violation for c in b.checks]
    assert all(math.isfinite(c.worst_violation) for c in a.checks)


def test_tightened_tolerance_fails():
    rep = run_verify(resolve("cycle:5"), tolerances={"exact": -1.0}, only={"ball_monotonicity"})
    assert rep.n_checks == 1 and not rep.passed
