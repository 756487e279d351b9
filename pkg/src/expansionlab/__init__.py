"""Numerical laboratory for expansion of measured actions, warped cones and
quasi-local operators on finite spaces."""

from .errors import (
    CapExceededError,
    CompatibilityError,
    DetailedBalanceError,
    DimensionError,
    LabError,
    SchemaError,
    UnknownAtomError,
    UnknownLevelError,
)
from .markov_core import FiniteMeasureSpace, MarkovKernel, cheeger_exact, lambda2
from .group_actions import FiniteAction, GeneratorSet
from .expansion import ActionKernel, build_action_kernel
from .warped_cone import FiniteMetric, warp, sparse_cone

__version__ = "0.1.0"
