"""Structured errors. Each carries the CLI exit code it maps to."""

from __future__ import annotations


class LabError(Exception):
    exit_code = 1


class DimensionError(LabError, ValueError):
    """Vector or matrix shape does not match the atom count."""


class UnknownAtomError(LabError, KeyError):
    def __init__(self, atoms, n_atoms):
        self.atoms = list(atoms)
        self.n_atoms = n_atoms
        super().__init__(f"unknown atoms {self.atoms} (space has {n_atoms} atoms)")

    def __str__(self):
        return self.args[0]


class DetailedBalanceError(LabError, ValueError):
    def __init__(self, worst_pair, residual, tolerance):
        self.worst_pair = tuple(worst_pair)
        self.residual = float(residual)
        self.tolerance = tolerance
        x, y = self.worst_pair
        super().__init__(
            f"detailed balance violated at atoms ({x}, {y}): "
            f"|m(x)P(x,y) - m(y)P(y,x)| = {self.residual:.3e} > {tolerance:.1e}"
        )


class CapExceededError(LabError):
    exit_code = 3

    def __init__(self, n_atoms, cap, advice=""):
        self.n_atoms = n_atoms
        self.cap = cap
        msg = f"{n_atoms} atoms exceeds the enumeration cap of {cap}"
        if advice:
            msg += f"; {advice}"
        super().__init__(msg)


class CompatibilityError(LabError, ValueError):
    def __init__(self, level, generator, coset):
        self.level = level
        self.generator = generator
        self.coset = coset
        super().__init__(
            f"level {level}: projection is not equivariant for generator "
            f"{generator!r} at coset {coset}"
        )


class SchemaError(LabError, ValueError):
    exit_code = 2

    def __init__(self, message, line=None, column=None, path=None):
        self.line = line
        self.column = column
        self.path = path
        loc = ""
        if line is not None:
            loc = f"line {line}, column {column}: "
        elif path:
            loc = f"{path}: "
        super().__init__(loc + message)


class UnknownLevelError(LabError, KeyError):
    def __init__(self, t, available):
        self.t = t
        self.available = tuple(available)
        super().__init__(f"no cone level at t = {t}; available: {list(self.available)}")

    def __str__(self):
        return self.args[0]
