"""Exception types shared across the package.

``ShapeError`` covers every rejected input (bad dims, bad labels, bad
vocab tokens); it subclasses ``ValueError`` so callers may catch either.
``NumericError`` marks non-finite values detected mid-computation and is
kept distinct so the CLI can map it to its own exit code.
"""


class ShapeError(ValueError):
    """An input was rejected before computation (shape, range, format)."""


class NumericError(ArithmeticError):
    """A NaN or Inf surfaced where the contract requires finite values."""
