"""Exceptions shared across the package.

The command line tool maps these onto exit codes: configuration problems
exit with 2, data problems with 3, numerical failures with 4.
"""


class GqrError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(GqrError):
    """Invalid configuration file, unknown keys, or bad argument values."""


class DataError(GqrError):
    """Input data that cannot be used: missing columns, non-numeric cells,
    too few rows, mismatched shapes."""


class NumericalError(GqrError):
    """Estimation failed for numerical reasons."""


class EmptyNeighborhoodError(NumericalError):
    """No observation carries positive kernel weight at an evaluation point."""

    def __init__(self, x, h):
        self.x = tuple(float(v) for v in x)
        self.h = tuple(float(v) for v in h)
        super().__init__(
            "no observations with positive kernel weight at x=%s for bandwidth h=%s; "
            "enlarge the bandwidth or shrink the evaluation grid" % (self.x, self.h)
        )


class DegenerateDensityError(NumericalError):
    """A density estimate collapsed to (near) zero where a positive value is required."""


class ScalingDegeneracyError(NumericalError):
    """A variance or scaling factor became non-positive."""
