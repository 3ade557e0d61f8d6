"""Exception types raised by the scorecard engine."""


class ScorecardError(Exception):
    """Base class for all engine errors."""


class SpecError(ScorecardError):
    """Invalid layout, engineering spec or run configuration."""


class DataFormatError(ScorecardError):
    """Malformed input data file."""


class DegenerateClassError(ScorecardError):
    """A class has too few (effective) rows to estimate a covariance."""


class ZeroVarianceError(ScorecardError):
    """Score variance S'CS is (numerically) zero."""


class WoeSignError(ScorecardError):
    """Weight-of-evidence rescaling would flip or annihilate the score."""


class InfeasibleError(ScorecardError):
    """The constraint system admits no solution."""


class NoRootError(ScorecardError):
    """The multiplier line search found no sign change / root."""


class RankError(ScorecardError):
    """Normal equations are singular and nothing regularizes them."""


class SolverError(ScorecardError):
    """The QP solver stopped without reaching optimality."""
