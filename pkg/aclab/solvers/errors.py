"""Error types raised by the solver chains and the CLI layer."""

from __future__ import annotations

from typing import Any, Optional, Tuple


class LabError(Exception):
    """Base class for every computation failure (CLI exit code 1)."""


class ConfigError(LabError):
    """Invalid configuration or flag value (CLI exit code 2)."""


class NoZeroCrossing(LabError):
    """The shooting solution stays positive on (0, pi/2]."""


class NonConvergent(LabError):
    """Step halving could not certify the requested tolerance."""


class QuadratureFailure(LabError):
    """Two quadrature levels disagree beyond the requested tolerance."""


class IndefiniteAssembly(LabError):
    """Weight or Robin datum inconsistent with a well-posed eigenproblem."""


class NotConverged(LabError):
    """Mesh extrapolation error above tolerance at the largest n."""


class ZeroDenominator(LabError):
    """Test function vanishes identically on the section."""


class ComplexRoots(LabError):
    """lambda exceeds (d-2)^2/4, the gamma equation has no real roots."""


class NoMatch(LabError):
    """No symmetry split reproduces the tabulated eigenvalue."""


class SweepLimitExceeded(LabError):
    """Relaxation hit the sweep cap; ``field`` holds the best iterate."""

    def __init__(self, message: str, field: Any = None):
        super().__init__(message)
        self.field = field


class EmptyBoundary(LabError):
    """Field has no free boundary (u > 0 everywhere or u == 0)."""


class RadiusOutOfDomain(LabError):
    """A requested ball leaves the computational domain."""


class TooCoarse(LabError):
    """Smallest reliable radius exceeds the distance to the domain boundary."""


class OrderingViolation(LabError):
    """Two fields of a family are not ordered, or their free boundaries touch."""

    def __init__(
        self,
        message: str,
        pair: Optional[Tuple[float, float]] = None,
        node: Optional[Tuple[int, int]] = None,
    ):
        super().__init__(message)
        self.pair = pair
        self.node = node


class WeissNotMonotone(LabError):
    """The Weiss series of a family member drops by more than its slack."""

    def __init__(self, message: str, t: Optional[float] = None, series: Any = None):
        super().__init__(message)
        self.t = t
        self.series = series


class InsufficientPairs(LabError):
    """Fewer than four usable pairs for a log-log fit."""


class EmptyAnnulus(LabError):
    """No node on the annulus passes the regularity-scale filter."""


class MissingKey(LabError):
    """A golden key is absent from the produced file."""


class SchemaMismatch(LabError):
    """Golden or produced file does not follow the record schema."""


class GoldenMismatch(LabError):
    """Produced values deviate from golden records beyond their tolerances."""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


__all__ = [
    "LabError",
    "ConfigError",
    "NoZeroCrossing",
    "NonConvergent",
    "QuadratureFailure",
    "IndefiniteAssembly",
    "NotConverged",
    "ZeroDenominator",
    "ComplexRoots",
    "NoMatch",
    "SweepLimitExceeded",
    "EmptyBoundary",
    "RadiusOutOfDomain",
    "TooCoarse",
    "OrderingViolation",
    "WeissNotMonotone",
    "InsufficientPairs",
    "EmptyAnnulus",
    "MissingKey",
    "SchemaMismatch",
    "GoldenMismatch",
]
