"""Exception types shared across the package."""


class GradmapError(Exception):
    """Base class for all package errors."""


class InvalidInputError(GradmapError, ValueError):
    """An argument violates a documented precondition (wrong subspace,
    non-unitary group element, mismatched base points, ...)."""


class InvalidFrameError(InvalidInputError):
    """A raw frame is rank deficient and cannot define a plane."""


class NumericalError(GradmapError, RuntimeError):
    """A numerical kernel failed (eigensolver non-convergence, lost rank
    in a filtration, step-size underflow).  Carries diagnostics text."""


class ScaleCapError(GradmapError, OverflowError):
    """A matrix exponential was requested beyond the safe scale cap.
    For diagonal directions use the filtration limit oracle
    (`flows.weight_filtration_limit`) instead of long-time integration."""


class OrbitDriftWarning(UserWarning):
    """Group tracking certificate exceeded its threshold: the integrated
    trajectory drifted off the group orbit (integration too coarse)."""


class SchemaError(GradmapError, ValueError):
    """An experiment config violates the JSON schema."""
