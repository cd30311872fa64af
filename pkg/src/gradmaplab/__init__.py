"""Numerical laboratory for gradient maps of compatible group actions on
complex Grassmannians: momentum/gradient maps, maximal weights, negative
gradient flows, semistability tests, stratification censuses and
Weyl-chamber convexity audits.
"""

__version__ = "0.1.0"

from .errors import (
    GradmapError,
    InvalidInputError,
    InvalidFrameError,
    NumericalError,
    ScaleCapError,
    SchemaError,
)

__all__ = [
    "GradmapError",
    "InvalidInputError",
    "InvalidFrameError",
    "NumericalError",
    "ScaleCapError",
    "SchemaError",
    "__version__",
]
