"""Finite-dimensional matrix models, dilations and norm certificates for MF-algebra constructions."""

__version__ = "0.1.0"

from .matcore import MatTuple, op_norm, haar_unitary
from .ncpoly import NCPoly, parse, format_poly, evaluate

__all__ = ["MatTuple", "NCPoly", "evaluate", "format_poly", "haar_unitary", "op_norm", "parse",
           "__version__"]
