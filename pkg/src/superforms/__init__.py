"""Numerical superform calculus on R^n and geometric verification suites."""

from .algebra import (
    IndexPair,
    PointSuperform,
    beta,
    berezin_top,
    contract,
    cup,
    dx,
    dxi,
    is_positive_11,
    is_weakly_positive,
    j_map,
    one,
    one_form,
    pullback_linear,
    trace_restricted,
    volume_constant,
    wedge,
    wedge_power,
)
from .expr import Expr, ExpressionError, parse_expression
from .fields import FormField, exterior_d, sharp_d, superintegrate
from .manifold import FrameError, Submanifold, UnionManifold, supercurrent_pair
from .minimal import CoverageError
from .shapes import from_spec
from .tropical import QuasitropicalPolynomial
from .tube import FocalRadiusError
from .flow import FlowHaltError

__version__ = "0.1.0"

__all__ = [
    "IndexPair",
    "PointSuperform",
    "beta",
    "berezin_top",
    "contract",
    "cup",
    "dx",
    "dxi",
    "is_positive_11",
    "is_weakly_positive",
    "j_map",
    "one",
    "one_form",
    "pullback_linear",
    "trace_restricted",
    "volume_constant",
    "wedge",
    "wedge_power",
    "Expr",
    "ExpressionError",
    "parse_expression",
    "FormField",
    "exterior_d",
    "sharp_d",
    "superintegrate",
    "FrameError",
    "Submanifold",
    "UnionManifold",
    "supercurrent_pair",
    "CoverageError",
    "from_spec",
    "QuasitropicalPolynomial",
    "FocalRadiusError",
    "FlowHaltError",
]
