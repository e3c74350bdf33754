"""Finite element spaces, quadrature and interpolation operators."""
from .elements import BUBBLE_MEAN, mini_basis, p1_basis, p2_basis
from .interpolation import (clement_pressure, lagrange_p1_to_space, mini_fortin, prolongate,
                            scott_zhang)
from .matrices import AuxMatrices, assemble_aux_matrices
from .quadrature import (QuadratureRule, gauss_legendre, graded_corner_rule,
                         integrate_with_corner, monomial_mean, quadrature_rule)
from .space import (DiscreteFunction, ElementPair, ElementQuadrature, MixedSpace, build_space,
                    locate_points)

__all__ = [
    "BUBBLE_MEAN", "mini_basis", "p1_basis", "p2_basis",
    "clement_pressure", "lagrange_p1_to_space", "mini_fortin", "prolongate", "scott_zhang",
    "AuxMatrices", "assemble_aux_matrices",
    "QuadratureRule", "gauss_legendre", "graded_corner_rule", "integrate_with_corner",
    "monomial_mean", "quadrature_rule",
    "DiscreteFunction", "ElementPair", "ElementQuadrature", "MixedSpace", "build_space",
    "locate_points",
]
