"""Manufactured solutions and exponent bookkeeping for the convergence studies."""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from ..constitutive import F_of, StressParams
from ..exceptions import ConfigurationError, DomainError
from ..fem.quadrature import integrate_with_corner
from ..mesh import refine_to

__all__ = [
    "BETA",
    "BENCH_DELTA",
    "ExponentSet",
    "exponents",
    "gamma_for_case",
    "ManufacturedCase",
    "ExactFields",
    "exact_fields",
    "pressure_mean_constant",
    "mean_of_power",
]

BETA = 0.01
BENCH_DELTA = 1e-5
MEAN_LEVEL = 6
MEAN_DEGREE = 12


def _conj(a):
    return math.inf if a == 1.0 else (1.0 if math.isinf(a) else a / (a - 1.0))


@dataclass(frozen=True)
class ExponentSet:
    """Integrability exponents attached to ``p`` in two dimensions.

    ``sobolev_p_star`` is ``2p/(2-p)`` for ``p < 2`` and ``inf`` otherwise.
    """

    p: float
    p_conj: float
    s: float
    s_conj: float
    ell: float
    ell_conj: float
    r: float
    sobolev_p_star: float


def exponents(p):
    """Exponent set for ``p`` in ``(1, inf)``: ``s = max{p, (p*/2)'}``, ``ell = max{2, s}``."""
    p = float(p)
    if not p > 1.0 or not math.isfinite(p):
        raise DomainError(f"exponent p must lie in (1, inf), got {p}")
    if p < 2.0:
        p_star = 2.0 * p / (2.0 - p)
        s = max(p, _conj(p_star / 2.0))  # (p*/2)' = p / (2(p-1))
    else:
        p_star = math.inf
        s = p
    ell = max(2.0, s)
    return ExponentSet(p=p, p_conj=_conj(p), s=s, s_conj=_conj(s), ell=ell,
                       ell_conj=_conj(ell), r=min(2.0, p), sobolev_p_star=p_star)


def gamma_for_case(p, case_id, beta=BETA):
    """Pressure exponent: case 1 ``1 - 2/p' + 0.01``, case 2 ``beta (p-2)/2 + 0.01``."""
    if case_id == 1:
        return 1.0 - 2.0 / _conj(float(p)) + 0.01
    if case_id == 2:
        return beta * (float(p) - 2.0) / 2.0 + 0.01
    raise ConfigurationError(f"unknown manufactured case {case_id!r} (expected 1 or 2)")


@lru_cache(maxsize=None)
def _mean_mesh(level):
    return refine_to(level)[-1]


@lru_cache(maxsize=None)
def mean_of_power(gamma, level=MEAN_LEVEL, degree=MEAN_DEGREE):
    """Mean of ``|x|^gamma`` over the unit square by mesh quadrature.

    Triangles at the origin use a geometrically graded rule, so negative
    ``gamma`` is integrated as accurately as positive ones.
    """
    if not gamma > -2.0:
        raise DomainError("|x|^gamma is not integrable on the unit square for gamma <= -2")
    return integrate_with_corner(_mean_mesh(level),
                                 lambda X: np.hypot(X[..., 0], X[..., 1]) ** gamma, degree)


@dataclass(frozen=True)
class ManufacturedCase:
    """Benchmark configuration ``v = |x|^beta x / 10``, ``q = |x|^gamma - c_q``."""

    case_id: int
    p: float
    beta: float = BETA
    delta: float = BENCH_DELTA

    def __post_init__(self):
        gamma_for_case(self.p, self.case_id)  # validates the case id
        exponents(self.p)

    @property
    def gamma(self):
        return gamma_for_case(self.p, self.case_id, self.beta)

    @property
    def nu(self):
        return 0.1 if self.p >= 2.0 else 100.0

    @property
    def stress(self):
        return StressParams(self.p, self.delta, self.nu)

    @property
    def exponents(self):
        return exponents(self.p)

    @property
    def pressure_mean_constant(self):
        return mean_of_power(self.gamma)


def pressure_mean_constant(case):
    """``c_q`` (mean of ``|x|^gamma``) for ``case``; cached per exponent."""
    return case.pressure_mean_constant


def _radius(X, allow_zero):
    r = np.hypot(X[..., 0], X[..., 1])
    if not allow_zero and np.any(r == 0.0):
        raise DomainError("gradient of the manufactured solution is singular at the origin")
    return r


@dataclass(frozen=True)
class ExactFields:
    """Point evaluators of the manufactured solution; all take ``(..., 2)`` arrays."""

    case: ManufacturedCase
    c_q: float

    def v(self, X):
        X = np.asarray(X, dtype=float)
        return 0.1 * _radius(X, True)[..., None] ** self.case.beta * X

    def grad_v(self, X):
        X = np.asarray(X, dtype=float)
        b = self.case.beta
        r = _radius(X, False)[..., None, None]
        outer = np.einsum("...i,...j->...ij", X, X)
        return 0.1 * (r ** b * np.eye(2) + b * r ** (b - 2.0) * outer)

    def Dv(self, X):
        return self.grad_v(X)  # radial field: the gradient is symmetric

    def q(self, X):
        return _radius(np.asarray(X, dtype=float), True) ** self.case.gamma - self.c_q

    def grad_q(self, X):
        X = np.asarray(X, dtype=float)
        r = _radius(X, False)
        return (self.case.gamma * r ** (self.case.gamma - 2.0))[..., None] * X

    def g1(self, X):
        return 0.1 * (2.0 + self.case.beta) * _radius(np.asarray(X, dtype=float), True) ** self.case.beta

    def F_of_Dv(self, X):
        return F_of(self.case.stress, self.grad_v(X))


def exact_fields(case):
    """Evaluators ``v, grad_v, Dv, q, grad_q, g1, F_of_Dv`` for ``case``."""
    return ExactFields(case, case.pressure_mean_constant)
