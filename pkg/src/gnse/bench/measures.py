"""Error quantities, modulars, EOCs and data-compatibility checks."""
from dataclasses import dataclass
import math

import numpy as np

from ..constitutive import F_of, frobenius, phi_shifted_conjugate, sym
from ..fem.quadrature import gauss_legendre, integrate_with_corner
from ..mesh import refine_to
from .manufactured import exact_fields

__all__ = [
    "ErrorNorms",
    "error_norms",
    "stability_quantity",
    "eoc",
    "dual_modular_diagnostic",
    "compatibility_defect",
]

ERROR_DEGREE = 12


@dataclass(frozen=True)
class ErrorNorms:
    e_v: float
    e_q_s: float
    e_q_ell: float
    e_q_p: float


def _lebesgue(quad, values, a):
    """``(int |values|^a)^(1/a)`` for scalar values at quadrature points."""
    return float(quad.integrate(np.abs(values) ** a) ** (1.0 / a))


def error_norms(state, case, exps=None, degree=ERROR_DEGREE, fields=None):
    """``e_v = ||F(Dv_h) - F(Dv)||_2`` and ``e_q_a = ||q_h - q||_{a'}`` for ``a = s, ell, p``.

    ``fields`` overrides the manufactured solution of ``case``; it needs
    ``F_of_Dv(X)`` and ``q(X)`` evaluators.
    """
    exps = exps or case.exponents
    fields = fields or exact_fields(case)
    quad = state.space.quad(degree)
    _, Gu = quad.velocity(state.velocity)
    qh, _ = quad.pressure(state.pressure)
    dF = F_of(case.stress, Gu) - fields.F_of_Dv(quad.X)
    e_v = math.sqrt(quad.integrate(np.einsum("tqij,tqij->tq", dF, dF)))
    dq = qh - fields.q(quad.X)
    return ErrorNorms(e_v=e_v,
                      e_q_s=_lebesgue(quad, dq, exps.s_conj),
                      e_q_ell=_lebesgue(quad, dq, exps.ell_conj),
                      e_q_p=_lebesgue(quad, dq, exps.p_conj))


def stability_quantity(state, case, degree=ERROR_DEGREE):
    """``||v_h||_{1,p} + ||q_h||_{s'}`` with ``||v||_{1,p} = (||v||_p^p + ||grad v||_p^p)^(1/p)``."""
    p = case.p
    quad = state.space.quad(degree)
    u, Gu = quad.velocity(state.velocity)
    qh, _ = quad.pressure(state.pressure)
    vp = quad.integrate(np.linalg.norm(u, axis=-1) ** p + frobenius(Gu) ** p) ** (1.0 / p)
    return float(vp + _lebesgue(quad, qh, case.exponents.s_conj))


def eoc(errors, hs):
    """Experimental orders ``log(e_i/e_{i-1}) / log(h_i/h_{i-1})``.

    Returns one entry per consecutive pair; ``None`` marks pairs with a
    nonpositive (or non-finite) error, where the order is undefined.
    """
    errors = [float(e) for e in errors]
    hs = [float(h) for h in hs]
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("eoc needs two equally long sequences of length >= 2")
    out = []
    for i in range(1, len(errors)):
        e0, e1 = errors[i - 1], errors[i]
        if not (e0 > 0 and e1 > 0 and math.isfinite(e0) and math.isfinite(e1)):
            out.append(None)
        else:
            out.append(math.log(e1 / e0) / math.log(hs[i] / hs[i - 1]))
    return out


def dual_modular_diagnostic(case, h, state=None, degree=ERROR_DEGREE, mesh=None):
    """``int (phi_{|Dv|})^*(h |grad q|) dx``.

    With ``state`` the discrete fields ``Dv_h`` and ``grad q_h`` are used;
    otherwise the exact ones, integrated on ``mesh`` (default: the state's mesh,
    or a level-4 mesh).
    """
    params = case.stress
    if h == 0:
        return 0.0
    if state is not None:
        quad = state.space.quad(degree)
        _, Gu = quad.velocity(state.velocity)
        _, gq = quad.pressure(state.pressure)
        shift = frobenius(sym(Gu))
        grad_norm = np.broadcast_to(np.linalg.norm(gq, axis=-1)[:, None], shift.shape)
        return float(quad.integrate(phi_shifted_conjugate(params, shift, h * grad_norm)))
    fields = exact_fields(case)
    mesh = mesh or refine_to(4)[-1]

    def density(X):
        shift = frobenius(fields.Dv(X))
        return phi_shifted_conjugate(params, shift, h * np.linalg.norm(fields.grad_q(X), axis=-1))

    # grad q is singular at the origin, hence the graded corner rule
    return integrate_with_corner(mesh, density, degree)


def compatibility_defect(case, mesh, degree=ERROR_DEGREE):
    """``|int g1 dx - int g2 . n ds|`` with corner-graded domain quadrature."""
    fields = exact_fields(case)
    vol = integrate_with_corner(mesh, fields.g1, degree)
    be = mesh.boundary_edges
    a = mesh.vertices[mesh.edges[be, 0]]
    b = mesh.vertices[mesh.edges[be, 1]]
    t, w = gauss_legendre(16)
    X = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    flux_density = np.einsum("eqc,ec->eq", fields.v(X), mesh.boundary_edge_normals)
    flux = float(np.einsum("e,q,eq->", mesh.edge_lengths[be], w, flux_density))
    return abs(vol - flux)
