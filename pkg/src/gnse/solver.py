"""Newton solver for the discrete generalized Navier--Stokes saddle-point problem.

Unknowns are stacked as ``x = [v_h, q_h, mu]``: velocity coefficients in the
component-blocked ordering of :class:`~gnse.fem.MixedSpace`, pressure vertex
values and a scalar Lagrange multiplier enforcing ``(q_h, 1) = 0``.

Momentum rows (free velocity DOFs)::

    (S(Dv_h), Dz) + b(v_h, v_h, z) - (q_h, div z) - (f, z)

continuity rows ``(div v_h - g1, eta) + mu (eta, 1)`` and the mean row
``(q_h, 1)``.  Dirichlet rows hold zeros in the residual and identity rows in
the Jacobian, so Newton never moves boundary values once they are set.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import structural_rank

from .constitutive import S_of, StressParams, stress_tangent
from .exceptions import ConfigurationError, LinearSolverError, NonConvergenceError
from .fem.interpolation import scott_zhang
from .fem.matrices import divergence_local, local_to_sparse
from .fem.space import DiscreteFunction, ElementPair, MixedSpace

__all__ = [
    "ProblemData",
    "DiscreteState",
    "NewtonConfig",
    "SolveReport",
    "weak_rhs_action",
    "temam_b",
    "assemble_residual",
    "assemble_jacobian",
    "linear_solve",
    "newton_solve",
    "apply_dirichlet",
    "initial_state",
]

log = logging.getLogger(__name__)

DEFAULT_DEGREE = 8


def weak_rhs_action(stress, v, grad_v, q):
    """Element contributions of ``(f, z)`` built from exact fields.

    Returns a callable mapping an :class:`~gnse.fem.ElementQuadrature` to an
    array ``(T, nloc, 2)`` holding ``(S(Dv), Dz) - (v (x) v, grad z) - (q, div z)``
    for every local velocity basis function ``z``.  ``v``, ``grad_v`` and ``q``
    map points ``(..., 2)`` to ``(..., 2)``, ``(..., 2, 2)`` and ``(...)``.
    """

    def action(quad):
        X = quad.X
        vv = np.asarray(v(X), dtype=float)
        S = S_of(stress, np.asarray(grad_v(X), dtype=float))
        qq = np.asarray(q(X), dtype=float)
        flux = S - np.einsum("tqc,tqd->tqcd", vv, vv) - qq[..., None, None] * np.eye(2)
        return np.einsum("tq,tqcd,tqld->tlc", quad.W, flux, quad.G)

    return action


@dataclass(eq=False)
class ProblemData:
    """Data of one discrete problem.

    Parameters
    ----------
    stress : StressParams
    space : MixedSpace
    g1 : callable
        Divergence data, points ``(..., 2)`` to values ``(...)``.
    g2 : callable
        Boundary velocity, points ``(..., 2)`` to values ``(..., 2)``.
    rhs_action : callable, optional
        ``quad -> (T, nloc, 2)`` element contributions of ``(f, z)``; zero if omitted.
    degree : int
        Quadrature degree for the nonlinear terms.
    """

    stress: StressParams
    space: MixedSpace
    g1: Callable
    g2: Callable
    rhs_action: Optional[Callable] = None
    degree: int = DEFAULT_DEGREE
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def quad(self):
        return self.space.quad(self.degree)

    @property
    def n_unknowns(self):
        return self.space.n_velocity_dofs + self.space.n_pressure_dofs + 1

    def _cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def g1_at_quad(self):
        return self._cached("g1", lambda: _field_values(self.g1, self.quad.X))

    @property
    def rhs_local(self):
        def build():
            if self.rhs_action is None:
                return np.zeros(self.space.velocity_cell_dofs.shape)
            return self.rhs_action(self.quad)
        return self._cached("rhs", build)

    @property
    def pressure_coupling(self):
        """``(T, 3, nloc, 2)`` local blocks of ``(div z, eta)``."""
        return self._cached("B", lambda: divergence_local(self.quad))

    @property
    def pressure_integrals(self):
        """``(eta_k, 1)`` for every pressure basis function."""
        def build():
            q = self.quad
            loc = np.einsum("tq,qk->tk", q.W, q.psi)
            return np.bincount(self.space.mesh.triangles.ravel(), weights=loc.ravel(),
                               minlength=self.space.n_pressure_dofs)
        return self._cached("mean", build)


def _field_values(f, X):
    if np.isscalar(f):
        return np.full(X.shape[:-1], float(f))
    return np.broadcast_to(np.asarray(f(X), dtype=float), X.shape[:-1])


@dataclass(eq=False)
class DiscreteState:
    """Coefficient vectors ``(v_h, q_h)`` and the mean multiplier ``mu``."""

    space: MixedSpace
    velocity: np.ndarray
    pressure: np.ndarray
    mu: float = 0.0

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.pressure = np.asarray(self.pressure, dtype=float)
        if self.velocity.shape != (self.space.n_velocity_dofs,):
            raise ConfigurationError("velocity vector length does not match the space")
        if self.pressure.shape != (self.space.n_pressure_dofs,):
            raise ConfigurationError("pressure vector length does not match the space")
        self.mu = float(self.mu)

    @classmethod
    def zeros(cls, space):
        return cls(space, np.zeros(space.n_velocity_dofs), np.zeros(space.n_pressure_dofs))

    @classmethod
    def from_vector(cls, space, x):
        nv, npr = space.n_velocity_dofs, space.n_pressure_dofs
        return cls(space, x[:nv].copy(), x[nv:nv + npr].copy(), float(x[nv + npr]))

    def to_vector(self):
        return np.concatenate([self.velocity, self.pressure, [self.mu]])

    @property
    def velocity_function(self):
        return DiscreteFunction(self.space, "velocity", self.velocity)

    @property
    def pressure_function(self):
        return DiscreteFunction(self.space, "pressure", self.pressure)


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-10
    max_iter: int = 30
    damping: float = 1.0

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ConfigurationError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigurationError("damping must lie in (0, 1]")


@dataclass
class SolveReport:
    iterations: int
    history: list
    converged: bool
    diagnostics: dict = field(default_factory=dict)


def _check_same_space(*functions):
    space = functions[0].space
    if any(f.space is not space for f in functions[1:]):
        raise ConfigurationError("all functions must live on the same space")
    return space


def temam_b(space, u, v, w, g1, degree=DEFAULT_DEGREE):
    """``b(u, v, w) = 1/2 (w (x) u, grad v + g1 I) - 1/2 (v (x) u, grad w)``.

    ``(w (x) u) : grad v = w . (grad v) u``; ``g1`` is a callable or a constant.
    """
    if _check_same_space(u, v, w) is not space:
        raise ConfigurationError("functions do not belong to the given space")
    q = space.quad(degree)
    uu, _ = q.velocity(u.coefficients)
    vv, Gv = q.velocity(v.coefficients)
    ww, Gw = q.velocity(w.coefficients)
    g = _field_values(g1, q.X)
    first = np.einsum("tqc,tqcd,tqd->tq", ww, Gv, uu) + g * np.einsum("tqc,tqc->tq", ww, uu)
    second = np.einsum("tqc,tqcd,tqd->tq", vv, Gw, uu)
    return float(0.5 * q.integrate(first - second))


def _scatter_velocity(space, local):
    """Sum ``(T, nloc, 2)`` element vectors into a global velocity vector."""
    idx = space.velocity_cell_dofs
    return np.bincount(idx.ravel(), weights=local.ravel(), minlength=space.n_velocity_dofs)


def assemble_residual(data, state):
    """Residual vector of length ``n_velocity + n_pressure + 1``."""
    space = data.space
    q = data.quad
    u, Gu = q.velocity(state.velocity)
    qh, _ = q.pressure(state.pressure)
    g1 = data.g1_at_quad
    W, G = q.W, q.G

    S = S_of(data.stress, Gu)
    Gl_u = np.einsum("tqld,tqd->tql", G, u)
    adv = np.einsum("tqcd,tqd->tqc", Gu, u) + g1[..., None] * u
    Rloc = (np.einsum("tq,tqcd,tqld->tlc", W, S - qh[..., None, None] * np.eye(2), G)
            + 0.5 * np.einsum("tq,ql,tqc->tlc", W, q.phi, adv)
            - 0.5 * np.einsum("tq,tqc,tql->tlc", W, u, Gl_u)
            - data.rhs_local)
    Ru = _scatter_velocity(space, Rloc)
    Ru[space.boundary_velocity_dofs] = 0.0

    div = np.trace(Gu, axis1=2, axis2=3) - g1
    Rq_loc = np.einsum("tq,qk,tq->tk", W, q.psi, div)
    Rq = np.bincount(space.mesh.triangles.ravel(), weights=Rq_loc.ravel(),
                     minlength=space.n_pressure_dofs)
    mean = data.pressure_integrals
    Rq += state.mu * mean
    return np.concatenate([Ru, Rq, [mean @ state.pressure]])


def assemble_jacobian(data, state):
    """Exact Newton matrix (CSR) of :func:`assemble_residual`."""
    space = data.space
    q = data.quad
    mesh = space.mesh
    T = mesh.n_triangles
    nv, npr = space.n_velocity_dofs, space.n_pressure_dofs
    N = nv + npr + 1
    u, Gu = q.velocity(state.velocity)
    g1 = data.g1_at_quad
    W, G, phi = q.W, q.G, q.phi
    nloc = phi.shape[1]
    eye = np.eye(2)

    C = stress_tangent(data.stress, Gu)
    GC = np.einsum("tqlb,tqcbed->tqlced", G, C)
    K = np.einsum("tq,tqlced,tqmd->tlcme", W, GC, G)

    Gl_u = np.einsum("tqld,tqd->tql", G, u)
    # derivative of b(u, u, z) in the direction of the trial function (m, e)
    Wphi = W[..., None] * phi  # (T, q, nloc)
    sym_part = np.einsum("tql,tqm->tlm", Wphi, Gl_u) - np.einsum("tql,tqm->tlm", Gl_u, Wphi)
    sym_part += np.einsum("tql,tq,qm->tlm", Wphi, g1, phi)
    K += 0.5 * np.einsum("tlm,ce->tlcme", sym_part, eye)
    K += 0.5 * np.einsum("tql,tqce,qm->tlcme", Wphi, Gu, phi)
    K -= 0.5 * np.einsum("tq,tqc,tqle,qm->tlcme", W, u, G, phi)

    vdofs = space.velocity_cell_dofs.reshape(T, 2 * nloc)
    Juu = local_to_sparse(K.reshape(T, 2 * nloc, 2 * nloc), vdofs, vdofs, (N, N))

    Bloc = data.pressure_coupling.reshape(T, 3, 2 * nloc)
    pdofs = nv + mesh.triangles
    Jqu = local_to_sparse(Bloc, pdofs, vdofs, (N, N))
    Juq = -Jqu.T  # transposing the assembled block keeps the coupling exactly skew

    mean = data.pressure_integrals
    rows = np.arange(nv, nv + npr)
    Jmean = sp.coo_matrix((np.concatenate([mean, mean]),
                           (np.concatenate([rows, np.full(npr, N - 1)]),
                            np.concatenate([np.full(npr, N - 1), rows]))), shape=(N, N))
    J = (Juu + Jqu + Juq + Jmean.tocsr()).tocsr()

    keep = np.ones(N)
    keep[space.boundary_velocity_dofs] = 0.0
    J = sp.diags(keep) @ J + sp.diags(1.0 - keep)
    return J.tocsr()


def linear_solve(matrix, rhs, tol=1e-11, refine_steps=3):
    """Sparse LU solve with pivoting and iterative refinement.

    Raises
    ------
    LinearSolverError
        If the matrix is not square, is singular, or the relative residual
        ``||Ax - b||_inf / ||b||_inf`` stays above ``tol``.
    """
    A = sp.csc_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    n, m = A.shape
    if n != m or b.shape != (n,):
        raise LinearSolverError("matrix must be square and match the right-hand side",
                                {"shape": A.shape, "rhs_shape": b.shape})
    bnorm = np.abs(b).max() if n else 0.0
    if bnorm == 0.0:
        return np.zeros(n)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise LinearSolverError(f"factorization failed: {exc}",
                                {"shape": A.shape, "nnz": A.nnz,
                                 "structural_rank": int(structural_rank(A))}) from exc
    x = lu.solve(b)
    rel = np.inf
    for _ in range(refine_steps + 1):
        r = b - A @ x
        rel = np.abs(r).max() / bnorm
        if not np.isfinite(rel):
            break
        if rel <= tol:
            return x
        x = x + lu.solve(r)
    raise LinearSolverError(f"linear residual {rel:.3e} exceeds tolerance {tol:.1e}",
                            {"shape": A.shape, "nnz": A.nnz, "relative_residual": rel})


def apply_dirichlet(data, state):
    """Copy of ``state`` whose boundary velocity values are the Scott--Zhang trace of ``g2``."""
    space = data.space
    order = 1 if space.pair is ElementPair.MINI else 2
    if "g2_trace" not in data._cache:
        data._cache["g2_trace"] = scott_zhang(space, order, data.g2).coefficients
    velocity = state.velocity.copy()
    bdofs = space.boundary_velocity_dofs
    velocity[bdofs] = data._cache["g2_trace"][bdofs]
    return replace(state, velocity=velocity)


def initial_state(data):
    """Dirichlet lift with zero interior velocity, zero pressure and zero multiplier."""
    return apply_dirichlet(data, DiscreteState.zeros(data.space))


def newton_solve(data, init, cfg=None, p=None, level=None):
    """Full-step (or damped) Newton iteration from ``init``.

    Returns ``(state, report)``.  Raises :class:`NonConvergenceError` carrying the
    residual history when ``cfg.max_iter`` steps do not meet either tolerance.
    """
    cfg = cfg or NewtonConfig()
    space = data.space
    x = init.to_vector()
    R = assemble_residual(data, init)
    history = [float(np.linalg.norm(R))]
    r0 = history[0]

    def done(r):
        return r <= cfg.abs_tol or r <= cfg.rel_tol * r0

    if done(r0):
        return init, SolveReport(0, history, True)
    for it in range(1, cfg.max_iter + 1):
        state = DiscreteState.from_vector(space, x)
        J = assemble_jacobian(data, state)
        try:
            dx = linear_solve(J, R)
        except LinearSolverError as exc:
            raise NonConvergenceError(f"linear solve failed in Newton step {it}: {exc}",
                                      history, p=p, level=level) from exc
        x = x - cfg.damping * dx
        state = DiscreteState.from_vector(space, x)
        R = assemble_residual(data, state)
        history.append(float(np.linalg.norm(R)))
        log.debug("newton step %d: |R| = %.3e", it, history[-1])
        if not np.isfinite(history[-1]):
            break
        if done(history[-1]):
            return state, SolveReport(it, history, True)
    raise NonConvergenceError(
        f"Newton did not converge in {cfg.max_iter} steps (|R| = {history[-1]:.3e})",
        history, p=p, level=level)
