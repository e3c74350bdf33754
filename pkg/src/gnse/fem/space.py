"""Degree-of-freedom maps for the MINI and Taylor--Hood pairs.

Velocity unknowns are stored component-blocked: global index ``c * n_scalar + i``
for component ``c`` and scalar node ``i``.  Scalar nodes are numbered vertices
first, then edges (Taylor--Hood) or triangles (MINI bubbles).  Pressure nodes are
the mesh vertices.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigurationError, MeshError
from .elements import mini_basis, p1_basis, p2_basis
from .quadrature import quadrature_rule

__all__ = [
    "ElementPair",
    "MixedSpace",
    "ElementQuadrature",
    "DiscreteFunction",
    "build_space",
    "locate_points",
]


class ElementPair(enum.Enum):
    MINI = "mini"
    TAYLOR_HOOD = "th"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "").replace("_", "")
        aliases = {"mini": cls.MINI, "th": cls.TAYLOR_HOOD, "taylorhood": cls.TAYLOR_HOOD}
        try:
            return aliases[key]
        except KeyError:
            raise ConfigurationError(f"unknown element pair {name!r}") from None

    @property
    def velocity_basis(self):
        return mini_basis if self is ElementPair.MINI else p2_basis

    @property
    def n_local(self):
        return 4 if self is ElementPair.MINI else 6

    @property
    def velocity_degree(self):
        return 3 if self is ElementPair.MINI else 2


class ElementQuadrature:
    """Basis data of a :class:`MixedSpace` at the points of one quadrature rule.

    Attributes
    ----------
    X : (T, nq, 2) physical points
    W : (T, nq) weights including the element area
    phi : (nq, nloc) velocity shape values
    G : (T, nq, nloc, 2) physical gradients of the velocity shape functions
    psi : (nq, 3) pressure (P1) shape values
    Gp : (T, 3, 2) pressure shape gradients (constant per element)
    """

    def __init__(self, space, degree):
        mesh = space.mesh
        rule = quadrature_rule(degree)
        self.rule = rule
        self.space = space
        self.X = np.einsum("qk,tkd->tqd", rule.points, mesh.corners)
        self.W = mesh.areas[:, None] * rule.weights[None, :]
        self.phi, dphi = space.pair.velocity_basis(rule.points)
        self.G = np.einsum("qlk,tkd->tqld", dphi, mesh.barycentric_gradients)
        self.psi = rule.points.copy()
        self.Gp = mesh.barycentric_gradients

    def velocity(self, coefficients):
        """Values ``(T, nq, 2)`` and gradients ``(T, nq, 2, 2)`` (``[c, d] = d_d u_c``)."""
        U = self.space.local_velocity(coefficients)
        return (np.einsum("ql,tlc->tqc", self.phi, U),
                np.einsum("tqld,tlc->tqcd", self.G, U))

    def pressure(self, coefficients):
        """Values ``(T, nq)`` and gradients ``(T, 2)``."""
        Q = np.asarray(coefficients)[self.space.mesh.triangles]
        return Q @ self.psi.T, np.einsum("tkd,tk->td", self.Gp, Q)

    def integrate(self, values):
        """Integral over the domain of values given at ``(T, nq, ...)``."""
        return np.einsum("tq,tq...->...", self.W, values)


@dataclass(eq=False)
class MixedSpace:
    mesh: object
    pair: ElementPair
    n_scalar: int
    cell_dofs: np.ndarray
    node_coords: np.ndarray
    boundary_scalar_dofs: np.ndarray
    _quad_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_velocity_dofs(self):
        return 2 * self.n_scalar

    @property
    def n_pressure_dofs(self):
        return self.mesh.n_vertices

    @property
    def boundary_velocity_dofs(self):
        b = self.boundary_scalar_dofs
        return np.concatenate([b, b + self.n_scalar])

    @property
    def velocity_cell_dofs(self):
        """(T, nloc, 2) global velocity indices."""
        return np.stack([self.cell_dofs, self.cell_dofs + self.n_scalar], axis=2)

    def local_velocity(self, coefficients):
        U = np.asarray(coefficients, dtype=float).reshape(2, self.n_scalar).T
        return U[self.cell_dofs]

    def quad(self, degree):
        """Cached :class:`ElementQuadrature` for the given exactness degree."""
        if degree not in self._quad_cache:
            self._quad_cache[degree] = ElementQuadrature(self, degree)
        return self._quad_cache[degree]


def build_space(mesh, pair):
    """Velocity/pressure DOF maps for ``pair`` on ``mesh``."""
    pair = ElementPair.parse(pair)
    V = mesh.n_vertices
    if pair is ElementPair.MINI:
        n_extra = mesh.n_triangles
        extra = V + np.arange(mesh.n_triangles)[:, None]
        extra_coords = mesh.corners.mean(axis=1)
        boundary = np.flatnonzero(mesh.boundary_vertex_flags)
    else:
        n_extra = mesh.n_edges
        extra = V + mesh.triangle_edges
        extra_coords = mesh.vertices[mesh.edges].mean(axis=1)
        boundary = np.concatenate([np.flatnonzero(mesh.boundary_vertex_flags),
                                   V + mesh.boundary_edges])
    cell_dofs = np.hstack([mesh.triangles, extra])
    node_coords = np.vstack([mesh.vertices, extra_coords])
    return MixedSpace(mesh=mesh, pair=pair, n_scalar=V + n_extra, cell_dofs=cell_dofs,
                      node_coords=node_coords, boundary_scalar_dofs=boundary)


def locate_points(mesh, points, tol=1e-12):
    """Containing triangle index and barycentric coordinates for each point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    G = mesh.barycentric_gradients  # (T, 3, 2)
    P0 = mesh.corners[:, 0]  # (T, 2)
    lam = np.einsum("tkd,ptd->ptk", G, points[:, None, :] - P0[None, :, :])
    lam[..., 0] += 1.0
    inside = np.all(lam >= -tol, axis=2)
    if not np.all(inside.any(axis=1)):
        raise MeshError("point outside the triangulation")
    tri = inside.argmax(axis=1)
    return tri, lam[np.arange(len(points)), tri]


@dataclass(eq=False)
class DiscreteFunction:
    """Coefficient vector of a velocity-like or pressure-like finite element function."""

    space: MixedSpace
    role: str
    coefficients: np.ndarray

    def __post_init__(self):
        if self.role not in ("velocity", "pressure"):
            raise ConfigurationError(f"role must be 'velocity' or 'pressure', got {self.role!r}")
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        n = (self.space.n_velocity_dofs if self.role == "velocity"
             else self.space.n_pressure_dofs)
        if self.coefficients.shape != (n,):
            raise ConfigurationError(
                f"{self.role} coefficient vector must have length {n}, "
                f"got shape {self.coefficients.shape}")

    def at_quadrature(self, degree):
        q = self.space.quad(degree)
        if self.role == "velocity":
            return q.velocity(self.coefficients)
        return q.pressure(self.coefficients)

    def evaluate(self, points):
        """Point values: ``(P, 2)`` for velocities, ``(P,)`` for pressures."""
        mesh = self.space.mesh
        tri, lam = locate_points(mesh, points)
        if self.role == "velocity":
            vals, _ = self.space.pair.velocity_basis(lam)
            U = self.space.local_velocity(self.coefficients)[tri]  # (P, nloc, 2)
            return np.einsum("pl,plc->pc", vals, U)
        Q = self.coefficients[mesh.triangles[tri]]
        return np.einsum("pk,pk->p", lam, Q)
