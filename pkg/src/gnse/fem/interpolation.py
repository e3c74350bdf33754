"""Quasi-interpolation, projection and prolongation operators."""
import numpy as np

from ..exceptions import ConfigurationError, MeshError
from .elements import BUBBLE_MEAN, p1_basis, p2_basis
from .quadrature import gauss_legendre, quadrature_rule
from .space import DiscreteFunction, ElementPair

__all__ = ["scott_zhang", "clement_pressure", "mini_fortin", "prolongate",
           "lagrange_p1_to_space"]

DEFAULT_DEGREE = 12


def _line_basis(order, t):
    """Lagrange basis on [0, 1]: end points first, then the midpoint (order 2)."""
    if order == 1:
        return np.stack([1.0 - t, t], axis=1)
    return np.stack([(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)],
                    axis=1)


def _dual_matrix(values, weights):
    """Inverse of the measure-normalised mass matrix of a nodal basis."""
    M = np.einsum("q,qi,qj->ij", weights, values, values)
    return np.linalg.inv(M)


def _evaluate(f, X):
    vals = np.asarray(f(X), dtype=float)
    if vals.shape == X.shape[:-1]:
        vals = vals[..., None]
    return vals


def _scott_zhang_nodes(mesh, order, f, degree):
    """Scott--Zhang nodal values at the order-``order`` Lagrange nodes.

    Returns an array ``(n_nodes, ncomp)`` ordered as vertices, then (order 2) edges.
    Boundary nodes use a boundary edge so that traces only see ``f`` on the boundary.
    """
    V, E, T = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
    n_nodes = V if order == 1 else V + E

    # node -> smallest containing triangle and local index
    tri_nodes = mesh.triangles if order == 1 else np.hstack([mesh.triangles,
                                                             V + mesh.triangle_edges])
    nloc = tri_nodes.shape[1]
    flat = tri_nodes.ravel()
    owner_tri = np.full(n_nodes, T)
    np.minimum.at(owner_tri, flat, np.repeat(np.arange(T), nloc))
    owner_loc = np.full(n_nodes, -1)
    t_idx = np.repeat(np.arange(T), nloc)
    l_idx = np.tile(np.arange(nloc), T)
    sel = owner_tri[flat] == t_idx
    owner_loc[flat[sel]] = l_idx[sel]

    # triangle moments mean_K(f * phi_j)
    rule = quadrature_rule(degree)
    basis = p1_basis if order == 1 else p2_basis
    vals, _ = basis(rule.points)
    X = np.einsum("qk,tkd->tqd", rule.points, mesh.corners)
    fx = _evaluate(f, X)  # (T, nq, ncomp)
    moments = np.einsum("q,ql,tqc->tlc", rule.weights, vals, fx)
    dual = _dual_matrix(vals, rule.weights)
    coeff_tri = np.einsum("ij,tjc->tic", dual, moments)
    out = coeff_tri[owner_tri, owner_loc]

    # boundary nodes: smallest boundary edge containing the node
    be = mesh.boundary_edges
    if len(be):
        ends = mesh.edges[be]  # (Eb, 2)
        edge_nodes = ends if order == 1 else np.hstack([ends, (V + be)[:, None]])
        nle = edge_nodes.shape[1]
        owner_edge = np.full(n_nodes, len(be))
        np.minimum.at(owner_edge, edge_nodes.ravel(), np.repeat(np.arange(len(be)), nle))
        bnodes = np.flatnonzero(owner_edge < len(be))
        e_idx = np.repeat(np.arange(len(be)), nle)
        le_idx = np.tile(np.arange(nle), len(be))
        sel = owner_edge[edge_nodes.ravel()] == e_idx
        owner_edge_loc = np.full(n_nodes, -1)
        owner_edge_loc[edge_nodes.ravel()[sel]] = le_idx[sel]

        t, w = gauss_legendre(max(2, (degree + 2) // 2))
        lv = _line_basis(order, t)
        a = mesh.vertices[ends[:, 0]]
        b = mesh.vertices[ends[:, 1]]
        Xe = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        fe = _evaluate(f, Xe)
        emom = np.einsum("q,ql,eqc->elc", w, lv, fe)
        edual = _dual_matrix(lv, w)
        coeff_edge = np.einsum("ij,ejc->eic", edual, emom)
        out[bnodes] = coeff_edge[owner_edge[bnodes], owner_edge_loc[bnodes]]
    return out


def lagrange_p1_to_space(space, nodal):
    """Embed vertex values ``(V, 2)`` of a P1 field into the velocity space."""
    mesh = space.mesh
    nodal = np.asarray(nodal, dtype=float)
    coeffs = np.zeros((space.n_scalar, 2))
    coeffs[:mesh.n_vertices] = nodal
    if space.pair is ElementPair.TAYLOR_HOOD:
        coeffs[mesh.n_vertices:] = nodal[mesh.edges].mean(axis=1)
    return coeffs.T.ravel()


def scott_zhang(space, order, f, degree=DEFAULT_DEGREE):
    """Scott--Zhang quasi-interpolant of the vector field ``f`` into the velocity space.

    ``f`` maps points of shape ``(..., 2)`` to values of shape ``(..., 2)``.  For
    ``order=1`` the result is continuous piecewise linear (no bubble part on MINI;
    embedded exactly on Taylor--Hood); ``order=2`` requires Taylor--Hood.
    """
    if order not in (1, 2):
        raise ConfigurationError(f"Scott-Zhang order must be 1 or 2, got {order!r}")
    if order == 2 and space.pair is not ElementPair.TAYLOR_HOOD:
        raise ConfigurationError("second-order Scott-Zhang needs the Taylor-Hood space")
    nodal = _scott_zhang_nodes(space.mesh, order, f, degree)
    if nodal.shape[1] != 2:
        raise ConfigurationError("scott_zhang expects a vector field with two components")
    if order == 1:
        coeffs = lagrange_p1_to_space(space, nodal)
    else:
        coeffs = nodal.T.ravel()
    return DiscreteFunction(space, "velocity", coeffs)


def clement_pressure(space, f, degree=DEFAULT_DEGREE):
    """Patch-average projection onto the continuous P1 pressure space.

    ``f`` is either a callable on points ``(..., 2)`` or an array of per-triangle
    constants of shape ``(T,)``.
    """
    mesh = space.mesh
    if callable(f):
        rule = quadrature_rule(degree)
        X = np.einsum("qk,tkd->tqd", rule.points, mesh.corners)
        cell_integrals = mesh.areas * (np.asarray(f(X), dtype=float) @ rule.weights)
    else:
        f = np.asarray(f, dtype=float)
        if f.shape != (mesh.n_triangles,):
            raise ConfigurationError("piecewise-constant data must have one value per triangle")
        cell_integrals = mesh.areas * f
    num = np.bincount(mesh.triangles.ravel(), weights=np.repeat(cell_integrals, 3),
                      minlength=mesh.n_vertices)
    return DiscreteFunction(space, "pressure", num / mesh.vertex_patch_area)


def mini_fortin(space, z, degree=DEFAULT_DEGREE):
    """Fortin operator of the MINI element.

    ``w = SZ1(z) + sum_K <z - SZ1(z)>_K / <b_K>_K * b_K`` componentwise, so that
    ``<z - w>_K = 0`` on every triangle and hence ``(div(z - w), eta_h) = 0`` for
    every continuous piecewise linear ``eta_h`` whenever ``z`` vanishes on the boundary.
    """
    if space.pair is not ElementPair.MINI:
        raise ConfigurationError("mini_fortin needs the MINI space")
    mesh = space.mesh
    sz = scott_zhang(space, 1, z, degree)
    coeffs = sz.coefficients.reshape(2, space.n_scalar).copy()
    rule = quadrature_rule(degree)
    X = np.einsum("qk,tkd->tqd", rule.points, mesh.corners)
    z_mean = np.einsum("q,tqc->tc", rule.weights, _evaluate(z, X))
    sz_mean = coeffs[:, mesh.triangles].mean(axis=2).T  # P1 mean = vertex average
    coeffs[:, mesh.n_vertices:] = ((z_mean - sz_mean) / BUBBLE_MEAN).T
    return DiscreteFunction(space, "velocity", coeffs.ravel())


def prolongate(coarse, fine_space):
    """Evaluate a coarse finite element function at the nodes of the refined space."""
    cspace = coarse.space
    fmesh = fine_space.mesh
    if fmesh.parent is not cspace.mesh or fmesh.parent_triangles is None:
        raise MeshError("fine mesh is not the red refinement of the coarse mesh")
    if fine_space.pair is not cspace.pair:
        raise ConfigurationError("prolongation requires identical element pairs")
    cmesh = cspace.mesh

    if coarse.role == "pressure":
        a, b = fmesh.parent_map.T
        vals = 0.5 * (coarse.coefficients[a] + coarse.coefficients[b])
        return DiscreteFunction(fine_space, "pressure", vals)

    # one owning fine triangle per scalar node, and its coarse parent
    T = fmesh.n_triangles
    nloc = fine_space.cell_dofs.shape[1]
    owner = np.empty(fine_space.n_scalar, dtype=np.int64)
    owner[fine_space.cell_dofs.ravel()] = np.repeat(np.arange(T), nloc)
    parent = fmesh.parent_triangles[owner]
    x = fine_space.node_coords
    lam = np.einsum("nkd,nd->nk", cmesh.barycentric_gradients[parent],
                    x - cmesh.corners[parent, 0])
    lam[:, 0] += 1.0
    vals, _ = cspace.pair.velocity_basis(lam)
    U = cspace.local_velocity(coarse.coefficients)[parent]  # (n, nloc, 2)
    nodal = np.einsum("nl,nlc->nc", vals, U)

    if fine_space.pair is ElementPair.MINI:
        # bubble coefficient: coarse value at the barycentre minus the fine P1 part there
        V = fmesh.n_vertices
        p1_at_bary = nodal[fmesh.triangles].mean(axis=1)
        nodal[V:] = nodal[V:] - p1_at_bary
    return DiscreteFunction(fine_space, "velocity", nodal.T.ravel())
