"""Conforming triangulations of the unit square with uniform red refinement."""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .exceptions import MeshError

__all__ = [
    "TriMesh",
    "MeshStats",
    "unit_square_initial",
    "red_refine",
    "refine_to",
    "mesh_stats",
    "write_text",
    "write_vtk",
]

# local edge k of a triangle is the one opposite local vertex k
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


def _edges_of(triangles):
    """Unique sorted edges (lexicographic numbering) and the triangle-to-edge map."""
    local = triangles[:, LOCAL_EDGES]  # (T, 3, 2)
    all_edges = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(all_edges, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable triangulation.

    Attributes
    ----------
    vertices : (V, 2) float array
    triangles : (T, 3) int array, counterclockwise
    edges : (E, 2) int array, each row sorted, rows in lexicographic order
    triangle_edges : (T, 3) int array, global index of the edge opposite each local vertex
    boundary_vertex_flags, boundary_edge_flags : bool arrays
    level : refinement depth
    parent_map : (V, 2) int array or None
        Fine vertex ``i`` equals coarse vertex ``a`` if ``parent_map[i] == (a, a)``,
        otherwise it is the midpoint of coarse edge ``(a, b)``.
    parent_triangles : (T,) int array or None, coarse triangle containing each child
    parent : coarse :class:`TriMesh` or None
    """

    vertices: np.ndarray
    triangles: np.ndarray
    level: int = 0
    parent_map: Optional[np.ndarray] = None
    parent_triangles: Optional[np.ndarray] = None
    parent: Optional["TriMesh"] = field(default=None, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        edges, tri_edges = _edges_of(t)
        counts = np.bincount(tri_edges.ravel(), minlength=len(edges))
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two triangles")
        bedge = counts == 1
        bvert = np.zeros(len(v), dtype=bool)
        bvert[edges[bedge].ravel()] = True
        for name, arr in (("edges", edges), ("triangle_edges", tri_edges),
                          ("boundary_edge_flags", bedge), ("boundary_vertex_flags", bvert)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def corners(self):
        """(T, 3, 2) vertex coordinates per triangle."""
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self):
        c = self.corners
        e1 = c[:, 1] - c[:, 0]
        e2 = c[:, 2] - c[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def areas(self):
        a = self.signed_areas
        if np.any(a <= 0):
            raise MeshError("degenerate or clockwise triangle (area <= 0)")
        return a

    @cached_property
    def barycentric_gradients(self):
        """(T, 3, 2) constant gradients of the barycentric coordinates."""
        c = self.corners
        jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)  # columns
        inv = np.linalg.inv(jac)  # rows are grad(lambda_1), grad(lambda_2)
        g = np.empty((self.n_triangles, 3, 2))
        g[:, 1:] = inv
        g[:, 0] = -inv[:, 0] - inv[:, 1]
        return g

    @cached_property
    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def boundary_edges(self):
        return np.flatnonzero(self.boundary_edge_flags)

    @cached_property
    def boundary_edge_normals(self):
        """Outward unit normals of the boundary edges (ordered as :attr:`boundary_edges`)."""
        be = self.boundary_edges
        # the owning triangle fixes the orientation
        owner = np.full(self.n_edges, -1)
        local = np.full(self.n_edges, -1)
        t_idx, k_idx = np.nonzero(np.isin(self.triangle_edges, be))
        owner[self.triangle_edges[t_idx, k_idx]] = t_idx
        local[self.triangle_edges[t_idx, k_idx]] = k_idx
        tri = self.triangles[owner[be]]
        k = local[be]
        a = tri[np.arange(len(be)), LOCAL_EDGES[k, 0]]
        b = tri[np.arange(len(be)), LOCAL_EDGES[k, 1]]
        d = self.vertices[b] - self.vertices[a]  # ccw traversal, outward normal on the right
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def vertex_patch_area(self):
        """Area of the union of triangles containing each vertex."""
        return np.bincount(self.triangles.ravel(), weights=np.repeat(self.areas, 3),
                           minlength=self.n_vertices)


@dataclass(frozen=True)
class MeshStats:
    h: float
    h_min: float
    chunkiness: float
    n_vertices: int
    n_edges: int
    n_triangles: int
    n_boundary_vertices: int


def unit_square_initial():
    """(0,1)^2 split along both diagonals into four triangles around the centre."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    triangles = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    return TriMesh(vertices, triangles, level=0)


def red_refine(mesh):
    """Split every triangle into four similar ones through its edge midpoints."""
    V = mesh.n_vertices
    mid = V + mesh.triangle_edges  # (T, 3) midpoint vertex opposite each local vertex
    v = mesh.triangles
    children = np.stack([
        np.stack([v[:, 0], mid[:, 2], mid[:, 1]], axis=1),
        np.stack([mid[:, 2], v[:, 1], mid[:, 0]], axis=1),
        np.stack([mid[:, 1], mid[:, 0], v[:, 2]], axis=1),
        np.stack([mid[:, 0], mid[:, 1], mid[:, 2]], axis=1),
    ], axis=1).reshape(-1, 3)
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])
    parent_map = np.vstack([np.repeat(np.arange(V)[:, None], 2, axis=1), mesh.edges])
    parent_tri = np.repeat(np.arange(mesh.n_triangles), 4)
    return TriMesh(vertices, children, level=mesh.level + 1, parent_map=parent_map,
                   parent_triangles=parent_tri, parent=mesh)


def refine_to(level, mesh=None):
    """Return the list of meshes ``[level 0, ..., level]``."""
    mesh = unit_square_initial() if mesh is None else mesh
    meshes = [mesh]
    while meshes[-1].level < level:
        meshes.append(red_refine(meshes[-1]))
    return meshes


def mesh_stats(mesh):
    """Mesh size, shape regularity and entity counts.

    The inscribed-ball diameter is ``rho_K = 4 |K| / perimeter(K)``.
    """
    if np.any(mesh.signed_areas <= 0):
        raise MeshError("degenerate or clockwise triangle (area <= 0)")
    lengths = mesh.edge_lengths[mesh.triangle_edges]  # (T, 3)
    h_K = lengths.max(axis=1)
    rho_K = 4.0 * mesh.areas / lengths.sum(axis=1)
    return MeshStats(
        h=float(h_K.max()),
        h_min=float(h_K.min()),
        chunkiness=float((h_K / rho_K).max()),
        n_vertices=mesh.n_vertices,
        n_edges=mesh.n_edges,
        n_triangles=mesh.n_triangles,
        n_boundary_vertices=int(mesh.boundary_vertex_flags.sum()),
    )


def write_text(mesh, path):
    """Plain-text dump: ``V T`` header, then ``x y`` lines, then ``i j k`` lines."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


def read_text(path):
    with open(path) as fh:
        nv, nt = (int(s) for s in fh.readline().split())
        rows = [fh.readline().split() for _ in range(nv + nt)]
    vertices = np.array(rows[:nv], dtype=float)
    triangles = np.array(rows[nv:], dtype=np.int64)
    return TriMesh(vertices, triangles)


def write_vtk(mesh, path, point_data=None, title="gnse mesh"):
    """Legacy ASCII VTK unstructured grid, optionally with vertex fields.

    ``point_data`` maps names to arrays of shape ``(V,)`` (scalars) or ``(V, 2)``
    (vectors, padded with a zero third component).
    """
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines += ["5"] * mesh.n_triangles
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{x:.17g}" for x in values]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [f"{x:.17g} {y:.17g} 0" for x, y in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
