"""Linear operators of the mixed space: pressure mass, velocity H1 Gram, divergence."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["AuxMatrices", "assemble_aux_matrices", "local_to_sparse", "divergence_local"]


@dataclass(frozen=True)
class AuxMatrices:
    pressure_mass: sp.csr_matrix
    velocity_h1: sp.csr_matrix
    divergence: sp.csr_matrix


def local_to_sparse(local, rows, cols, shape):
    """Sum element matrices ``(T, m, n)`` into a CSR matrix.

    Duplicates are summed in a fixed order, so the result does not depend on
    how the element loop was scheduled.
    """
    T, m, n = local.shape
    r = np.broadcast_to(rows[:, :, None], (T, m, n)).ravel()
    c = np.broadcast_to(cols[:, None, :], (T, m, n)).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


def divergence_local(q):
    """Element blocks ``(T, 3, nloc, 2)`` of ``(div z, eta)`` for a quadrature object ``q``."""
    return np.einsum("tq,qk,tqlc->tklc", q.W, q.psi, q.G)


def assemble_aux_matrices(space, degree=4):
    """Pressure mass ``M_p``, velocity H1 Gram ``A_1`` and divergence ``B``.

    ``B[k, j] = (div z_j, eta_k)`` with velocity basis ``z_j`` in the
    component-blocked ordering of :class:`MixedSpace`.
    """
    q = space.quad(degree)
    mesh = space.mesh
    T = mesh.n_triangles
    nv, npr = space.n_velocity_dofs, space.n_pressure_dofs
    tri = mesh.triangles

    Mloc = np.einsum("tq,qk,ql->tkl", q.W, q.psi, q.psi)
    Mp = local_to_sparse(Mloc, tri, tri, (npr, npr))

    mass = np.einsum("tq,ql,qm->tlm", q.W, q.phi, q.phi)
    stiff = np.einsum("tq,tqld,tqmd->tlm", q.W, q.G, q.G)
    scalar = mass + stiff
    nloc = scalar.shape[1]
    A = np.zeros((T, 2 * nloc, 2 * nloc))
    A[:, :nloc, :nloc] = scalar
    A[:, nloc:, nloc:] = scalar
    vdofs = space.velocity_cell_dofs.transpose(0, 2, 1).reshape(T, 2 * nloc)
    A1 = local_to_sparse(A, vdofs, vdofs, (nv, nv))

    Bloc = divergence_local(q).transpose(0, 1, 3, 2).reshape(T, 3, 2 * nloc)
    B = local_to_sparse(Bloc, tri, vdofs, (npr, nv))
    return AuxMatrices(pressure_mass=Mp, velocity_h1=A1, divergence=B)
