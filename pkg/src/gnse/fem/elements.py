"""Scalar shape functions written in barycentric coordinates.

Every routine takes barycentric points ``lam`` of shape ``(n, 3)`` and returns
``(values, dvalues)`` with shapes ``(n, nloc)`` and ``(n, nloc, 3)``; the second
array holds partial derivatives with respect to ``lambda_0, lambda_1, lambda_2``.
Physical gradients follow from the chain rule with the constant element
gradients of the barycentric coordinates.

Local numbering: vertex functions first, then (P2) the edge function of the edge
opposite local vertex ``k``, or (MINI) the cubic bubble ``27 l0 l1 l2``.
"""
import numpy as np

from ..mesh import LOCAL_EDGES

__all__ = ["p1_basis", "p2_basis", "mini_basis", "BUBBLE_MEAN"]

# mean value of 27 l0 l1 l2 over any triangle
BUBBLE_MEAN = 27.0 / 60.0


def p1_basis(lam):
    lam = np.atleast_2d(lam)
    n = len(lam)
    return lam.copy(), np.broadcast_to(np.eye(3), (n, 3, 3)).copy()


def p2_basis(lam):
    lam = np.atleast_2d(lam)
    n = len(lam)
    vals = np.empty((n, 6))
    der = np.zeros((n, 6, 3))
    for k in range(3):
        vals[:, k] = lam[:, k] * (2.0 * lam[:, k] - 1.0)
        der[:, k, k] = 4.0 * lam[:, k] - 1.0
    for k, (i, j) in enumerate(LOCAL_EDGES):
        vals[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
        der[:, 3 + k, i] = 4.0 * lam[:, j]
        der[:, 3 + k, j] = 4.0 * lam[:, i]
    return vals, der


def mini_basis(lam):
    lam = np.atleast_2d(lam)
    n = len(lam)
    vals = np.empty((n, 4))
    der = np.zeros((n, 4, 3))
    vals[:, :3] = lam
    der[:, :3, :] = np.eye(3)
    l0, l1, l2 = lam.T
    vals[:, 3] = 27.0 * l0 * l1 * l2
    der[:, 3, 0] = 27.0 * l1 * l2
    der[:, 3, 1] = 27.0 * l0 * l2
    der[:, 3, 2] = 27.0 * l0 * l1
    return vals, der
