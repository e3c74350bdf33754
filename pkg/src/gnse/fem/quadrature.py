"""Fully symmetric, interior, positive-weight quadrature rules on triangles.

Rules are generated on first use.  A pool of candidate point orbits under the
six barycentric permutations is collected (the centroid, two-equal-coordinate
orbits, and symmetrised collapsed Gauss-Jacobi x Gauss-Legendre product rules);
a nonnegative least-squares fit to the monomial moments then selects a small
subset of orbits, whose weights are polished by an ordinary least-squares solve.
"""
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations
from math import factorial

import numpy as np
from scipy.optimize import nnls
from scipy.special import roots_jacobi

from ..exceptions import ConfigurationError

__all__ = ["QuadratureRule", "quadrature_rule", "gauss_legendre", "monomial_mean",
           "graded_corner_rule", "integrate_with_corner"]

MAX_DEGREE = 20


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points ``(n, 3)`` and weights summing to one.

    Integrals over a triangle ``K`` are ``|K| * sum_i w_i f(x_i)``.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def monomial_mean(a, b):
    """Mean of ``lambda_1^a lambda_2^b`` over a triangle: ``2 a! b! / (a+b+2)!``."""
    return 2.0 * factorial(a) * factorial(b) / factorial(a + b + 2)


def _monomials(degree):
    return [(a, b) for a in range(degree + 1) for b in range(degree + 1 - a)]


def _collapsed_rule(n):
    """Stroud conical product rule, barycentric points and unit-sum weights."""
    xj, wj = roots_jacobi(n, 1.0, 0.0)  # weight (1 - x) on [-1, 1]
    xl, wl = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (1.0 + xj)
    v = 0.5 * (1.0 + xl)
    U, Vv = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wj, wl)
    l1 = U.ravel()
    l2 = (Vv * (1.0 - U)).ravel()
    pts = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
    w = W.ravel()
    return pts, w / w.sum()


def _orbit(point):
    """All distinct barycentric permutations of ``point``."""
    perms = np.array([point[list(s)] for s in permutations(range(3))])
    _, first = np.unique(np.round(perms, 14), axis=0, return_index=True)
    return perms[np.sort(first)]


def _candidate_orbits(degree):
    """Orbit pool: centroid, two-equal-coordinate orbits, symmetrised product rules."""
    orbits = [np.full((1, 3), 1.0 / 3.0)]
    seen = set()
    n = degree // 2 + 1
    for m in (n, n + 1, n + 2):
        pts, _ = _collapsed_rule(m)
        for pt in pts:
            key = tuple(np.round(np.sort(pt), 12))
            if key not in seen:
                seen.add(key)
                orbits.append(_orbit(pt))
    x, _ = np.polynomial.legendre.leggauss(2 * degree + 2)
    for a in 0.25 * (x + 1.0):  # a in (0, 1/2)
        orbits.append(_orbit(np.array([a, a, 1.0 - 2.0 * a])))
    return orbits


def _orbit_matrix(orbits, monos):
    A = np.empty((len(monos), len(orbits)))
    for j, orb in enumerate(orbits):
        for i, (a, b) in enumerate(monos):
            A[i, j] = np.mean(orb[:, 1] ** a * orb[:, 2] ** b)
    return A


def _max_rel_error(A, w, target):
    return np.max(np.abs(A @ w - target) / target)


@lru_cache(maxsize=None)
def _build(degree):
    monos = _monomials(degree)
    target = np.array([monomial_mean(a, b) for a, b in monos])
    orbits = _candidate_orbits(degree)
    # row scaling puts every moment equation on the same footing
    A = _orbit_matrix(orbits, monos) / target[:, None]
    ones = np.ones(len(monos))
    w, _ = nnls(A, ones, maxiter=100 * A.shape[1])
    support = np.flatnonzero(w > 1e-13 * w.max())
    ws, *_ = np.linalg.lstsq(A[:, support], ones, rcond=None)
    if np.any(ws <= 0) or _max_rel_error(A[:, support], ws, ones) > 1e-13:
        # compression failed: fall back to the symmetrised product rule
        pts, wts = _collapsed_rule(degree // 2 + 1)
        perms = list(permutations(range(3)))
        return np.vstack([pts[:, list(s)] for s in perms]), np.tile(wts, 6) / 6.0
    points = np.vstack([orbits[j] for j in support])
    weights = np.concatenate([np.full(len(orbits[j]), ws[i] / len(orbits[j]))
                              for i, j in enumerate(support)])
    return points, weights


def quadrature_rule(degree):
    """Symmetric triangle rule exact for polynomials of total degree ``degree``."""
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= MAX_DEGREE:
        raise ConfigurationError(f"quadrature degree must be an integer in 1..{MAX_DEGREE}, "
                                 f"got {degree!r}")
    points, weights = _build(int(degree))
    points = points.copy()
    weights = weights.copy()
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, int(degree))


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre rule on ``[0, 1]``: (points, weights summing to one)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def graded_corner_rule(degree, depth=30):
    """Composite triangle rule geometrically graded towards barycentric vertex 0.

    The reference triangle is red-refined ``depth`` times around vertex 0; the
    three children away from the vertex carry the degree-``degree`` rule.
    Returns barycentric points and weights summing to one.
    """
    base = quadrature_rule(degree)
    pts, wts = [], []
    # corners of the current sub-triangle in barycentric coordinates
    c = np.eye(3)
    scale = 1.0
    for _ in range(depth):
        m01, m02, m12 = 0.5 * (c[0] + c[1]), 0.5 * (c[0] + c[2]), 0.5 * (c[1] + c[2])
        for child in ((m01, c[1], m12), (m02, m12, c[2]), (m12, m02, m01)):
            pts.append(base.points @ np.array(child))
            wts.append(base.weights * scale / 4.0)
        c = np.array([c[0], m01, m02])
        scale /= 4.0
    pts.append(base.points @ c)
    wts.append(base.weights * scale)
    return np.vstack(pts), np.concatenate(wts)


def integrate_with_corner(mesh, f, degree, corner=(0.0, 0.0)):
    """Domain integral of ``f`` with graded quadrature on triangles touching ``corner``."""
    rule = quadrature_rule(degree)
    corner = np.asarray(corner, dtype=float)
    at_corner = np.all(mesh.corners == corner, axis=2)  # (T, 3)
    special = at_corner.any(axis=1)
    X = np.einsum("qk,tkd->tqd", rule.points, mesh.corners[~special])
    total = float(np.einsum("t,q,tq->", mesh.areas[~special], rule.weights, f(X)))
    gp, gw = graded_corner_rule(degree)
    for t in np.flatnonzero(special):
        k = int(np.argmax(at_corner[t]))
        order = [k, (k + 1) % 3, (k + 2) % 3]
        Xt = gp @ mesh.corners[t][order]
        total += float(mesh.areas[t] * gw @ f(Xt))
    return total
