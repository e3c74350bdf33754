"""N-functions with (p, delta)-structure and the associated stress laws.

Every function here is a pure, vectorised numpy routine.  Tensors are passed as
arrays of shape ``(..., 2, 2)``; only their symmetric part is ever used.
Symmetric tensors are returned as (symmetric) ``(..., 2, 2)`` arrays, and the
stress tangent is expressed in the orthonormal Mandel basis

    E1 = e1 (x) e1,   E2 = (e1 (x) e2 + e2 (x) e1) / sqrt(2),   E3 = e2 (x) e2,

in which the Frobenius product is the Euclidean one, so a self-adjoint map has
a symmetric 3x3 matrix.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import binom

from .exceptions import DomainError, NumericError

__all__ = [
    "StressParams",
    "benchmark_params",
    "sym",
    "frobenius",
    "to_mandel",
    "from_mandel",
    "phi_value",
    "phi_prime",
    "phi_second",
    "phi_shifted",
    "phi_conjugate",
    "phi_shifted_conjugate",
    "F_of",
    "S_of",
    "S_jacobian",
    "stress_tangent",
]

_SQRT2 = np.sqrt(2.0)
# below this ratio t/delta the closed-form antiderivative cancels badly
_SERIES_SWITCH = 0.1
_SERIES_TERMS = 30


@dataclass(frozen=True)
class StressParams:
    """Exponent ``p``, shift ``delta`` and viscosity scale ``nu`` of the stress law

    ``S(A) = nu (delta + |A^sym|)^(p-2) A^sym``.
    """

    p: float
    delta: float = 0.0
    nu: float = 1.0

    def __post_init__(self):
        if not (self.p > 1.0 and np.isfinite(self.p)):
            raise DomainError(f"p must lie in (1, inf), got {self.p!r}")
        if not self.delta >= 0.0:
            raise DomainError(f"delta must be >= 0, got {self.delta!r}")
        if not self.nu > 0.0:
            raise DomainError(f"nu must be > 0, got {self.nu!r}")


def benchmark_params(p, delta=1e-5):
    """Stress parameters used by the convergence benchmarks (nu switches at p = 2)."""
    return StressParams(p=float(p), delta=delta, nu=0.1 if p >= 2 else 100.0)


def _nonneg(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError(f"{name} must be nonnegative")
    return x


def _scalar_or_array(x):
    return x.item() if np.ndim(x) == 0 else x


# -- tensors -----------------------------------------------------------------

def sym(A):
    """Symmetric part of ``A`` (shape ``(..., 2, 2)``)."""
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def frobenius(A):
    """Frobenius norm over the last two axes."""
    A = np.asarray(A, dtype=float)
    return np.sqrt(np.einsum("...ij,...ij->...", A, A))


def to_mandel(A):
    """Mandel coordinates ``(a11, sqrt(2) a12, a22)`` of ``sym(A)``."""
    As = sym(A)
    return np.stack([As[..., 0, 0], _SQRT2 * As[..., 0, 1], As[..., 1, 1]], axis=-1)


def from_mandel(m):
    """Inverse of :func:`to_mandel`."""
    m = np.asarray(m, dtype=float)
    off = m[..., 1] / _SQRT2
    row0 = np.stack([m[..., 0], off], axis=-1)
    row1 = np.stack([off, m[..., 2]], axis=-1)
    return np.stack([row0, row1], axis=-2)


# -- scalar N-function machinery ----------------------------------------------

def _phi(p, d, t):
    """phi_{p,d}(t) for arrays ``d, t >= 0`` (broadcast)."""
    d, t = np.broadcast_arrays(np.asarray(d, dtype=float), np.asarray(t, dtype=float))
    out = np.empty(t.shape)
    zero_shift = d == 0.0
    out[zero_shift] = t[zero_shift] ** p / p

    pos = ~zero_shift
    dd, tt = d[pos], t[pos]
    tau = tt / dd
    small = tau < _SERIES_SWITCH
    res = np.empty(tt.shape)

    # d^p * sum_k binom(p-2, k) tau^(k+2) / (k+2)
    ts, ds = tau[small], dd[small]
    acc = np.zeros(ts.shape)
    power = ts * ts
    for k in range(_SERIES_TERMS):
        acc += binom(p - 2.0, k) * power / (k + 2)
        power = power * ts
    res[small] = ds**p * acc

    tl, dl = tt[~small], dd[~small]
    e = dl + tl
    res[~small] = (e**p - dl**p) / p - dl * (e ** (p - 1) - dl ** (p - 1)) / (p - 1)
    out[pos] = res
    return out


def _phi_prime(p, d, t):
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (d + t) ** (p - 2.0) * t
    return np.where(t == 0.0, 0.0, val)


def _phi_second(p, d, t):
    # (d+t)^(p-3) ((p-1) t + d)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (d + t) ** (p - 3.0) * ((p - 1.0) * t + d)


def _inverse_phi_prime(p, d, t, tol=1e-15, max_iter=200):
    """Solve ``(d+s)^(p-2) s = t`` for ``s >= 0`` by bracketed Newton iteration."""
    d, t = np.broadcast_arrays(np.asarray(d, dtype=float), np.asarray(t, dtype=float))
    d = d.astype(float).ravel()
    t = t.astype(float).ravel()
    s = np.zeros_like(t)
    active = t > 0
    if not np.any(active):
        return s

    # upper brackets from elementary lower bounds of phi'
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if p >= 2:
            hi = t ** (1.0 / (p - 1.0))
            hi = np.where(d > 0, np.minimum(hi, t / d ** (p - 2.0)), hi)
        else:
            hi = (2.0 ** (2.0 - p) * t) ** (1.0 / (p - 1.0))
            hi = np.maximum(hi, t * (2.0 * d) ** (2.0 - p))
    hi = np.where(np.isfinite(hi), hi, np.finfo(float).max)
    lo = np.zeros_like(t)
    s = 0.5 * hi

    idx = np.flatnonzero(active)
    for _ in range(max_iter):
        if idx.size == 0:
            break
        si, ti, di = s[idx], t[idx], d[idx]
        g = _phi_prime(p, di, si) - ti
        lo[idx] = np.where(g < 0, si, lo[idx])
        hi[idx] = np.where(g > 0, si, hi[idx])
        dg = _phi_second(p, di, si)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = si - g / dg
        bad = ~np.isfinite(step) | (step <= lo[idx]) | (step >= hi[idx])
        new = np.where(bad, 0.5 * (lo[idx] + hi[idx]), step)
        converged = (g == 0) | (np.abs(new - si) <= tol * np.maximum(si, np.finfo(float).tiny))
        s[idx] = np.where(g == 0, si, new)
        idx = idx[~converged]
    if idx.size:
        raise NumericError(f"inverse of phi' did not converge for {idx.size} arguments")
    return s


def _phi_conj(p, d, t):
    d, t = np.broadcast_arrays(np.asarray(d, dtype=float), np.asarray(t, dtype=float))
    shape = t.shape
    s = _inverse_phi_prime(p, d, t).reshape(shape)
    return np.maximum(t * s - _phi(p, d, s), 0.0)


def phi_value(params, t):
    """``phi(t) = int_0^t (delta+s)^(p-2) s ds`` in closed form."""
    t = _nonneg("t", t)
    return _scalar_or_array(_phi(params.p, params.delta, t))


def phi_prime(params, t):
    """``phi'(t) = (delta+t)^(p-2) t``."""
    t = _nonneg("t", t)
    return _scalar_or_array(_phi_prime(params.p, params.delta, t))


def phi_second(params, t):
    """``phi''(t) = (delta+t)^(p-3) ((p-1) t + delta)``."""
    t = _nonneg("t", t)
    return _scalar_or_array(_phi_second(params.p, params.delta, t))


def phi_shifted(params, a, t):
    """Shifted N-function ``phi_a(t) = int_0^t phi'(a+s) s/(a+s) ds``.

    Since ``phi'(a+s) s/(a+s) = (delta+a+s)^(p-2) s``, the shift simply adds
    ``a`` to ``delta`` and the closed form of :func:`phi_value` applies.
    """
    a = _nonneg("a", a)
    t = _nonneg("t", t)
    return _scalar_or_array(_phi(params.p, params.delta + a, t))


def phi_conjugate(params, t):
    """Convex conjugate ``phi*(t) = sup_s (s t - phi(s))`` via ``(phi*)' = (phi')^-1``."""
    t = _nonneg("t", t)
    return _scalar_or_array(_phi_conj(params.p, params.delta, t))


def phi_shifted_conjugate(params, a, t):
    """Conjugate of the shifted N-function ``phi_a``."""
    a = _nonneg("a", a)
    t = _nonneg("t", t)
    return _scalar_or_array(_phi_conj(params.p, params.delta + a, t))


# -- tensor maps ----------------------------------------------------------------

def _scaled_sym(A, delta, exponent, scale=1.0):
    As = sym(A)
    n = frobenius(As)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = scale * (delta + n) ** exponent
    factor = np.where(n == 0.0, 0.0, factor)
    return factor[..., None, None] * As


def F_of(params, A):
    """``F(A) = (delta + |A^sym|)^((p-2)/2) A^sym``; ``F(0) = 0``."""
    return _scaled_sym(A, params.delta, 0.5 * (params.p - 2.0))


def S_of(params, A):
    """``S(A) = nu (delta + |A^sym|)^(p-2) A^sym``; ``S(0) = 0``."""
    return _scaled_sym(A, params.delta, params.p - 2.0, params.nu)


def stress_tangent(params, A):
    """Derivative ``dS/dA`` as a ``(..., 2, 2, 2, 2)`` array acting on full 2x2 inputs.

    ``dS(A)[H] = nu (delta+|D|)^(p-2) H^sym
                 + nu (p-2) (delta+|D|)^(p-3) (D:H^sym)/|D| D``  with ``D = A^sym``;
    the second term is taken as zero where ``|D| = 0``.
    """
    p, delta, nu = params.p, params.delta, params.nu
    D = sym(A)
    n = frobenius(D)
    if delta == 0.0 and p < 3.0 and np.any(n == 0.0):
        raise DomainError("stress tangent is singular at A^sym = 0 when delta = 0 and p < 3")
    eye = np.eye(2)
    symmetrizer = 0.5 * (np.einsum("ik,jl->ijkl", eye, eye) + np.einsum("il,jk->ijkl", eye, eye))
    with np.errstate(divide="ignore", invalid="ignore"):
        a = nu * (delta + n) ** (p - 2.0)
        b = nu * (p - 2.0) * (delta + n) ** (p - 3.0) / n
    b = np.where(n == 0.0, 0.0, b)
    return (a[..., None, None, None, None] * symmetrizer
            + b[..., None, None, None, None] * np.einsum("...ij,...kl->...ijkl", D, D))


def S_jacobian(params, A):
    """Jacobian of ``S`` at ``A`` as a symmetric 3x3 matrix in the Mandel basis."""
    C = stress_tangent(params, A)
    basis = from_mandel(np.eye(3))  # (3, 2, 2) orthonormal basis tensors
    M = np.einsum("aij,...ijkl,bkl->...ab", basis, C, basis)
    return 0.5 * (M + np.swapaxes(M, -1, -2))
