"""Arithmetic back-ends shared by the whole package.

Two scalar types are supported throughout:

* ``float64`` arrays, handled by LAPACK through :mod:`scipy.linalg`;
* ``object`` arrays of :class:`gmpy2.mpfr`, used when energy windows fall far
  below double-precision resolution.

Functions here dispatch on the array dtype so higher-level code can stay
agnostic of the working precision.
"""
from __future__ import annotations

import contextlib
from typing import Iterator

import gmpy2
import numpy as np
import scipy.linalg as sla

FLOAT_TOL = 1e-12


@contextlib.contextmanager
def working_precision(bits: int | None) -> Iterator[None]:
    """Run the enclosed block with ``bits`` of mpfr precision (no-op for None)."""
    if bits is None:
        yield
        return
    with gmpy2.context(gmpy2.get_context(), precision=int(bits)):
        yield


def is_mp(a) -> bool:
    """True for mpfr scalars and object arrays."""
    if isinstance(a, np.ndarray):
        return a.dtype == object
    return isinstance(a, type(gmpy2.mpfr(0)))


def to_mp(x):
    """Convert a number to mpfr at the current precision.

    Floats go through their shortest decimal repr so that ``1e-4`` becomes the
    decimal value 10^-4 rather than its binary approximation. Every module uses
    this helper, which keeps model parameters consistent across code paths.
    """
    if is_mp(x):
        return gmpy2.mpfr(x)
    if isinstance(x, (int, np.integer)):
        return gmpy2.mpfr(int(x))
    return gmpy2.mpfr(repr(float(x)))


def mp_array(a) -> np.ndarray:
    """Elementwise :func:`to_mp` into an object array."""
    a = np.asarray(a)
    out = np.empty(a.shape, dtype=object)
    flat_in = a.ravel()
    flat_out = out.ravel()
    for i, x in enumerate(flat_in):
        flat_out[i] = to_mp(x)
    return out


def to_float(a) -> np.ndarray | float:
    if isinstance(a, np.ndarray):
        return np.asarray(a, dtype=float)
    return float(a)


def like(value, reference):
    """Cast ``value`` to the scalar type of ``reference``."""
    return to_mp(value) if is_mp(reference) else float(value)


def unit_roundoff(a) -> float:
    if is_mp(a):
        return 2.0 ** (1 - gmpy2.get_context().precision)
    return float(np.finfo(float).eps)


def default_tolerance(a) -> float:
    """Absolute convergence tolerance matching the arithmetic of ``a``."""
    if is_mp(a):
        return 2.0 ** (10 - gmpy2.get_context().precision)
    return FLOAT_TOL


def identity(n: int, mp: bool = False) -> np.ndarray:
    if not mp:
        return np.eye(n)
    out = np.empty((n, n), dtype=object)
    zero, one = gmpy2.mpfr(0), gmpy2.mpfr(1)
    out[...] = zero
    for i in range(n):
        out[i, i] = one
    return out


def zeros(shape, mp: bool = False) -> np.ndarray:
    if not mp:
        return np.zeros(shape)
    out = np.empty(shape, dtype=object)
    out[...] = gmpy2.mpfr(0)
    return out


def sqrt(x):
    return gmpy2.sqrt(x) if is_mp(x) else float(np.sqrt(x))


def check_symmetric(M: np.ndarray, rtol: float = 1e-12) -> None:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if M.size == 0:
        return
    Mf = to_float(M)
    scale = max(float(np.max(np.abs(Mf))), 1e-300)
    if float(np.max(np.abs(Mf - Mf.T))) > rtol * scale:
        raise ValueError("matrix is not symmetric")


def symmetrize(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2


# --------------------------------------------------------------------------
# eigen-decomposition

def eigh(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors of a symmetric matrix."""
    M = np.asarray(M)
    if M.shape[0] == 0:
        return M.diagonal().copy(), M.copy()
    if is_mp(M):
        return _jacobi_eigh(M)
    return sla.eigh(M)


def eigvalsh(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M)
    if M.shape[0] == 0:
        return M.diagonal().copy()
    if is_mp(M):
        return _jacobi_eigh(M)[0]
    return sla.eigvalsh(M)


def _orthonormalize(Q: np.ndarray) -> np.ndarray:
    """Two passes of modified Gram-Schmidt on the columns of an object array."""
    Q = Q.copy()
    n = Q.shape[1]
    for _ in range(2):
        for j in range(n):
            v = Q[:, j]
            for i in range(j):
                v = v - (Q[:, i] @ v) * Q[:, i]
            Q[:, j] = v / gmpy2.sqrt(v @ v)
    return Q


def _jacobi_eigh(M: np.ndarray, max_sweeps: int = 60):
    """Cyclic Jacobi on an mpfr matrix.

    Larger matrices are first rotated by an mp-orthonormalized copy of the
    double-precision eigenbasis, so that only one or two sweeps remain.
    """
    n = M.shape[0]
    A = np.array(M, dtype=object, copy=True)
    if n > 4:
        Q0 = _orthonormalize(mp_array(sla.eigh(to_float(M))[1]))
        A = Q0.T @ A @ Q0
        V = Q0
    else:
        V = identity(n, mp=True)
    prec = gmpy2.get_context().precision
    eps = gmpy2.mpfr(2) ** (2 - prec)
    scale = max(abs(x) for x in A.flat) or gmpy2.mpfr(1)
    for _ in range(max_sweeps):
        off = sum(A[i, j] ** 2 for i in range(n) for j in range(i + 1, n))
        if off <= (eps * scale) ** 2:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= eps * scale * eps:
                    A[p, q] = A[q, p] = gmpy2.mpfr(0)
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * apq)
                t = 1 / (abs(theta) + gmpy2.sqrt(theta * theta + 1))
                if theta < 0:
                    t = -t
                c = 1 / gmpy2.sqrt(t * t + 1)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = gmpy2.mpfr(0)
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    w = A.diagonal().copy()
    order = sorted(range(n), key=lambda i: w[i])
    return w[order], V[:, order]


# --------------------------------------------------------------------------
# linear solves and norms

def solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` for symmetric (possibly indefinite) ``A``."""
    if is_mp(A) or is_mp(B):
        return _gauss_solve(np.asarray(A, dtype=object), np.asarray(B, dtype=object))
    return sla.solve(A, B, assume_a="sym")


def _gauss_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    vec = B.ndim == 1
    M = np.concatenate([A, B.reshape(n, -1)], axis=1)
    for j in range(n):
        pivot = j + int(np.argmax(np.abs(M[j:, j])))
        if M[pivot, j] == 0:
            raise np.linalg.LinAlgError("singular matrix")
        if pivot != j:
            M[[j, pivot]] = M[[pivot, j]]
        below = M[j + 1:, j] / M[j, j]
        M[j + 1:, j:] -= np.outer(below, M[j, j:])
    X = M[:, n:].copy()
    for j in range(n - 1, -1, -1):
        X[j] = (X[j] - M[j, j + 1:n] @ X[j + 1:]) / M[j, j]
    return X.ravel() if vec else X


def norm2(M: np.ndarray) -> float:
    """Spectral norm, returned as a float (enough for comparisons with bounds)."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    if is_mp(M):
        if M.ndim == 1:
            return float(gmpy2.sqrt(M @ M))
        if M.shape[0] == M.shape[1] and all(M[i, j] == M[j, i] for i in range(M.shape[0]) for j in range(i)):
            w = _jacobi_eigh(M)[0]
            return float(max(abs(w[0]), abs(w[-1])))
        w = _jacobi_eigh(M.T @ M)[0]
        return float(gmpy2.sqrt(max(w[-1], 0)))
    if M.ndim == 1:
        return float(np.linalg.norm(M))
    return float(np.linalg.norm(M, 2))


def mp_norm2(M: np.ndarray):
    """Spectral norm of a symmetric object array, kept in mpfr."""
    w = _jacobi_eigh(M)[0]
    return max(abs(w[0]), abs(w[-1]))


def decimal_string(x, digits: int = 30) -> str:
    """Fixed-width scientific representation used in reports."""
    if is_mp(x):
        if x == 0:
            return "0"
        mant, exp, _ = gmpy2.digits(x, 10, digits)
        sign = "-" if mant.startswith("-") else ""
        mant = mant.lstrip("-")
        return f"{sign}{mant[0]}.{mant[1:]}e{exp - 1:+d}"
    return repr(float(x))
