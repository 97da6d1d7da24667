"""Dense matrix functions: exponential, phi_1 and tanhc.

All routines work on small real square matrices and are singularity-free at
the zero matrix.  ``phi1`` never forms ``M^{-1}``, so singular Jacobians are
handled the same way as invertible ones.
"""
from math import factorial

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "MatrixFunctionError",
    "MatrixOverflowError",
    "SingularMatrixError",
    "ConditioningError",
    "expm",
    "phi1",
    "expm_phi1",
    "tanhc_half",
    "solve_linear",
]


class MatrixFunctionError(ArithmeticError):
    """Base class for failures inside the matrix-function kernel."""


class MatrixOverflowError(MatrixFunctionError, OverflowError):
    pass


class SingularMatrixError(MatrixFunctionError):
    pass


class ConditioningError(MatrixFunctionError):
    """Raised by :func:`tanhc_half` when ``exp(hM) + I`` is nearly singular.

    ``eigenvalue`` is the eigenvalue of ``hM`` closest to an odd multiple of
    ``i*pi``, which is what makes the bracket singular.
    """

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


# Pade(13) numerator coefficients and the matching scaling threshold
# (Higham, SIAM J. Matrix Anal. Appl. 26 (2005)).
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
])
_THETA13 = 5.371920351148152

# phi_1 Taylor core: scaled norm <= 1/2, truncation remainder below 2**-60.
_PHI_RADIUS = 0.5
_PHI_TRUNC = 2.0**-60


def _taylor_terms(norm):
    k = 1
    while norm ** (k + 1) / factorial(k + 2) >= _PHI_TRUNC:
        k += 1
    return k


def _as_square(M):
    A = np.asarray(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def _check_finite(X, what):
    if not np.all(np.isfinite(X)):
        raise MatrixOverflowError(f"{what} overflowed the floating-point range")
    return X


def _squarings(norm, radius):
    if norm <= radius:
        return 0
    return int(np.ceil(np.log2(norm / radius)))


def expm(M):
    """Matrix exponential by scaling and squaring with a Pade(13) core.

    Parameters
    ----------
    M : array_like, shape (d, d)

    Returns
    -------
    ndarray, shape (d, d)

    Raises
    ------
    MatrixOverflowError
        if the result is not representable.
    """
    A = _as_square(M)
    n = A.shape[0]
    s = _squarings(np.linalg.norm(A, 1), _THETA13)
    A = A / 2.0**s
    b = _PADE13
    ident = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    with np.errstate(over="ignore", invalid="ignore"):
        E = np.linalg.solve(V - U, V + U)
        for _ in range(s):
            E = E @ E
    return _check_finite(E, "expm")


def expm_phi1(M):
    """Return ``(exp(M), phi1(M))`` from one scaled Taylor evaluation.

    The argument is scaled to norm <= 1/2, both functions are summed by
    Horner's rule, and the doubling relations

        exp(2Z)  = exp(Z)^2
        phi1(2Z) = phi1(Z) (exp(Z) + I) / 2

    undo the scaling.
    """
    A = _as_square(M)
    n = A.shape[0]
    ident = np.eye(n)
    s = _squarings(np.linalg.norm(A, 1), _PHI_RADIUS)
    Z = A / 2.0**s
    P = ident.copy()
    for k in range(_taylor_terms(np.linalg.norm(Z, 1)), 0, -1):
        P = ident + (Z @ P) / (k + 1)
    E = ident + Z @ P
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(s):
            P = 0.5 * (P @ (E + ident))
            E = E @ E
    _check_finite(E, "expm")
    _check_finite(P, "phi1")
    return E, P


def phi1(M):
    """phi_1(M) = sum_k M^k / (k+1)!, equal to M^{-1}(e^M - I) when M is invertible."""
    return expm_phi1(M)[1]


def tanhc_half(M, h):
    """Evaluate tanhc(hM/2), where tanhc(z) = tanh(z)/z and tanhc(0) = 1.

    Uses tanhc(Z) = 2 (e^{2Z} + I)^{-1} phi1(2Z) with Z = hM/2, so no inverse of
    ``M`` is needed.  Fails only when ``hM`` has an eigenvalue near
    ``i*pi*(2k+1)``.
    """
    A = _as_square(M)
    if h == 0:
        return np.eye(A.shape[0])
    E, P = expm_phi1(h * A)
    K = E + np.eye(A.shape[0])
    try:
        return solve_linear(K, 2.0 * P, pivot_tol=1e-12, scale=1.0 + np.linalg.norm(E, 1))
    except SingularMatrixError:
        ev = np.linalg.eigvals(h * A)
        odd = np.pi * (2 * np.round((ev.imag / np.pi - 1) / 2) + 1)
        worst = ev[np.argmin(np.abs(ev.real) + np.abs(ev.imag - odd))]
        raise ConditioningError(
            f"exp(hM) + I is singular to working precision; eigenvalue of hM "
            f"near i*pi*(2k+1): {worst:.6g}",
            eigenvalue=worst,
        ) from None


def solve_linear(M, B, pivot_tol=None, scale=None):
    """Solve ``M X = B`` by LU with partial pivoting.

    Raises :class:`SingularMatrixError` when the smallest pivot is below
    ``pivot_tol`` (default: ``n`` machine epsilons) times ``scale``.  The
    scale defaults to the largest pivot; pass the size of the terms that
    make up ``M`` when ``M`` itself may cancel to rounding level.
    """
    A = _as_square(M)
    rhs = np.asarray(B, dtype=float)
    if rhs.shape[0] != A.shape[0]:
        raise ValueError(f"shape mismatch: {A.shape} and {rhs.shape}")
    if pivot_tol is None:
        pivot_tol = A.shape[0] * np.finfo(float).eps
    lu, _, X, info = lapack.dgesv(A, rhs)
    pivots = np.abs(np.diag(lu))
    if scale is None:
        scale = pivots.max()
    if info != 0 or pivots.min() <= pivot_tol * scale:
        raise SingularMatrixError("matrix is singular to working precision")
    return X
