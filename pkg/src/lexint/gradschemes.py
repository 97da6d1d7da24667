"""Discrete gradient schemes and their energy-preserving locally exact versions.

States are packed as ``y = (x^1..x^m, p^1..p^m)`` and every scheme has the form

    y1 - y0 = theta S gradbar H(y0, y1)

with ``theta = h I`` for the plain schemes.  Whenever ``theta S`` is
skew-symmetric the energy is conserved exactly, because the discrete
gradient satisfies ``<gradbar H, y1 - y0> = H(y1) - H(y0)``.
"""
import math

import numpy as np

from .matfun import MatrixFunctionError, expm, expm_phi1, solve_linear, tanhc_half
from .schemes import AnchorCache, SolverSettings, StepSizeError, StepStats, _converged
from .systems import symplectic_matrix

__all__ = [
    "itoh_abe_gradient",
    "symmetric_gradient",
    "linearization_matrices",
    "theta_sym",
    "theta_ia",
    "theta_ia_direct",
    "gradient_step",
]

# Below this relative increment the difference quotient of H loses too many
# digits to cancellation.  It is replaced by the mean of dH/dy_j along the
# segment from 2-point Gauss-Legendre, which is exact up to quartic H.
SMALL_INCREMENT = 1e-3
_GAUSS_OFFSET = 0.5 / math.sqrt(3.0)


def _s_times(v, m):
    # S v for a vector or S M for a matrix, without forming S
    return np.concatenate([v[m:], -v[:m]])


def itoh_abe_gradient(hs, y, y1):
    """Coordinate-increment (Itoh-Abe) discrete gradient.

    Component ``j`` is the difference quotient of H along coordinate ``j``
    between the points ``(y1[:j], y[j:])`` and ``(y1[:j+1], y[j+1:])``.
    For increments below ``SMALL_INCREMENT`` (relative) the same quantity,
    the mean of ``dH/dy_j`` over that segment, is computed by 2-point
    Gauss-Legendre quadrature of the analytic gradient instead.
    """
    y = np.asarray(y, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    d = y.size
    g = np.empty(d)
    yhat = y.copy()
    h_prev = None
    for j in range(d):
        dy = y1[j] - y[j]
        if abs(dy) <= SMALL_INCREMENT * max(1.0, abs(y[j])):
            if dy == 0.0:
                g[j] = hs.gradient(yhat)[j]
                continue
            mid = 0.5 * (y[j] + y1[j])
            yhat[j] = mid - _GAUSS_OFFSET * dy
            lo = hs.gradient(yhat)[j]
            yhat[j] = mid + _GAUSS_OFFSET * dy
            hi = hs.gradient(yhat)[j]
            g[j] = 0.5 * (lo + hi)
            yhat[j] = y1[j]
            h_prev = None
            continue
        if h_prev is None:
            h_prev = hs.energy(yhat)
        yhat[j] = y1[j]
        h_next = hs.energy(yhat)
        g[j] = (h_next - h_prev) / dy
        h_prev = h_next
    return g


def symmetric_gradient(hs, y, y1):
    """Symmetrized Itoh-Abe gradient, invariant under swapping its arguments."""
    return 0.5 * (itoh_abe_gradient(hs, y, y1) + itoh_abe_gradient(hs, y1, y))


def _split_hessian(Hyy):
    A = np.tril(Hyy, -1) + 0.5 * np.diag(np.diag(Hyy))
    return A, A.T, A - A.T


def linearization_matrices(hs, ybar):
    """Matrices A, B = A^T and R = A - B of the linearized Itoh-Abe gradient.

    Near ``ybar`` the Itoh-Abe gradient behaves like
    ``H_y + A (y1 - ybar) + B (y0 - ybar)``: ``A`` holds the strictly lower
    part of the Hessian plus half its diagonal.
    """
    return _split_hessian(hs.hessian(ybar))


def _theta_sym_from_hessian(Hyy, h):
    J = _s_times(Hyy, Hyy.shape[0] // 2)
    return h * tanhc_half(J, h)


def _theta_ia_from_hessian(Hyy, h):
    S = symplectic_matrix(Hyy.shape[0] // 2)
    _, _, R = _split_hessian(Hyy)
    T = tanhc_half(S @ Hyy, h)
    K = np.eye(Hyy.shape[0]) + 0.5 * h * (S @ R @ T)
    try:
        return solve_linear(K.T, h * T.T).T
    except MatrixFunctionError as exc:
        raise StepSizeError(f"theta bracket is singular at h={h:g}") from exc


def theta_sym(hs, ybar, h):
    """theta = h tanhc(h F'/2) for the symmetric discrete gradient."""
    Hyy = hs.hessian(ybar)
    hs.tally.matfun_evals += 1
    return _theta_sym_from_hessian(Hyy, h)


def theta_ia(hs, ybar, h):
    """theta = h T (I + h S R T / 2)^{-1} with T = tanhc(h F'/2), for the Itoh-Abe gradient."""
    Hyy = hs.hessian(ybar)
    hs.tally.matfun_evals += 1
    return _theta_ia_from_hessian(Hyy, h)


def theta_ia_direct(hs, ybar, h):
    """theta = 2 (S R + F' coth(h F'/2))^{-1}; needs exp(hF') - I invertible.

    Kept as an independent cross-check of :func:`theta_ia`.
    """
    Hyy = hs.hessian(ybar)
    _, _, R = _split_hessian(Hyy)
    S = symplectic_matrix(hs.m)
    J = S @ Hyy
    E = expm(h * J)
    ident = np.eye(J.shape[0])
    coth_term = J @ (E + ident) @ np.linalg.inv(E - ident)
    return 2.0 * np.linalg.inv(S @ R + coth_term)


_GRADIENTS = {"IA": itoh_abe_gradient, "SYM": symmetric_gradient}
_THETAS = {"IA": _theta_ia_from_hessian, "SYM": _theta_sym_from_hessian}


def _exp_from_hessian(kind, Hyy, h):
    # (A, B, e^{hJ}, phi1(hJ)) with the linearized gradient A y1 + B y0 + const
    if kind == "IA":
        A, B, _ = _split_hessian(Hyy)
    else:
        A = B = 0.5 * Hyy
    J = _s_times(Hyy, Hyy.shape[0] // 2)
    return (A, B) + expm_phi1(h * J)


def gradient_step(kind, anchor, hs, y, h, solver=SolverSettings(), cache=None):
    """One step of GR-IA / GR-SYM or their LEX / SLEX modifications.

    The step equation ``y1 = y + theta S gradbar H(y, y1)`` is solved by
    fixed-point iteration.  With ``solver.gradient_method == "increment"``
    (default) the iteration substitutes into that equation directly.  The
    ``"exponential"`` method substitutes into the equivalent form

        y1 = e^{hJ} y + h phi1(hJ) S (gradbar H(y, y1) - A y1 - B y)

    where ``J = S H_yy`` at the anchor and ``A y1 + B y`` is the linear part
    of the discrete gradient there.  Both have the same solution because
    ``theta`` makes the scheme exact on the linearized problem.  The
    exponential form is exact after one pass on quadratic H and needs fewer
    iterations otherwise.  The plain schemes (``anchor=None``) always use
    substitution.  Anchor quantities are rebuilt only when the Hessian at the
    anchor changes; pass an :class:`~lexint.schemes.AnchorCache` to keep
    that reuse across steps.

    Parameters
    ----------
    kind : {"IA", "SYM"}
    anchor : {None, "LEX", "SLEX"}
    hs : HamiltonianSystem
    y : array_like, shape (2m,)
    h : float
    solver : SolverSettings
    cache : AnchorCache, optional

    Returns
    -------
    y1 : ndarray
    stats : StepStats
    """
    if kind not in _GRADIENTS:
        raise ValueError(f"unknown discrete gradient {kind!r}")
    if anchor not in (None, "LEX", "SLEX"):
        raise ValueError(f"anchor {anchor!r} is not defined for gradient schemes")
    grad = _GRADIENTS[kind]
    y = np.asarray(y, dtype=float)
    m = hs.m
    if cache is None:
        cache = AnchorCache()
    exponential = solver.gradient_method == "exponential" and anchor is not None
    if exponential:
        tag = ("grad-exp", kind)

        def build(Hyy, h):
            return _exp_from_hessian(kind, Hyy, h)
    else:
        tag, build = ("theta", kind), _THETAS[kind]

    def anchor_at(point):
        return cache.get(tag, build, hs.hessian(point), h, hs.tally)

    if anchor is None:
        theta = h * np.eye(y.size)
    elif anchor == "LEX":
        theta = anchor_at(y)

    yk = y.copy()
    diff = math.inf
    for it in range(1, solver.max_iter + 1):
        if anchor == "SLEX":
            theta = anchor_at(0.5 * (y + yk))
        g = grad(hs, y, yk)
        if exponential:
            A, B, E, P = theta
            y_new = E @ y + h * (P @ _s_times(g - A @ yk - B @ y, m))
        else:
            y_new = y + theta @ _s_times(g, m)
        if not np.all(np.isfinite(y_new)):
            return y_new, StepStats(it, math.inf, False)
        diff = float(np.max(np.abs(y_new - yk)))
        yk = y_new
        if _converged(diff, yk, solver.tol):
            return yk, StepStats(it, diff, True)
    return yk, StepStats(solver.max_iter, diff, False)
