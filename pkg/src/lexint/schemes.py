"""One-step schemes and their locally exact modifications.

The classical kernels are written as ``y1 - y0 = h * Psi(y0, y1)``.  A locally
exact modification replaces the scalar step ``h`` by a matrix ``delta`` built
from the Jacobian at an anchor point ``ybar``::

    delta = h phi1(h J) (I + h Psi2(ybar, ybar) phi1(h J))^{-1},   J = F'(ybar)

which makes the linearization of the scheme at ``ybar`` coincide with the
exact propagator of the linearized equation.  The anchor is the current
point (LEX), the new point (ILEX) or the midpoint (SLEX).
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .matfun import MatrixFunctionError, expm_phi1, solve_linear, tanhc_half
from .systems import CostTally, LinearSystem, OdeSystem

__all__ = [
    "KERNELS",
    "GRADIENT_KERNELS",
    "ANCHORS",
    "CATALOG",
    "SolverSettings",
    "SchemeSpec",
    "StepStats",
    "StepSizeError",
    "RunRecord",
    "AnchorCache",
    "scheme",
    "exact_linear_step",
    "exp_euler_step",
    "delta_matrix",
    "delta_from_jacobian",
    "delta_tanhc_form",
    "psi2_diagonal",
    "step",
    "step_scheme",
    "integrate",
]

log = logging.getLogger(__name__)

KERNELS = ("EEU", "IEU", "IMP", "TR")
GRADIENT_KERNELS = ("GR-IA", "GR-SYM")
ANCHORS = (None, "LEX", "ILEX", "SLEX")

CATALOG = {
    "EEU": ("EEU", None),
    "IEU": ("IEU", None),
    "IMP": ("IMP", None),
    "TR": ("TR", None),
    "EEU-LEX": ("EEU", "LEX"),
    "IEU-LEX": ("IEU", "LEX"),
    "IEU-ILEX": ("IEU", "ILEX"),
    "IMP-LEX": ("IMP", "LEX"),
    "IMP-SLEX": ("IMP", "SLEX"),
    "TR-LEX": ("TR", "LEX"),
    "TR-SLEX": ("TR", "SLEX"),
    "GR-IA": ("GR-IA", None),
    "GR-SYM": ("GR-SYM", None),
    "GR-IA-LEX": ("GR-IA", "LEX"),
    "GR-IA-SLEX": ("GR-IA", "SLEX"),
    "GR-SYM-LEX": ("GR-SYM", "LEX"),
    "GR-SYM-SLEX": ("GR-SYM", "SLEX"),
}


class StepSizeError(ArithmeticError):
    """The step matrix does not exist for this step size; retry with a smaller h."""


@dataclass(frozen=True)
class SolverSettings:
    """Settings for the implicit per-step equation.

    Iteration stops when the max-norm of the difference of successive
    iterates is at most ``tol * max(1, |y|_inf)``.  Both methods are
    fixed-point iterations on the same equation.  ``"increment"`` substitutes
    into ``y1 = y0 + delta Psi(y0, y1)``.  ``"exponential"`` (default)
    substitutes into the algebraically equivalent form
    ``y1 = e^{hJ} y0 + h phi1(hJ) Psi_g(y0, y1)``, where ``Psi_g`` is the
    kernel applied to the nonlinear remainder ``g(z) = F(z) - J z``.  The
    exponential form is exact after one pass on linear problems for any
    ``h``, contracts faster near the anchor, and avoids the cancellation in
    ``y0 + delta Psi`` when the step decays strongly.  It only differs from
    ``"increment"`` for the locally exact classical schemes.

    ``gradient_method`` picks the same choice for the locally exact gradient
    schemes (see :func:`lexint.gradschemes.gradient_step`).  Its default is
    plain substitution, which keeps their iteration counts, and so their
    calibrated costs, comparable with the plain gradient schemes.
    """

    tol: float = 3e-16
    max_iter: int = 20
    method: str = "exponential"
    gradient_method: str = "increment"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        for value in (self.method, self.gradient_method):
            if value not in ("exponential", "increment"):
                raise ValueError(f"unknown solver method {value!r}")


@dataclass(frozen=True)
class SchemeSpec:
    name: str
    kernel: str
    anchor: Optional[str]
    solver: SolverSettings = SolverSettings()

    @property
    def is_gradient(self):
        return self.kernel in GRADIENT_KERNELS

    @property
    def locally_exact(self):
        return self.anchor is not None


def scheme(name, solver=None):
    """Look up a catalog scheme by its canonical name (e.g. ``"IMP-SLEX"``)."""
    try:
        kernel, anchor = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown scheme {name!r}; valid: {', '.join(CATALOG)}") from None
    return SchemeSpec(name, kernel, anchor, solver or SolverSettings())


@dataclass
class StepStats:
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True


def check_anchor(kernel, anchor):
    if anchor not in ANCHORS:
        raise ValueError(f"unknown anchor rule {anchor!r}")
    if anchor == "ILEX" and kernel not in ("IEU", "IMP", "TR"):
        raise ValueError(f"ILEX anchor needs an implicit kernel, got {kernel}")
    if anchor == "SLEX" and kernel not in ("IMP", "TR") + GRADIENT_KERNELS:
        raise ValueError(f"SLEX anchor is defined for IMP, TR and gradient kernels, not {kernel}")


# ---------------------------------------------------------------------------
# Exact and exponential steps

def exact_linear_step(ls: LinearSystem, x, h):
    """Exact flow of dx/dt = A x + b over time ``h``: x + h phi1(hA)(Ax + b)."""
    x = np.asarray(x, dtype=float)
    P = expm_phi1(h * ls.a)[1]
    return x + h * (P @ (ls.a @ x + ls.b))


def exp_euler_step(sys: OdeSystem, x, h):
    """Exponential Euler step x + h phi1(h F'(x)) F(x)."""
    x = np.asarray(x, dtype=float)
    J = sys.J(x)
    sys.tally.matfun_evals += 1
    return x + h * (expm_phi1(h * J)[1] @ sys.F(x))


# ---------------------------------------------------------------------------
# Kernels and step matrices

def psi2_diagonal(kernel, J):
    """Derivative of Psi in its second argument on the diagonal, given F' = J."""
    if kernel == "EEU":
        return np.zeros_like(J)
    if kernel == "IEU":
        return J
    if kernel in ("IMP", "TR"):
        return 0.5 * J
    raise ValueError(f"unknown kernel {kernel!r}")


def delta_from_jacobian(kernel, J, h):
    """Step matrix of the locally exact modification, given F'(ybar) = J."""
    J = np.asarray(J, dtype=float)
    P = expm_phi1(h * J)[1]
    if kernel == "EEU":
        return h * P
    R = h * (psi2_diagonal(kernel, J) @ P)
    K = np.eye(J.shape[0]) + R
    try:
        # delta K = h P, solved in transposed form; K may cancel to rounding
        return solve_linear(K.T, h * P.T, scale=1.0 + np.linalg.norm(R, 1)).T
    except MatrixFunctionError as exc:
        raise StepSizeError(f"step matrix bracket is singular at h={h:g}") from exc


def delta_tanhc_form(kernel, J, h):
    """Same step matrix through h T (I + h (Psi2 - Psi1) T / 2)^{-1}, T = tanhc(hJ/2)."""
    J = np.asarray(J, dtype=float)
    T = tanhc_half(J, h)
    psi2 = psi2_diagonal(kernel, J)
    D = 2.0 * psi2 - J
    K = np.eye(J.shape[0]) + 0.5 * h * (D @ T)
    return solve_linear(K.T, h * T.T).T


def delta_matrix(kernel, sys, anchor, h):
    """Step matrix at the anchor point (counts one Jacobian and one matrix function)."""
    J = sys.J(anchor)
    sys.tally.matfun_evals += 1
    return delta_from_jacobian(kernel, J, h)


def _psi(kernel, sys, y0, f0, y1):
    if kernel == "EEU":
        return f0
    if kernel == "IEU":
        return sys.F(y1)
    if kernel == "IMP":
        return sys.F(0.5 * (y0 + y1))
    return 0.5 * (f0 + sys.F(y1))


def _psi_remainder(kernel, sys, y0, f0, y1, J):
    # kernel applied to g(z) = F(z) - J z
    if kernel == "EEU":
        return f0 - J @ y0
    if kernel == "IEU":
        return sys.F(y1) - J @ y1
    if kernel == "IMP":
        mid = 0.5 * (y0 + y1)
        return sys.F(mid) - J @ mid
    return 0.5 * (f0 - J @ y0 + sys.F(y1) - J @ y1)


def _converged(diff, y, tol):
    return diff <= tol * max(1.0, float(np.max(np.abs(y))))


class AnchorCache:
    """Reuses anchor quantities while the Jacobian (and h) stay bitwise equal.

    Pass one instance to consecutive :func:`step` calls to carry the reuse
    across steps; on nonlinear problems it never hits.  The counter
    ``matfun_evals`` is charged only when the quantity is actually rebuilt.
    """

    def __init__(self):
        self.slots = {}

    def get(self, tag, build, matrix, h, tally):
        key, value = self.slots.get(tag, (None, None))
        if key is None or key[0] != h or not np.array_equal(matrix, key[1]):
            tally.matfun_evals += 1
            value = build(matrix, h)
            self.slots[tag] = ((h, matrix), value)
        return value


def step(kernel, anchor, sys, x, h, solver=SolverSettings(), cache=None):
    """Advance one step of a (possibly modified) classical scheme.

    Solves ``x1 = x + delta(xbar, h) Psi(x, x1)``.  For ILEX and SLEX the
    anchor depends on the unknown, so ``delta`` is rebuilt on every iteration
    (unless the Jacobian at the new anchor is unchanged).

    With ``solver.method == "exponential"`` the same equation is solved in
    the equivalent form ``x1 = e^{hJ} x + h phi1(hJ) Psi_g(x, x1)`` where
    ``Psi_g`` is the kernel applied to ``g(z) = F(z) - J z``.

    Returns
    -------
    x1 : ndarray
    stats : StepStats
    """
    check_anchor(kernel, anchor)
    x = np.asarray(x, dtype=float)
    d = x.size
    f0 = sys.F(x) if kernel in ("EEU", "TR") else None
    exponential = solver.method == "exponential" and anchor is not None
    if cache is None:
        cache = AnchorCache()
    if exponential:
        tag, build = "exp", lambda J, h: (J,) + expm_phi1(h * J)
    else:
        tag, build = ("delta", kernel), lambda J, h: delta_from_jacobian(kernel, J, h)

    def pair(sys, point, h):
        return cache.get(tag, build, sys.J(point), h, sys.tally)

    if anchor is None:
        delta = h * np.eye(d)
    elif anchor == "LEX":
        delta = pair(sys, x, h)
    if kernel == "EEU":
        if anchor is None:
            return x + h * f0, StepStats()
        if exponential:
            J, E, P = delta
            return E @ x + h * (P @ (f0 - J @ x)), StepStats()
        return x + delta @ f0, StepStats()

    y = x.copy()
    diff = math.inf
    for it in range(1, solver.max_iter + 1):
        if anchor == "ILEX":
            delta = pair(sys, y, h)
        elif anchor == "SLEX":
            delta = pair(sys, 0.5 * (x + y), h)
        if exponential:
            J, E, P = delta
            y_new = E @ x + h * (P @ _psi_remainder(kernel, sys, x, f0, y, J))
        else:
            y_new = x + delta @ _psi(kernel, sys, x, f0, y)
        if not np.all(np.isfinite(y_new)):
            return y_new, StepStats(it, math.inf, False)
        diff = float(np.max(np.abs(y_new - y)))
        y = y_new
        if _converged(diff, y, solver.tol):
            return y, StepStats(it, diff, True)
    return y, StepStats(solver.max_iter, diff, False)


def step_scheme(sch: SchemeSpec, sys, x, h, cache=None):
    """One step of a catalog scheme, dispatching gradient kernels to :mod:`gradschemes`."""
    if sch.is_gradient:
        from .gradschemes import gradient_step

        if sys.hamiltonian is None:
            raise ValueError(f"{sch.name} needs a Hamiltonian system")
        kind = sch.kernel.split("-")[1]
        return gradient_step(kind, sch.anchor, sys.hamiltonian, x, h, sch.solver, cache)
    return step(sch.kernel, sch.anchor, sys, x, h, sch.solver, cache)


# ---------------------------------------------------------------------------
# Driver

@dataclass
class RunRecord:
    """Trajectory and cost record of one constant-step run."""

    scheme: str
    times: np.ndarray
    states: np.ndarray
    costs: CostTally = field(default_factory=CostTally)
    energies: Optional[np.ndarray] = None
    solver_warnings: int = 0
    iterations: int = 0
    status: str = "ok"
    message: str = ""
    # cumulative cost units (default weighting) after each step, starting at 0
    cost_trace: Optional[np.ndarray] = None

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def steps(self):
        return len(self.times) - 1

    def cost_units(self, matfun_weight=None):
        return self.costs.units(self.dim, matfun_weight)

    def energy_drift(self):
        """Max relative deviation of the energy from its initial value."""
        if self.energies is None:
            return math.nan
        e0 = self.energies[0]
        return float(np.max(np.abs(self.energies - e0)) / max(abs(e0), np.finfo(float).tiny))


def time_grid(h, t_end):
    """Grid 0, h, 2h, ... with the last step shortened to land on ``t_end``."""
    if t_end == 0:
        return np.zeros(1)
    n = int(math.ceil(t_end / h * (1.0 - 1e-12)))
    times = np.arange(n + 1) * h
    times[-1] = t_end
    return times


def integrate(sch: Union[SchemeSpec, str], sys: OdeSystem, x0, h, t_end, solver=None):
    """Integrate from t=0 to ``t_end`` with constant step ``h``.

    Runs on a fresh counter instance, so ``sys`` itself is not modified.
    Non-converged implicit solves are counted in ``solver_warnings``; a
    numerical failure stops the run and returns the partial record with
    ``status="failed"``.
    """
    if isinstance(sch, str):
        sch = scheme(sch)
    if solver is not None:
        sch = replace(sch, solver=solver)
    if not h > 0:
        raise ValueError("step size must be positive")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    sys = sys.fresh()
    hs = sys.hamiltonian
    times = time_grid(h, t_end)
    states = np.empty((len(times), sys.dim))
    states[0] = np.asarray(x0, dtype=float)
    rec = RunRecord(sch.name, times, states, costs=sys.tally)
    trace = np.zeros(len(times))
    cache = AnchorCache()
    # the nominal h keeps anchor reuse bitwise stable; only a genuinely
    # shortened last step uses its own length
    h_last = times[-1] - times[-2] if len(times) > 1 else h
    if abs(h_last - h) <= 1e-12 * h:
        h_last = h
    for n in range(len(times) - 1):
        try:
            h_n = h if n < len(times) - 2 else h_last
            y, stats = step_scheme(sch, sys, states[n], h_n, cache)
        except (StepSizeError, MatrixFunctionError) as exc:
            rec.status, rec.message = "failed", f"step {n}: {exc}"
            break
        rec.iterations += stats.iterations
        if not stats.converged:
            rec.solver_warnings += 1
            log.debug("%s: step %d not converged (residual %.3g)", sch.name, n, stats.residual)
        if not np.all(np.isfinite(y)):
            rec.status, rec.message = "failed", f"step {n}: non-finite state"
            break
        states[n + 1] = y
        trace[n + 1] = sys.tally.units(sys.dim)
    else:
        n = len(times) - 1
        rec.cost_trace = trace
        if hs is not None:
            rec.energies = np.array([hs.h_fn(*hs.split(s)) for s in states])
        return rec
    rec.times = times[: n + 1]
    rec.states = states[: n + 1]
    rec.cost_trace = trace[: n + 1]
    if hs is not None:
        rec.energies = np.array([hs.h_fn(*hs.split(s)) for s in rec.states])
    return rec
