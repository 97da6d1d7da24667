"""Verification and benchmark harness.

Global errors, empirical convergence orders, linear stability audits, orbit
periods, equal-cost step calibration and the circular-orbit benchmark sweep.
"""
import csv
import io
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .matfun import MatrixFunctionError, expm
from .schemes import SchemeSpec, SolverSettings, integrate, scheme, step_scheme
from .systems import (
    LinearSystem,
    OdeSystem,
    anharmonic2d,
    circ_init,
    circular_orbit,
    hamiltonian_to_ode,
    linearize,
)

__all__ = [
    "RegimeWarning",
    "CalibrationWarning",
    "reference_solution",
    "global_error",
    "OrderEstimate",
    "estimate_order",
    "geometric_grid",
    "orbit_period",
    "StabilityRow",
    "StabilityReport",
    "exact_affine_propagator",
    "stability_audit",
    "Calibration",
    "calibrate_lambda",
    "BenchmarkConfig",
    "BenchmarkRow",
    "PRESETS",
    "preset_config",
    "benchmark_figure",
    "CSV_COLUMNS",
    "format_float",
    "rows_to_csv",
    "thread_count",
]

ERROR_FLOOR = 1e-13


class RegimeWarning(RuntimeWarning):
    """Order fit points were dropped because the error hit the round-off floor."""


class CalibrationWarning(RuntimeWarning):
    """Cost calibration oscillated or did not reach the requested accuracy."""


def thread_count():
    """Worker cap from ``LEXINT_THREADS`` (default 1)."""
    raw = os.environ.get("LEXINT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"LEXINT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"LEXINT_THREADS must be a positive integer, got {raw!r}")
    return n


# ---------------------------------------------------------------------------
# Errors and references

def reference_solution(sys: OdeSystem, x0, rtol=2.5e-14, atol=1e-15):
    """State-at-time evaluator from a tight DOP853 integration.

    Each call integrates from 0 to ``t`` afresh, so results do not depend on
    call order.
    """
    x0 = np.asarray(x0, dtype=float)

    def state(t):
        if t == 0:
            return x0.copy()
        sol = solve_ivp(lambda _, y: sys.f(y), (0.0, t), x0, method="DOP853",
                        rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"reference integration failed: {sol.message}")
        return sol.y[:, -1]

    return state


def global_error(run, reference: Callable, t_end=None):
    """Euclidean norm of the final state minus the reference at the final time.

    Raises ``ValueError`` if the run stopped before ``t_end``.
    """
    t_final = float(run.times[-1])
    if t_end is not None and not math.isclose(t_final, t_end, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError(f"run ends at t={t_final:g}, expected t={t_end:g}")
    return float(np.linalg.norm(run.final_state - np.asarray(reference(t_final))))


@dataclass
class OrderEstimate:
    slope: float
    steps: np.ndarray
    errors: np.ndarray
    used: np.ndarray


def geometric_grid(h_max, h_min, n):
    """``n`` geometrically spaced values from ``h_max`` down to ``h_min``."""
    return np.geomspace(h_max, h_min, n)


def estimate_order(sch, sys, x0, reference, steps: Sequence[float], t_end, solver=None):
    """Least-squares slope of log(global error) against log(h).

    Needs at least 4 step sizes spanning 1.5 decades.  Errors below 1e-13
    are dropped with a :class:`RegimeWarning`.
    """
    steps = np.asarray(sorted(steps, reverse=True), dtype=float)
    if steps.size < 4:
        raise ValueError("need at least 4 step sizes")
    if math.log10(steps[0] / steps[-1]) < 1.5 - 1e-9:
        raise ValueError("step sizes must span at least 1.5 decades")
    errors = np.empty(steps.size)
    for i, h in enumerate(steps):
        run = integrate(sch, sys, x0, h, t_end, solver=solver)
        if run.status != "ok":
            raise ArithmeticError(f"run failed at h={h:g}: {run.message}")
        errors[i] = global_error(run, reference, t_end)
    used = errors >= ERROR_FLOOR
    if not used.all():
        warnings.warn(f"{int((~used).sum())} error(s) below {ERROR_FLOOR:g} dropped from fit",
                      RegimeWarning, stacklevel=2)
    if used.sum() < 2:
        raise ValueError("fewer than two errors above the round-off floor")
    slope = np.polyfit(np.log(steps[used]), np.log(errors[used]), 1)[0]
    return OrderEstimate(float(slope), steps, errors, used)


def orbit_period(run):
    """Mean revolution time of the position angle, from an unwrapped angle track.

    Times of full turns are found by linear interpolation of the unwrapped
    angle; the period is the last full-turn time divided by the number of
    turns.
    """
    angle = np.unwrap(np.arctan2(run.states[:, 1], run.states[:, 0]))
    turned = np.abs(angle - angle[0])
    turns = int(turned[-1] // (2 * np.pi))
    if turns < 1:
        raise ValueError("trajectory does not complete a revolution")
    target = 2 * np.pi * turns
    k = int(np.searchsorted(turned, target))
    t0, t1 = run.times[k - 1], run.times[k]
    a0, a1 = turned[k - 1], turned[k]
    t_cross = t0 + (target - a0) * (t1 - t0) / (a1 - a0)
    return float(t_cross / turns)


# ---------------------------------------------------------------------------
# Linear stability audit

def exact_affine_propagator(ls: LinearSystem, h):
    """(Phi, c) with x(t+h) = Phi x(t) + c, from the exponential of the augmented matrix."""
    d = ls.dim
    aug = np.zeros((d + 1, d + 1))
    aug[:d, :d] = ls.a
    aug[:d, d] = ls.b
    E = expm(h * aug)
    return E[:d, :d], E[:d, d]


def _norm(v):
    # Euclidean norm without underflow of the squares
    v = np.asarray(v, dtype=float)
    big = float(np.max(np.abs(v))) if v.size else 0.0
    if big == 0.0 or not math.isfinite(big):
        return big
    return big * float(np.linalg.norm(v / big))


@dataclass
class StabilityRow:
    h: float
    steps: int
    max_growth: float
    final_growth: float
    max_step_error: float
    diverged: bool
    converged_steps: int

    @property
    def rate(self):
        """Mean growth factor per step, (|x_n| / |x_0|)^(1/n)."""
        if self.steps == 0 or not math.isfinite(self.final_growth):
            return math.inf
        if self.final_growth == 0.0:
            return 0.0
        return math.exp(math.log(self.final_growth) / self.steps)


@dataclass
class StabilityReport:
    scheme: str
    rows: List[StabilityRow]

    @property
    def bounded(self):
        return not any(r.diverged for r in self.rows)

    def exact_to(self, tol):
        return all(r.max_step_error <= tol for r in self.rows)

    def format(self):
        out = [f"stability audit: {self.scheme}",
               f"{'h':>10} {'steps':>6} {'max|x|/|x0|':>13} {'final':>11} {'rate':>11} "
               f"{'step err':>10} {'diverged':>8}"]
        for r in self.rows:
            out.append(f"{r.h:10.4g} {r.steps:6d} {r.max_growth:13.4e} {r.final_growth:11.4e} "
                       f"{r.rate:11.4e} {r.max_step_error:10.2e} {str(r.diverged):>8}")
        return "\n".join(out)


def stability_audit(sch, system, h_grid, n_steps=100, x0=None,
                    solver=SolverSettings(), divergence=1e8):
    """Run a scheme on a linear (or quadratic Hamiltonian) system and check boundedness.

    ``system`` is a :class:`LinearSystem` or an :class:`OdeSystem` with
    constant Jacobian.  For each ``h`` the scheme takes ``n_steps`` steps
    and every step is compared with the exact affine propagator applied to
    the same starting point.  A run counts as diverged when the state
    becomes non-finite or its distance from the start grows by more than
    ``divergence``.
    """
    if isinstance(sch, str):
        sch = scheme(sch)
    sch = replace(sch, solver=solver)
    if isinstance(system, LinearSystem):
        ls, ode = system, system.to_ode()
    else:
        ode = system
        ls = linearize(ode.fresh(), np.zeros(ode.dim))
    x0 = np.ones(ls.dim) if x0 is None else np.asarray(x0, dtype=float)
    norm0 = max(_norm(x0), np.finfo(float).tiny)
    rows = []
    for h in h_grid:
        Phi, c = exact_affine_propagator(ls, h)
        sys = ode.fresh()
        x = x0.copy()
        growth = 1.0
        err = 0.0
        ok = 0
        diverged = False
        n_done = 0
        for _ in range(n_steps):
            exact = Phi @ x + c
            try:
                x_new, stats = step_scheme(sch, sys, x, h)
            except (ArithmeticError, MatrixFunctionError):
                diverged = True
                break
            n_done += 1
            ok += int(stats.converged)
            if not np.all(np.isfinite(x_new)):
                diverged = True
                break
            scale = max(_norm(exact), np.finfo(float).tiny)
            err = max(err, float(_norm(x_new - exact) / scale))
            x = x_new
            growth = max(growth, _norm(x) / norm0)
            if growth > divergence:
                diverged = True
                break
        rows.append(StabilityRow(float(h), n_done, float(growth), float(_norm(x) / norm0),
                                 err if not diverged else math.inf, diverged, ok))
    return StabilityReport(sch.name, rows)


# ---------------------------------------------------------------------------
# Equal-cost calibration

@dataclass
class Calibration:
    """Result of :func:`calibrate_lambda` at one base step."""

    h_tilde: float
    baseline: str
    lambdas: Dict[str, float]
    cost_rates: Dict[str, float]
    converged: bool
    rounds: int
    transcript: List[dict] = field(default_factory=list)


def _cost_rate(sch, sys, x0, h, t_probe, min_steps, matfun_weight):
    # cost units per unit of simulated time, on a horizon that is a whole number of steps
    n = max(min_steps, int(math.ceil(t_probe / h)))
    run = integrate(sch, sys, x0, h, n * h)
    if run.steps == 0:
        raise ArithmeticError(f"{sch.name} failed on its first step at h={h:g}: {run.message}")
    return run.cost_units(matfun_weight) / (run.steps * h)


def calibrate_lambda(schemes, sys, x0, h_tilde, baseline="EEU", t_probe=0.5, min_steps=20,
                     rtol=0.01, max_rounds=40, matfun_weight=None, solver=None, initial=None):
    """Step multipliers lambda that equalize cost per unit time with the baseline.

    The baseline runs at ``h_tilde`` (lambda = 1).  Each other scheme runs
    at ``lambda * h_tilde`` over the probe horizon and is updated by
    ``lambda <- lambda * rate / rate_baseline`` until every ratio is within
    ``rtol`` of 1.  Once a scheme's ratio has been seen on both sides of 1,
    the update is damped to geometric bisection of the bracketing lambdas;
    iteration counts are integers, so the cost can jump across the target.
    A warning is issued after 10 rounds, and a scheme that never settles
    keeps the lambda with the smallest cost mismatch.
    """
    specs = [s if isinstance(s, SchemeSpec) else scheme(s) for s in schemes]
    if solver is not None:
        specs = [replace(s, solver=solver) for s in specs]
    base = scheme(baseline, solver) if isinstance(baseline, str) else baseline
    base_rate = _cost_rate(base, sys, x0, h_tilde, t_probe, min_steps, matfun_weight)
    lambdas = {s.name: float((initial or {}).get(s.name, 1.0)) for s in specs}
    rates = {base.name: base_rate}
    active = {s.name: s for s in specs if s.name != base.name}
    lambdas[base.name] = 1.0
    # per scheme: largest lambda seen too expensive, smallest seen too cheap
    above, below = {}, {}
    best = {}
    transcript = []
    rounds = 0
    warned = False
    while active and rounds < max_rounds:
        rounds += 1
        for name, sch in list(active.items()):
            lam = lambdas[name]
            rate = _cost_rate(sch, sys, x0, lam * h_tilde, t_probe, min_steps, matfun_weight)
            ratio = rate / base_rate
            rates[name] = rate
            transcript.append({"round": rounds, "scheme": name, "lambda": lam, "ratio": ratio})
            if name not in best or abs(math.log(ratio)) < abs(math.log(best[name][1])):
                best[name] = (lam, ratio, rate)
            if abs(ratio - 1.0) <= rtol:
                del active[name]
                continue
            if ratio > 1.0:
                above[name] = max(above.get(name, lam), lam)
            else:
                below[name] = min(below.get(name, lam), lam)
            if name in above and name in below:
                lambdas[name] = math.sqrt(above[name] * below[name])
            else:
                lambdas[name] = lam * ratio
        if rounds == 10 and active and not warned:
            warned = True
            warnings.warn(f"calibration at h_tilde={h_tilde:g} still unsettled after 10 rounds: "
                          f"{', '.join(sorted(active))}", CalibrationWarning, stacklevel=2)
    for name in active:
        lambdas[name], _, rates[name] = best[name]
    if active:
        warnings.warn(f"calibration at h_tilde={h_tilde:g} did not reach {rtol:.0%} for "
                      f"{', '.join(sorted(active))}", CalibrationWarning, stacklevel=2)
    return Calibration(float(h_tilde), base.name, lambdas, rates, not active, rounds, transcript)


# ---------------------------------------------------------------------------
# Circular-orbit benchmark

CSV_COLUMNS = ("scheme", "R", "h_tilde", "lambda", "h", "t_end", "global_error",
               "energy_drift", "cost_units", "fp_warnings", "status")

PRESETS = {
    "euler-r0.2": dict(radius=0.2, baseline="EEU",
                       schemes=("EEU", "IEU", "EEU-LEX", "IEU-LEX", "IEU-ILEX"),
                       h_max=1e-2, h_min=1e-4),
    "euler-r5": dict(radius=5.0, baseline="EEU",
                     schemes=("EEU", "IEU", "EEU-LEX", "IEU-LEX", "IEU-ILEX"),
                     h_max=1e-2, h_min=1e-4),
    "midtrap-r0.2": dict(radius=0.2, baseline="IMP",
                         schemes=("IMP", "IMP-LEX", "IMP-SLEX", "TR", "TR-LEX", "TR-SLEX"),
                         h_max=1e-1, h_min=1e-3),
    "midtrap-r1": dict(radius=1.0, baseline="IMP",
                       schemes=("IMP", "IMP-LEX", "IMP-SLEX", "TR", "TR-LEX", "TR-SLEX"),
                       h_max=1e-1, h_min=1e-3),
    "grad-r0.2": dict(radius=0.2, baseline="GR-SYM",
                      schemes=("GR-IA", "GR-SYM", "GR-IA-LEX", "GR-IA-SLEX",
                               "GR-SYM-LEX", "GR-SYM-SLEX"),
                      h_max=1e-1, h_min=1e-3),
    "grad-r1": dict(radius=1.0, baseline="GR-SYM",
                    schemes=("GR-IA", "GR-SYM", "GR-IA-LEX", "GR-IA-SLEX",
                             "GR-SYM-LEX", "GR-SYM-SLEX"),
                    h_max=1e-1, h_min=1e-3),
}


@dataclass
class BenchmarkConfig:
    """Equal-cost sweep on the circular orbit of radius ``radius``."""

    radius: float
    schemes: Sequence[str]
    h_tilde: Sequence[float]
    baseline: str = "EEU"
    t_end: float = 12.5
    t_probe: float = 0.5
    solver: SolverSettings = SolverSettings()
    matfun_weight: Optional[float] = None
    lambdas: Optional[Dict[str, float]] = None

    def __post_init__(self):
        if not 0.0 < self.radius < 10.0:
            raise ValueError("circular orbits exist only for 0 < R < 10")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if len(self.h_tilde) == 0 or min(self.h_tilde) <= 0:
            raise ValueError("h_tilde grid must be non-empty and positive")
        for name in list(self.schemes) + [self.baseline]:
            scheme(name)


def preset_config(name, points_per_decade=8, **overrides):
    """Benchmark configuration for a named preset (h-tilde grid: 2 decades)."""
    try:
        p = dict(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; valid: {', '.join(PRESETS)}") from None
    decades = math.log10(p.pop("h_max") / p["h_min"])
    h_min = p.pop("h_min")
    n = int(round(decades * points_per_decade)) + 1
    h_max = h_min * 10**decades
    grid = tuple(float(v) for v in np.geomspace(h_max, h_min, n))
    p.update(overrides)
    p.setdefault("h_tilde", grid)
    return BenchmarkConfig(**p)


@dataclass
class BenchmarkRow:
    scheme: str
    R: float
    h_tilde: float
    lam: float
    h: float
    t_end: float
    global_error: float
    energy_drift: float
    cost_units: float
    fp_warnings: int
    status: str

    def values(self):
        return (self.scheme, self.R, self.h_tilde, self.lam, self.h, self.t_end,
                self.global_error, self.energy_drift, self.cost_units, self.fp_warnings,
                self.status)


def _benchmark_point(config, ode, x0, reference, h_tilde):
    schemes = list(dict.fromkeys(config.schemes))
    if config.lambdas is not None:
        lambdas = {s: float(config.lambdas.get(s, 1.0)) for s in schemes}
        cal_ok = True
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CalibrationWarning)
            cal = calibrate_lambda(schemes, ode, x0, h_tilde, baseline=config.baseline,
                                   t_probe=config.t_probe, solver=config.solver,
                                   matfun_weight=config.matfun_weight)
        lambdas, cal_ok = cal.lambdas, cal.converged
    rows = []
    for name in schemes:
        lam = lambdas[name]
        h = lam * h_tilde
        run = integrate(name, ode, x0, h, config.t_end, solver=config.solver)
        status = run.status
        if status == "ok" and not cal_ok:
            status = "ok-uncalibrated"
        if run.status == "ok":
            err = global_error(run, reference, config.t_end)
        else:
            err = math.nan
        rows.append(BenchmarkRow(name, config.radius, float(h_tilde), lam, h, config.t_end, err,
                                 run.energy_drift(), run.cost_units(config.matfun_weight),
                                 run.solver_warnings, status))
    return rows


def benchmark_figure(config: BenchmarkConfig, threads=None):
    """Run the equal-cost sweep and return one :class:`BenchmarkRow` per (scheme, h_tilde).

    Each base step is calibrated independently, so lambda is recorded per
    point.  Points run in up to ``threads`` workers (default
    :func:`thread_count`); rows come back in grid order regardless.
    """
    ode = hamiltonian_to_ode(anharmonic2d())
    x0 = circ_init(config.radius)
    reference = circular_orbit(config.radius)
    threads = thread_count() if threads is None else threads
    grid = list(config.h_tilde)
    if threads > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ht: _benchmark_point(config, ode, x0, reference, ht), grid))
    else:
        parts = [_benchmark_point(config, ode, x0, reference, ht) for ht in grid]
    return [row for part in parts for row in part]


def format_float(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % v


def rows_to_csv(rows, columns=CSV_COLUMNS):
    """CSV text with floats at 17 significant digits and ``\\n`` line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        vals = row.values() if hasattr(row, "values") and not isinstance(row, (tuple, list)) else row
        w.writerow([format_float(v) for v in vals])
    return buf.getvalue()
