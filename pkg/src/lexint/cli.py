"""Command-line interface: ``lexint {integrate,benchmark,order,stability,calibrate}``.

Exit status is 0 on success, 2 on invalid input and 3 when a numerical
run fails.  Options may also come from a ``key = value`` file given with
``--config`` (keys are long option names); command-line flags win.
"""
import argparse
import math
import sys
import warnings

import numpy as np

from . import analysis
from .schemes import CATALOG, SolverSettings, integrate, scheme
from .systems import SYSTEMS, circular_orbit, get_system

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

# hard defaults, applied after the config file
DEFAULTS = {
    "system": "anharmonic2d",
    "radius": 1.0,
    "t_end": 12.5,
    "tol": 3e-16,
    "max_iter": 20,
    "solver": "exponential",
    "gradient_solver": "increment",
}


class ValidationError(Exception):
    pass


class NumericalFailure(Exception):
    pass


def _add_common(p, system=True):
    p.add_argument("--config", help="key = value file with option defaults")
    p.add_argument("--scheme", action="append", help="scheme name (repeatable)")
    if system:
        p.add_argument("--system", help=f"registered system: {', '.join(SYSTEMS)}")
    p.add_argument("--radius", type=float, help="initial radius / amplitude")
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--tol", type=float, help="solver tolerance (default 3e-16)")
    p.add_argument("--max-iter", type=int, dest="max_iter", help="solver iteration cap (default 20)")
    p.add_argument("--solver", choices=("exponential", "increment"),
                   help="fixed-point form for locally exact classical schemes")
    p.add_argument("--gradient-solver", choices=("exponential", "increment"), dest="gradient_solver",
                   help="fixed-point form for locally exact gradient schemes")
    p.add_argument("--matfun-weight", type=float, dest="matfun_weight",
                   help="cost units per matrix-function evaluation (default 2 d^2)")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser():
    parser = argparse.ArgumentParser(prog="lexint", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("integrate", help="write a trajectory CSV (t, y..., H, cost)")
    _add_common(p)
    p.add_argument("--step", type=float, help="step size h")
    p.add_argument("--steps", type=int, help="number of steps (alternative to --step)")

    p = sub.add_parser("benchmark", help="equal-cost circular-orbit sweep as CSV")
    _add_common(p, system=False)
    p.add_argument("--preset", help=f"one of: {', '.join(analysis.PRESETS)}")
    p.add_argument("--baseline", help="scheme with lambda = 1")
    p.add_argument("--h-tilde", type=float, action="append", dest="h_tilde",
                   help="base step (repeatable; default: preset grid)")
    p.add_argument("--points-per-decade", type=int, dest="points_per_decade")

    p = sub.add_parser("order", help="fitted convergence slopes")
    _add_common(p)
    p.add_argument("--step", type=float, action="append", help="step size (repeatable)")
    p.add_argument("--steps", type=int, help="number of step sizes in the default grid")

    p = sub.add_parser("stability", help="linear stability / exactness audit")
    _add_common(p)
    p.add_argument("--step", type=float, action="append", help="step size (repeatable)")
    p.add_argument("--steps", type=int, help="steps per step size")

    p = sub.add_parser("calibrate", help="equal-cost step multipliers")
    _add_common(p, system=False)
    p.add_argument("--preset", help=f"take schemes, radius and baseline from a preset")
    p.add_argument("--baseline", help="scheme with lambda = 1")
    p.add_argument("--h-tilde", type=float, dest="h_tilde", help="base step")
    p.add_argument("--transcript", action="store_true", help="print every calibration round")
    return parser


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment; repeated keys accumulate."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ValidationError(f"cannot read config file: {exc}") from None
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{num}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out.setdefault(key.replace("-", "_"), []).append(value)
    return out


def _apply_config(args, parser, config):
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    for key, values in config.items():
        if key not in actions or key in ("config", "help"):
            raise ValidationError(f"unknown config key {key!r} for {args.command}")
        if getattr(args, key) is not None:
            continue
        act = actions[key]
        conv = act.type or str
        try:
            if isinstance(act, argparse._AppendAction):
                val = [conv(v) for v in values]
            elif isinstance(act, argparse._StoreTrueAction):
                val = values[-1].lower() in ("1", "true", "yes", "on")
            else:
                val = conv(values[-1])
        except ValueError:
            raise ValidationError(f"bad value for {key}: {values[-1]!r}") from None
        if act.choices is not None and val not in act.choices:
            raise ValidationError(f"{key} must be one of {', '.join(act.choices)}")
        setattr(args, key, val)


def _finish(args):
    for key, val in DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, val)
    if args.schemes_given:
        for name in args.scheme:
            if name not in CATALOG:
                raise ValidationError(f"unknown scheme {name!r}; valid: {', '.join(CATALOG)}")
    if getattr(args, "system", None) is not None and args.system not in SYSTEMS:
        raise ValidationError(f"unknown system {args.system!r}; valid: {', '.join(SYSTEMS)}")
    if args.tol is not None and not args.tol > 0:
        raise ValidationError("--tol must be positive")
    if args.max_iter is not None and args.max_iter < 1:
        raise ValidationError("--max-iter must be at least 1")
    if args.t_end is not None and not args.t_end > 0:
        raise ValidationError("--t-end must be positive")


def _solver(args):
    return SolverSettings(tol=args.tol, max_iter=args.max_iter, method=args.solver,
                          gradient_method=args.gradient_solver)


def _emit(args, text):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _reference(args, ode, x0):
    if args.system == "anharmonic2d":
        return circular_orbit(args.radius)
    return analysis.reference_solution(ode, x0)


def _initial(args):
    factory, init = SYSTEMS[args.system]
    try:
        return factory(), np.asarray(init(args.radius), dtype=float)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def cmd_integrate(args):
    if not args.scheme or len(args.scheme) != 1:
        raise ValidationError("integrate needs exactly one --scheme")
    if (args.step is None) == (args.steps is None):
        raise ValidationError("give exactly one of --step and --steps")
    h = args.step if args.step is not None else args.t_end / args.steps
    if not h > 0:
        raise ValidationError("step size must be positive")
    ode, x0 = _initial(args)
    sch = scheme(args.scheme[0], _solver(args))
    if sch.is_gradient and ode.hamiltonian is None:
        raise ValidationError(f"{sch.name} needs a Hamiltonian system")
    run = integrate(sch, ode, x0, h, args.t_end)
    w = args.matfun_weight
    trace = run.cost_trace if w is None else None
    if trace is None:
        trace = np.full(len(run.times), math.nan)
        trace[-1] = run.cost_units(w)
    energies = run.energies if run.energies is not None else np.full(len(run.times), math.nan)
    cols = ["t"] + [f"y{i}" for i in range(run.dim)] + ["H", "cost"]
    rows = [(t, *y, e, c) for t, y, e, c in zip(run.times, run.states, energies, trace)]
    _emit(args, analysis.rows_to_csv(rows, cols))
    if run.status != "ok":
        raise NumericalFailure(run.message)
    if run.solver_warnings:
        print(f"warning: {run.solver_warnings} step(s) did not converge", file=sys.stderr)


def _bench_config(args):
    overrides = {"solver": _solver(args), "t_end": args.t_end}
    if args.matfun_weight is not None:
        overrides["matfun_weight"] = args.matfun_weight
    if args.baseline:
        overrides["baseline"] = args.baseline
    if args.preset:
        if args.schemes_given:
            overrides["schemes"] = tuple(args.scheme)
        if args.radius_given:
            overrides["radius"] = args.radius
        if getattr(args, "h_tilde", None):
            h = args.h_tilde
            overrides["h_tilde"] = tuple(h) if isinstance(h, list) else (h,)
        ppd = getattr(args, "points_per_decade", None) or 8
        try:
            return analysis.preset_config(args.preset, points_per_decade=ppd, **overrides)
        except KeyError as exc:
            raise ValidationError(exc.args[0]) from None
    if not args.schemes_given or not getattr(args, "h_tilde", None):
        raise ValidationError("without --preset give --scheme and --h-tilde")
    h = args.h_tilde
    overrides.update(radius=args.radius, schemes=tuple(args.scheme),
                     h_tilde=tuple(h) if isinstance(h, list) else (h,))
    overrides.setdefault("baseline", args.scheme[0])
    return analysis.BenchmarkConfig(**overrides)


def cmd_benchmark(args):
    try:
        config = _bench_config(args)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    rows = analysis.benchmark_figure(config)
    _emit(args, analysis.rows_to_csv(rows))
    failed = [r for r in rows if r.status == "failed"]
    if failed:
        print(f"note: {len(failed)} run(s) failed; see the status column", file=sys.stderr)


def cmd_order(args):
    if not args.scheme:
        raise ValidationError("order needs at least one --scheme")
    ode, x0 = _initial(args)
    if args.step:
        steps = args.step
    else:
        steps = analysis.geometric_grid(0.1, 0.1 / 10**1.5, args.steps or 5)
    reference = _reference(args, ode, x0)
    lines = [f"{'scheme':12s} {'slope':>7s}  errors"]
    for name in args.scheme:
        sch = scheme(name, _solver(args))
        if sch.is_gradient and ode.hamiltonian is None:
            raise ValidationError(f"{name} needs a Hamiltonian system")
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", analysis.RegimeWarning)
                est = analysis.estimate_order(sch, ode, x0, reference, steps, args.t_end)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        except ArithmeticError as exc:
            raise NumericalFailure(f"{name}: {exc}") from None
        errs = " ".join(f"{e:.3e}" for e in est.errors)
        note = " (floor reached)" if caught else ""
        lines.append(f"{name:12s} {est.slope:7.3f}  {errs}{note}")
    _emit(args, "\n".join(lines) + "\n")


def cmd_stability(args):
    if not args.scheme:
        raise ValidationError("stability needs at least one --scheme")
    ode, x0 = _initial(args)
    grid = args.step or [1.0, 10.0, 100.0]
    n = args.steps or 100
    out = []
    for name in args.scheme:
        sch = scheme(name, _solver(args))
        if sch.is_gradient and ode.hamiltonian is None:
            raise ValidationError(f"{name} needs a Hamiltonian system")
        report = analysis.stability_audit(sch, ode, grid, n_steps=n, x0=x0, solver=_solver(args))
        out.append(report.format())
    _emit(args, "\n\n".join(out) + "\n")


def cmd_calibrate(args):
    if args.preset:
        try:
            p = analysis.PRESETS[args.preset]
        except KeyError:
            raise ValidationError(f"unknown preset {args.preset!r}; valid: "
                                  f"{', '.join(analysis.PRESETS)}") from None
        schemes = tuple(args.scheme) if args.schemes_given else p["schemes"]
        radius = args.radius if args.radius_given else p["radius"]
        baseline = args.baseline or p["baseline"]
        h_tilde = args.h_tilde or math.sqrt(p["h_max"] * p["h_min"])
    else:
        if not args.schemes_given or args.h_tilde is None:
            raise ValidationError("without --preset give --scheme and --h-tilde")
        schemes, radius = tuple(args.scheme), args.radius
        baseline = args.baseline or schemes[0]
        h_tilde = args.h_tilde
    for name in list(schemes) + [baseline]:
        if name not in CATALOG:
            raise ValidationError(f"unknown scheme {name!r}; valid: {', '.join(CATALOG)}")
    if not h_tilde > 0:
        raise ValidationError("--h-tilde must be positive")
    from .systems import anharmonic2d, circ_init, hamiltonian_to_ode
    try:
        x0 = circ_init(radius)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    ode = hamiltonian_to_ode(anharmonic2d())
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always", analysis.CalibrationWarning)
        cal = analysis.calibrate_lambda(schemes, ode, x0, h_tilde, baseline=baseline,
                                        solver=_solver(args), matfun_weight=args.matfun_weight)
    lines = [f"# R={radius:g} h_tilde={h_tilde:.6g} baseline={baseline} "
             f"converged={cal.converged} rounds={cal.rounds}"]
    for name, lam in cal.lambdas.items():
        lines.append(f"{name:12s} {lam:.6g}")
    if args.transcript:
        lines.append("# round scheme lambda cost_ratio")
        for t in cal.transcript:
            lines.append(f"{t['round']} {t['scheme']} {t['lambda']:.6g} {t['ratio']:.6g}")
    _emit(args, "\n".join(lines) + "\n")
    if not cal.converged:
        print("warning: calibration did not reach 1% cost equality", file=sys.stderr)


COMMANDS = {
    "integrate": cmd_integrate,
    "benchmark": cmd_benchmark,
    "order": cmd_order,
    "stability": cmd_stability,
    "calibrate": cmd_calibrate,
}


def run_cli(argv=None):
    """Entry point; returns the exit status instead of calling ``sys.exit``."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        if args.config:
            _apply_config(args, parser, read_config(args.config))
        args.schemes_given = bool(args.scheme)
        args.radius_given = args.radius is not None
        _finish(args)
        analysis.thread_count()
        COMMANDS[args.command](args)
    except (ValidationError, KeyError, ValueError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        print(f"lexint: error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, ArithmeticError) as exc:
        print(f"lexint: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main():
    sys.exit(run_cli())
