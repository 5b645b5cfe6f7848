"""``retarda`` command line.

Every invocation prints exactly one JSON line on stdout.  Exit status is 0 on
success, 2 for configuration or parse errors and 3 for numeric failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import catalog_document, catalog_names, load_catalog
from .history import PiecewiseHistory, history_from_literal, history_to_literal
from .io import write_atomic, write_json
from .reachability import ReachBound, estimate_reach, extend_reach_bound, fc_probe, geometric_grid
from .rhsdsl import SpecError, parse_system
from .signals import InputSignal, delayed_inputs, signal_from_literal, signal_to_literal
from .solver import SolveConfig, SolverError, lift_to_tds, solve_ode, solve_tds, trajectory_csv
from .stability import EnvelopeRefused

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
FILE_SCHEMA = 1


class ConfigError(Exception):
    pass


class NumericFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_system(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--system", type=Path, help="system spec JSON file")
    g.add_argument("--catalog", help="name of a bundled system")


def _add_solver(p):
    p.add_argument("--rel-tol", type=float, default=1e-9)
    p.add_argument("--abs-tol", type=float, default=1e-12)
    p.add_argument("--max-step", type=float, default=math.inf)


def _add_out(p, figures=True):
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    if figures:
        p.add_argument("--figures", action="store_true", help="also render PNG figures (needs matplotlib)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="retarda", description="Simulation and verification of systems with discrete delays.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="solve the delay system")
    _add_system(p)
    p.add_argument("--t-final", type=float, required=True)
    p.add_argument("--history", type=Path, help="history literal JSON (default: constant 1)")
    p.add_argument("--input", type=Path, help="input signal literal JSON (default: 0)")
    p.add_argument("--grid", type=int, default=0, help="sample on N+1 equidistant points instead of step nodes")
    _add_solver(p)
    _add_out(p)

    p = sub.add_parser("reduce", help="solve the delay system and the ODE driven by its delayed values")
    _add_system(p)
    p.add_argument("--t-final", type=float, required=True)
    p.add_argument("--history", type=Path)
    p.add_argument("--input", type=Path)
    _add_solver(p)
    _add_out(p, figures=False)

    p = sub.add_parser("lift", help="history reproducing an ODE solution on [0, delta)")
    _add_system(p)
    p.add_argument("--z0", type=_floats, required=True)
    p.add_argument("--v", type=Path, help="signal literal JSON with p*n components")
    p.add_argument("--v-const", type=_floats, help="constant value for v")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--input", type=Path)
    _add_solver(p)
    _add_out(p, figures=False)

    p = sub.add_parser("reach", help="sampled reachability table")
    _add_system(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--radius", type=float)
    g.add_argument("--radii", type=_floats)
    g.add_argument("--radius-range", type=_floats, metavar="LO,HI", help="geometric grid, 8 points per decade")
    p.add_argument("--t-final", type=float, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--times", type=int, default=10, help="number of time intervals")
    p.add_argument("--history-pieces", type=int, default=4)
    p.add_argument("--input-pieces", type=int, default=4)
    p.add_argument("--extend", type=int, default=1, help="also write the bound for n times the horizon")
    _add_solver(p)
    _add_out(p)

    p = sub.add_parser("fc-probe", help="search for finite escape")
    _add_system(p)
    p.add_argument("--r-max", type=float, required=True)
    p.add_argument("--t-final", type=float, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    _add_solver(p)
    _add_out(p, figures=False)

    p = sub.add_parser("stability", help="fit an envelope on continuous data and check it on L-infinity data")
    _add_system(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--check-seed", type=int)
    p.add_argument("--r-max", type=float, default=5.0)
    p.add_argument("--horizon", type=float, default=50.0)
    p.add_argument("--samples", type=int, default=1000, help="held-out samples in total")
    p.add_argument("--fit-samples", type=int, default=24, help="fit samples per radius")
    p.add_argument("--reach-samples", type=int, default=40)
    p.add_argument("--rel-tol", type=float, default=1e-8)
    p.add_argument("--abs-tol", type=float, default=1e-11)
    _add_out(p)

    p = sub.add_parser("verify", help="closed-form self checks of the solver")
    _add_out(p, figures=False)

    p = sub.add_parser("catalog", help="list bundled systems or print one")
    p.add_argument("name", nargs="?")
    return ap


# -- helpers -----------------------------------------------------------------


def _system(args):
    if args.catalog is not None:
        return load_catalog(args.catalog)
    path = args.system
    if not path.is_file():
        raise ConfigError(f"system file not found: {path}")
    return parse_system(path.read_text())


def _read_json(path: Path, what: str):
    if not path.is_file():
        raise ConfigError(f"{what} file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _history(args, sysdef) -> PiecewiseHistory:
    if args.history is None:
        return PiecewiseHistory.constant(np.ones(sysdef.n), sysdef.delays.max_delay)
    try:
        return history_from_literal(_read_json(args.history, "history"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"history {args.history}: {exc}") from None


def _input(args, sysdef):
    if getattr(args, "input", None) is None:
        return None
    try:
        u = signal_from_literal(_read_json(args.input, "input"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"input {args.input}: {exc}") from None
    if u.dim != sysdef.m:
        raise ConfigError(f"input has {u.dim} components, system has m={sysdef.m}")
    return u


def _cfg(args) -> SolveConfig:
    try:
        return SolveConfig(rel_tol=args.rel_tol, abs_tol=args.abs_tol, max_step=getattr(args, "max_step", math.inf))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _effective(args) -> dict:
    out = {}
    for k, v in vars(args).items():
        if isinstance(v, Path):
            v = str(v.resolve())
        elif isinstance(v, float) and not math.isfinite(v):
            v = repr(v)
        out[k] = v
    return out


def _escape_dict(esc):
    if esc is None:
        return None
    return {"t_star": esc.t_star, "magnitude": esc.magnitude, "last_step": esc.last_step, "confidence": esc.confidence}


# -- commands ----------------------------------------------------------------


def cmd_simulate(args):
    sysdef = _system(args)
    x0 = _history(args, sysdef)
    u = _input(args, sysdef)
    traj = solve_tds(sysdef, x0, u, args.t_final, _cfg(args))
    ts = None if args.grid <= 0 else np.linspace(0.0, traj.t_end, args.grid + 1)
    files = [
        write_atomic(args.out / "trajectory.csv", trajectory_csv(traj, ts)),
        write_json(args.out / "trajectory.json", {"schema": FILE_SCHEMA, "system": sysdef.to_document(), **traj.metadata()}),
    ]
    if args.figures:
        from .plotting import plot_trajectory

        files.append(plot_trajectory(traj, x0, args.out / "trajectory.png"))
    return {
        "t_end": traj.t_end,
        "x_final": [float(v) for v in traj(traj.t_end)],
        "escape": _escape_dict(traj.escape),
        "steps": traj.n_steps,
        "files": files,
    }


def cmd_reduce(args):
    sysdef = _system(args)
    x0 = _history(args, sysdef)
    u = _input(args, sysdef)
    cfg = _cfg(args)
    traj = solve_tds(sysdef, x0, u, args.t_final, cfg)
    if traj.escaped:
        raise NumericFailure(f"delay system escaped at t*={traj.escape.t_star:.6g}")
    v = delayed_inputs(x0, traj, sysdef.delays)
    ode = solve_ode(sysdef, x0.point_value, v, u, traj.t_end, cfg)
    nodes = np.union1d(traj.nodes, ode.nodes)
    nodes = nodes[nodes <= min(traj.t_end, ode.t_end)]
    dev = max(float(np.linalg.norm(traj(t) - ode(t))) for t in nodes)
    files = [
        write_json(args.out / "v.json", {"schema": FILE_SCHEMA, **signal_to_literal(v)}),
        write_atomic(args.out / "tds.csv", trajectory_csv(traj)),
        write_atomic(args.out / "ode.csv", trajectory_csv(ode)),
    ]
    return {"max_deviation": dev, "files": files}


def cmd_lift(args):
    sysdef = _system(args)
    width = sysdef.n * sysdef.p
    if (args.v is None) == (args.v_const is None):
        raise ConfigError("give exactly one of --v and --v-const")
    if args.v is not None:
        v = signal_from_literal(_read_json(args.v, "v"))
    else:
        vals = args.v_const if len(args.v_const) == width else args.v_const * width if len(args.v_const) == 1 else None
        if vals is None:
            raise ConfigError(f"--v-const needs 1 or {width} values")
        v = InputSignal.constant(vals, args.delta)
    if len(args.z0) != sysdef.n:
        raise ConfigError(f"--z0 needs {sysdef.n} values")
    try:
        h = lift_to_tds(sysdef, args.z0, v, args.delta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    u = _input(args, sysdef)
    cfg = _cfg(args)
    tds = solve_tds(sysdef, h, u, args.delta, cfg)
    ode = solve_ode(sysdef, args.z0, v, u, args.delta, cfg)
    if tds.escaped or ode.escaped:
        raise NumericFailure("escape inside the lift window")
    nodes = np.union1d(tds.nodes, ode.nodes)
    dev = max(float(np.linalg.norm(tds(t) - ode(t))) for t in nodes[nodes < args.delta])
    files = [write_json(args.out / "history.json", {"schema": FILE_SCHEMA, **history_to_literal(h)})]
    return {"max_deviation": dev, "files": files}


def _radii(args):
    if args.radius is not None:
        return [args.radius]
    if args.radii is not None:
        return args.radii
    if len(args.radius_range) != 2:
        raise ConfigError("--radius-range needs LO,HI")
    return list(geometric_grid(*args.radius_range))


def cmd_reach(args):
    sysdef = _system(args)
    if args.samples < 1 or args.t_final <= 0 or args.times < 1:
        raise ConfigError("need --samples >= 1, --t-final > 0 and --times >= 1")
    times = np.linspace(0.0, args.t_final, args.times + 1)
    table = estimate_reach(
        sysdef, _radii(args), args.t_final, args.samples, args.seed, _cfg(args), times,
        args.history_pieces, args.input_pieces,
    )
    files = [write_atomic(args.out / "reach.csv", table.to_csv())]
    summary = {
        "escaped": bool(table.any_escape),
        "estimate_at_horizon": {repr(float(r)): float(v) for r, v in zip(table.radii, table.sup_estimates[:, -1])},
    }
    if not table.any_escape:
        bound = ReachBound.from_table(table)
        files.append(write_atomic(args.out / "reach_bound.json", bound.to_json() + "\n"))
        if args.extend > 1:
            ext = extend_reach_bound(bound, args.extend)
            files.append(write_atomic(args.out / f"reach_bound_x{args.extend}.json", ext.to_json() + "\n"))
            summary["extended_extrapolated"] = ext.extrapolated
    if args.figures:
        from .plotting import plot_reach

        files.append(plot_reach(table, args.out / "reach.png"))
    summary["files"] = files
    return summary


def cmd_fc_probe(args):
    sysdef = _system(args)
    found = fc_probe(sysdef, args.r_max, args.t_final, args.samples, args.seed, cfg=_cfg(args))
    doc = {
        "schema": FILE_SCHEMA,
        "witnesses": [
            {
                "r": w.r,
                "t_star": w.t_star,
                "history": history_to_literal(w.x0),
                "input": None if w.u is None else signal_to_literal(w.u),
            }
            for w in found
        ],
    }
    files = [write_json(args.out / "fc_probe.json", doc)]
    return {"witnesses": len(found), "min_t_star": min((w.t_star for w in found), default=None), "files": files}


def cmd_stability(args):
    from .pipeline import PipelineSettings, run_gas_to_ugas

    sysdef = _system(args)
    if not sysdef.zero_equilibrium:
        raise ConfigError("stability pipeline needs a system with f(0, 0) = 0")
    settings = PipelineSettings(
        r_max=args.r_max,
        horizon=args.horizon,
        reach_samples=args.reach_samples,
        fit_samples=args.fit_samples,
        check_samples=args.samples,
        seed=args.seed,
        check_seed=args.check_seed,
        cfg=_cfg(args),
    )
    try:
        res = run_gas_to_ugas(sysdef, settings)
    except EnvelopeRefused as exc:
        raise NumericFailure(str(exc)) from None
    doc = res.bar_beta.to_dict()
    doc["settings"] = settings.as_dict()
    doc["margins"] = {"mu": res.mu.margin, "beta": res.beta.margin, "lipschitz_safety": 1.25}
    files = [
        write_json(args.out / "envelope.json", doc),
        write_atomic(args.out / "violations.csv", res.report.to_csv()),
    ]
    if args.figures:
        from .plotting import plot_envelope

        files.append(plot_envelope(res.bar_beta, np.linspace(0.5, args.r_max, 4), args.horizon, args.out / "envelope.png"))
    summary = {
        "violations": len(res.report.violations),
        "samples_checked": res.report.samples_checked,
        "tail_rate": res.beta.tail_rate,
        "timings": res.timings,
        "files": files,
    }
    if not res.ok:
        summary["status"] = "violations"
        raise NumericFailure(summary)
    return summary


def cmd_verify(args):
    checks = {}
    lin = load_catalog("linear-delay")
    tr = solve_tds(lin, PiecewiseHistory.constant(1.0, 1.0), None, 2.0)
    checks["method_of_steps"] = bool(abs(tr(1.0)[0]) <= 1e-8 and abs(tr(2.0)[0] + 0.5) <= 1e-8)
    grow = load_catalog("delay-growth")
    jump = PiecewiseHistory.piecewise_constant([-1.0, -0.5, 0.0], [0.0, 1.0], [0.0])
    tj = solve_tds(grow, jump, None, 1.5)
    checks["jump_history"] = bool(abs(tj(1.0)[0] - 0.5) <= 1e-8 and np.any(np.abs(tj.kinks() - 0.5) <= 1e-9))
    quad = load_catalog("quadratic-blowup")
    checks["escape"] = all(  # noqa: C419
        (e := solve_tds(quad, PiecewiseHistory.constant(x, 1.0), None, 3.0).escape) is not None and abs(e.t_star - 1 / x) <= 0.01 / x
        for x in (1.0, 2.0)
    )
    files = [write_json(args.out / "verify.json", {"schema": FILE_SCHEMA, "checks": checks})]
    if not all(checks.values()):
        raise NumericFailure({"checks": checks, "files": files})
    return {"checks": checks, "files": files}


def cmd_catalog(args):
    if args.name is None:
        return {"systems": catalog_names()}
    return {"system": catalog_document(args.name)}


COMMANDS = {
    "simulate": cmd_simulate,
    "reduce": cmd_reduce,
    "lift": cmd_lift,
    "reach": cmd_reach,
    "fc-probe": cmd_fc_probe,
    "stability": cmd_stability,
    "verify": cmd_verify,
    "catalog": cmd_catalog,
}


def _jsonable(obj):
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    raise TypeError(type(obj).__name__)


def _emit(summary: dict, stream=None):
    stream = sys.stdout if stream is None else stream
    stream.write(json.dumps(summary, default=_jsonable, separators=(",", ":")) + "\n")
    stream.flush()


def run_command(argv=None) -> int:
    parser = build_parser()
    summary = {"command": None}
    try:
        args = parser.parse_args(argv)
        summary["command"] = args.command
        summary["config"] = _effective(args)
        result = COMMANDS[args.command](args)
        summary.update({"status": "ok", **result})
        code = EXIT_OK
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ConfigError, SpecError, ValueError) as exc:
        summary.update({"status": "config-error", "error": str(exc)})
        code = EXIT_CONFIG
    except NumericFailure as exc:
        detail = exc.args[0]
        summary.update({"status": "numeric-failure"})
        if isinstance(detail, dict):
            summary.update(detail)
        else:
            summary["error"] = str(detail)
        code = EXIT_NUMERIC
    except SolverError as exc:
        summary.update({"status": "numeric-failure", "error": str(exc)})
        code = EXIT_NUMERIC
    _emit(summary)
    return code


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
