"""``ctmc-check`` command line.

Exit status: 0 on success, 1 on a domain error (printed to stderr as a
single ``error[<kind>]: ...`` line), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .checker import CheckConfig, ModelChecker
from .compose import Ctmc, build_state_space, export_chain
from .errors import CtmcCheckError, ExperimentError, IoError
from .lang import ast as A
from .lang import load_model, load_rates, parse_properties, parse_property
from .numerics import SolverConfig, UniformizationConfig

DEFAULT_EPSILON = 1e-12
DEFAULT_TOLERANCE = 1e-9
DEFAULT_MAX_ITERS = 1_000_000
DEFAULT_UNIF_FACTOR = 1.02
DEFAULT_MAX_STATES = 10_000_000


class UsageError(Exception):
    pass


# -- argument parsing -------------------------------------------------------

def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {kind.__name__} value {text!r}") from None
        if not (v > 0 and math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return v
    return parse


def _non_negative_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid int value {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text!r}")
    return v


def _unif_factor(text):
    v = _positive(float)(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text!r}")
    return v


def parse_times(text: str) -> list[float]:
    """``0,1,2.5`` or ``start:stop:step`` (inclusive of stop)."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [start + i * step for i in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"bad time grid {text!r}; use 'a,b,c' or 'start:stop:step'") from None


def _const_assignment(text: str):
    name, sep, value = text.partition("=")
    if not sep or not name.strip():
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    return name.strip(), value.strip()


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("model", help="model file")
    p.add_argument("--rates", metavar="FILE",
                   help="rate file of 'name = value' lines (default: <model>.rates next to "
                        "the model, if present)")
    p.add_argument("--const", metavar="NAME=VALUE", action="append", type=_const_assignment,
                   default=[], help="set a constant; overrides the rate file (repeatable)")
    p.add_argument("--max-states", type=_positive(int), default=DEFAULT_MAX_STATES,
                   help="abort exploration beyond this many states (default: %(default)s)")


def _add_numeric_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=_positive(float), default=DEFAULT_EPSILON,
                   help="uniformization truncation error (default: %(default)s)")
    p.add_argument("--unif-factor", type=_unif_factor, default=DEFAULT_UNIF_FACTOR,
                   help="uniformization rate as a multiple of the maximum exit rate "
                        "(default: %(default)s)")
    p.add_argument("--solver", choices=("gauss-seidel", "jacobi"), default="gauss-seidel",
                   help="iterative linear solver (default: %(default)s)")
    p.add_argument("--tolerance", type=_positive(float), default=DEFAULT_TOLERANCE,
                   help="solver convergence threshold on the relative change "
                        "(default: %(default)s)")
    p.add_argument("--max-iters", type=_positive(int), default=DEFAULT_MAX_ITERS,
                   help="solver iteration cap (default: %(default)s)")


def _add_output_args(p: argparse.ArgumentParser, csv: bool = True) -> None:
    p.add_argument("--json", action="store_true", help="print structured results on stdout")
    p.add_argument("--timing", action="store_true",
                   help="include wall-clock timings in the output")
    if csv:
        p.add_argument("-o", "--output", metavar="FILE", help="write the CSV table to FILE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctmc-check",
        description="Model checking of CTMCs written in a guarded-command language.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("build", help="explore the state space and report its size")
    _add_model_args(p)
    _add_output_args(p, csv=False)
    p.add_argument("--stats", action="store_true",
                   help="print a Model/States/Transitions table row")
    p.add_argument("--name", help="model name in the statistics row (default: file stem)")

    p = sub.add_parser("check", help="check CSL/reward properties")
    _add_model_args(p)
    _add_numeric_args(p)
    _add_output_args(p, csv=False)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("-p", "--property", action="append", metavar="PROP",
                   help="property text (repeatable)")
    g.add_argument("-f", "--property-file", metavar="FILE",
                   help="file with one property per line ('#' comments)")
    p.add_argument("--all-states", action="store_true",
                   help="also report the value of every state")

    p = sub.add_parser("sweep", help="evaluate time-parametrized queries for model variants")
    p.add_argument("target", help="experiment file (.toml) or model file")
    p.add_argument("--rates", metavar="FILE", help="rate file (overrides the experiment)")
    p.add_argument("--const", metavar="NAME=VALUE", action="append", type=_const_assignment,
                   default=[], help="set a constant (repeatable)")
    p.add_argument("--max-states", type=_positive(int), default=DEFAULT_MAX_STATES,
                   help="abort exploration beyond this many states (default: %(default)s)")
    _add_numeric_args(p)
    p.add_argument("--json", action="store_true", help="print structured results on stdout")
    p.add_argument("--expr", action="append", metavar="EXPR",
                   help="state expression; adds the query P=? [ F[{t},{t}] EXPR ]")
    p.add_argument("--query", action="append", metavar="TEMPLATE",
                   help="query template using {t} for the time instant")
    p.add_argument("--times", type=parse_times, metavar="GRID",
                   help="'a,b,c' or 'start:stop:step'")
    p.add_argument("--variant", action="append", metavar="NAME=ID[,ID...]",
                   help="variant removing the listed reactions ('label:X' for a label); "
                        "'NAME=' is the unmodified model")
    p.add_argument("-o", "--output", action="append", metavar="FILE",
                   help="CSV output per query, in order")

    p = sub.add_parser("steady", help="steady-state probability table of molecules")
    _add_model_args(p)
    _add_numeric_args(p)
    _add_output_args(p)
    p.add_argument("--molecules", metavar="A,B,...",
                   help="variables to tabulate (default: every 0/1 variable)")
    p.add_argument("--json-output", metavar="FILE", help="full-precision JSON table")

    p = sub.add_parser("rewards", help="expected cumulative reward curves")
    _add_model_args(p)
    _add_numeric_args(p)
    _add_output_args(p)
    p.add_argument("--blocks", metavar="A,B,...", help="reward structures (default: all)")
    p.add_argument("--times", type=parse_times, required=True, metavar="GRID")

    p = sub.add_parser("knockout-scan", help="single-reaction knockouts against the wildtype")
    _add_model_args(p)
    _add_numeric_args(p)
    _add_output_args(p)
    p.add_argument("--a", dest="formula_a", required=True, metavar="FORMULA",
                   help="first axis: state formula (checked as S=?) or a full =? query")
    p.add_argument("--b", dest="formula_b", required=True, metavar="FORMULA",
                   help="second axis, as --a")
    p.add_argument("--tolerance-quadrant", type=_positive(float), default=1e-6,
                   help="differences up to this size count as unchanged")

    p = sub.add_parser("simulate", help="stochastic simulation")
    _add_model_args(p)
    p.add_argument("--seed", type=_non_negative_int, default=0, help="random seed")
    p.add_argument("--horizon", type=_positive(float), help="trajectory length")
    p.add_argument("--run", type=_non_negative_int, default=0,
                   help="index of the run to trace")
    p.add_argument("--estimate", metavar="EXPR",
                   help="estimate P(EXPR at --time) from --runs runs instead of tracing")
    p.add_argument("--time", type=_positive(float), help="time instant for --estimate")
    p.add_argument("--runs", type=_positive(int), default=10_000, help="runs for --estimate")
    p.add_argument("--json", action="store_true")
    p.add_argument("-o", "--output", metavar="FILE", help="trajectory CSV (default: stdout)")

    p = sub.add_parser("export", help="write .tra/.sta/.lab files")
    _add_model_args(p)
    p.add_argument("--out", metavar="STEM", help="output path stem (default: model path stem)")
    p.add_argument("--json", action="store_true")
    return parser


# -- helpers ----------------------------------------------------------------

def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_model(path) -> A.ModelAst:
    from .lang import parse_model
    return parse_model(_read_text(path))


def _constants(args, model_path: Optional[Path] = None, rates: Optional[str] = None) -> dict:
    from .lang import parse_rates
    out: dict = {}
    rates = rates or getattr(args, "rates", None)
    if rates is None and model_path is not None:
        sibling = model_path.with_suffix(".rates")
        if sibling.is_file():
            rates = sibling
    if rates is not None:
        out.update(parse_rates(_read_text(rates)))
    for name, value in args.const:
        out[name] = parse_rates(f"{name} = {value}")[name]
    return out


def _config(args) -> CheckConfig:
    return CheckConfig(
        UniformizationConfig(epsilon=args.epsilon, factor=args.unif_factor),
        SolverConfig(method=args.solver, epsilon=args.tolerance, max_iterations=args.max_iters))


def _build(args) -> tuple[A.ModelAst, Ctmc, dict]:
    path = Path(args.model)
    model = _load_model(path)
    constants = _constants(args, path)
    ctmc = build_state_space(model, constants, max_states=args.max_states, name=path.stem)
    return model, ctmc, constants


def _emit_json(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, allow_nan=False)
    sys.stdout.write("\n")


def _fmt(v: float) -> str:
    return "%.12g" % v


# -- subcommands ------------------------------------------------------------

def cmd_build(args) -> int:
    started = time.perf_counter()
    _, ctmc, _ = _build(args)
    elapsed = time.perf_counter() - started
    name = args.name or Path(args.model).stem
    info = {"model": name, "states": ctmc.n_states, "transitions": ctmc.n_transitions,
            "deadlocks": int(ctmc.deadlocks.size),
            "initial": ctmc.state(ctmc.init_index)}
    if args.timing:
        info["build_seconds"] = round(elapsed, 6)
    if args.json:
        _emit_json(info)
    elif args.stats:
        width = max(len(name), len("Model"))
        print(f"{'Model':<{width}}  {'States':>12}  {'Transitions':>12}")
        print(f"{name:<{width}}  {ctmc.n_states:>12,}  {ctmc.n_transitions:>12,}")
    else:
        print(f"states: {ctmc.n_states}")
        print(f"transitions: {ctmc.n_transitions}")
        print(f"deadlocks: {info['deadlocks']}")
        if args.timing:
            print(f"build time: {elapsed:.3f}s")
    return 0


def cmd_check(args) -> int:
    model, ctmc, _ = _build(args)
    if args.property_file:
        formulas = parse_properties(_read_text(args.property_file), model)
    else:
        formulas = [parse_property(p, model) for p in args.property]
    checker = ModelChecker(ctmc, _config(args))
    results = []
    for f in formulas:
        r = checker.check(f, all_states=args.all_states)
        if not args.timing:
            r.diagnostics.pop("wall_time_s", None)
        results.append(r)
    if args.json:
        _emit_json({"model": ctmc.name, "states": ctmc.n_states, "results":
                    [r.to_json() for r in results]})
        return 0
    for r in results:
        if r.is_query:
            print(f"{r.formula}: {'inf' if r.infinite else _fmt(r.value)}")
        else:
            print(f"{r.formula}: {'true' if r.holds else 'false'} "
                  f"({r.satisfying.size} of {ctmc.n_states} states)")
        if args.all_states and r.values is not None:
            inf = r.values_infinite
            for i, v in enumerate(r.values):
                shown = "inf" if inf is not None and inf[i] else _fmt(v)
                print(f"  {i}:{tuple(ctmc.states[i].tolist())} {shown}")
        if args.timing:
            print(f"  time: {r.diagnostics.get('wall_time_s', 0):.3f}s")
    return 0


def _parse_variant(text: str):
    from .harness import parse_edit
    name, sep, ids = text.partition("=")
    if not sep or not name:
        raise UsageError(f"--variant expects NAME=ID[,ID...], got {text!r}")
    return name, [parse_edit(x) for x in ids.split(",") if x.strip()]


def cmd_sweep(args) -> int:
    from .harness import ExperimentSpec, load_experiment, run_experiment
    target = Path(args.target)
    queries = list(args.query or []) + ["P=? [ F[{t},{t}] " + e + " ]" for e in args.expr or []]
    variants = dict(_parse_variant(v) for v in args.variant) if args.variant else None
    outputs = [Path(o) for o in args.output] if args.output else None
    if target.suffix == ".toml":
        if not target.is_file():
            raise IoError(f"cannot read {target}: no such file")
        spec = load_experiment(target)
        if queries and outputs is None and spec.outputs:
            outputs = []  # the experiment's outputs belong to its own queries
        spec = spec.with_overrides(queries=queries or None, times=args.times,
                                   variants=variants, outputs=outputs,
                                   rates=Path(args.rates) if args.rates else None)
    else:
        if not queries or args.times is None:
            raise UsageError("sweep on a model file needs --times and --expr or --query")
        rates = Path(args.rates) if args.rates else None
        if rates is None and target.with_suffix(".rates").is_file():
            rates = target.with_suffix(".rates")
        spec = ExperimentSpec(model=target, times=args.times, queries=queries,
                              variants=variants or {"WildType": []}, outputs=outputs or [],
                              rates=rates)
    if not spec.model.is_file():
        raise IoError(f"cannot read {spec.model}: no such file")
    if spec.rates is not None and not spec.rates.is_file():
        raise IoError(f"cannot read {spec.rates}: no such file")
    for name, value in args.const:
        from .lang import parse_rates
        spec.constants[name] = parse_rates(f"{name} = {value}")[name]
    series = run_experiment(spec, _config(args), max_states=args.max_states)
    if args.json:
        _emit_json({"queries": spec.queries, "series": [s.to_json() for s in series]})
    elif not spec.outputs:
        for q, s in zip(spec.queries, series):
            print(f"# {q}")
            print(",".join(["t", *s.columns]))
            for t, row in zip(s.times, s.values):
                print(",".join([_fmt(t), *(_fmt(v) for v in row)]))
    else:
        for out in spec.outputs:
            print(f"wrote {out}")
    return 0


def _binary_variables(model: A.ModelAst, constants) -> list[str]:
    from .lang import evaluate, resolve_constants
    env = resolve_constants(model, constants)
    return [v.name for v in model.variables
            if evaluate(v.low, env) == 0 and evaluate(v.high, env) >= 1]


def cmd_steady(args) -> int:
    from .harness import Variant, steady_state_table
    path = Path(args.model)
    model = _load_model(path)
    constants = _constants(args, path)
    molecules = ([m.strip() for m in args.molecules.split(",") if m.strip()]
                 if args.molecules else _binary_variables(model, constants))
    known = {v.name for v in model.variables}
    for m in molecules:
        if m not in known:
            raise ExperimentError(f"unknown variable {m!r}")
    table = steady_state_table(Variant(path.stem, model, constants), molecules, _config(args))
    if args.output:
        table.write_csv(args.output)
    if args.json_output:
        table.write_json(args.json_output)
    if args.json:
        _emit_json(table.to_json())
    elif not args.output:
        for r in table.rows:
            print(f"{r.molecule},{'' if r.value is None else '%.2f' % r.value}"
                  + (f",{r.error}" if r.error else ""))
    return 0 if all(r.error is None for r in table.rows) else 1


def cmd_rewards(args) -> int:
    from .harness import Variant, reward_curves
    path = Path(args.model)
    model = _load_model(path)
    constants = _constants(args, path)
    blocks = ([b.strip() for b in args.blocks.split(",") if b.strip()]
              if args.blocks else [r.name for r in model.rewards])
    if not blocks:
        raise ExperimentError("model defines no reward structures")
    series = reward_curves(Variant(path.stem, model, constants), blocks, args.times,
                           _config(args))
    _write_series(args, series)
    return 0


def _write_series(args, series) -> None:
    if args.output:
        series.write_csv(args.output)
    if args.json:
        _emit_json(series.to_json())
    elif not args.output:
        print(",".join([series.time_header, *series.columns]))
        for t, row in zip(series.times, series.values):
            print(",".join([_fmt(t), *(_fmt(v) for v in row)]))


def cmd_knockout(args) -> int:
    from .harness import knockout_scan
    path = Path(args.model)
    model = _load_model(path)
    constants = _constants(args, path)
    scan = knockout_scan(model, args.formula_a, args.formula_b, constants, _config(args),
                         tolerance=args.tolerance_quadrant, max_states=args.max_states)
    if args.output:
        scan.write_csv(args.output)
    if args.json:
        _emit_json(scan.to_json())
    elif not args.output:
        print(",".join(scan.HEADER))
        for r in scan.rows:
            print(",".join([r.reaction, r.name, "" if r.a is None else _fmt(r.a),
                            "" if r.b is None else _fmt(r.b), r.quadrant, r.error or ""]))
    return 0


def cmd_simulate(args) -> int:
    from .sim import estimate_transient, simulate, write_trajectory_csv
    if args.estimate is None and args.horizon is None:
        raise UsageError("simulate needs --horizon (trace) or --estimate with --time")
    if args.estimate is not None and args.time is None:
        raise UsageError("--estimate needs --time")
    _, ctmc, _ = _build(args)
    if args.estimate is not None:
        p, half = estimate_transient(ctmc, args.estimate, args.time, args.runs, args.seed)
        if args.json:
            _emit_json({"expression": args.estimate, "time": args.time, "runs": args.runs,
                        "seed": args.seed, "estimate": p, "half_width": half})
        else:
            print(f"{_fmt(p)} +/- {_fmt(half)}")
        return 0
    traj = simulate(ctmc, args.seed, args.horizon, run=args.run)
    if args.output:
        write_trajectory_csv(ctmc, traj, args.output)
    if args.json:
        _emit_json({"seed": args.seed, "run": args.run, "horizon": args.horizon,
                    "states": list(traj.states), "sojourns": list(traj.sojourns)})
    elif not args.output:
        print(",".join(["time", "stateIndex", *(v.name for v in ctmc.variables)]))
        for t, s in zip(traj.entry_times(), traj.states):
            print(",".join([_fmt(t), str(s), *map(str, ctmc.states[s].tolist())]))
    return 0


def cmd_export(args) -> int:
    _, ctmc, _ = _build(args)
    stem = Path(args.out) if args.out else Path(args.model).with_suffix("")
    if stem.parent and not stem.parent.exists():
        raise IoError(f"output directory {stem.parent} does not exist")
    paths = export_chain(ctmc, stem)
    if args.json:
        _emit_json({"files": [str(p) for p in paths]})
    else:
        for p in paths:
            print(f"wrote {p}")
    return 0


COMMANDS = {
    "build": cmd_build, "check": cmd_check, "sweep": cmd_sweep, "steady": cmd_steady,
    "rewards": cmd_rewards, "knockout-scan": cmd_knockout, "simulate": cmd_simulate,
    "export": cmd_export,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except CtmcCheckError as exc:
        print(f"error[{exc.kind}]: {_one_line(str(exc))}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {_one_line(str(exc))}", file=sys.stderr)
        return 1
    return 0


def _one_line(text: str) -> str:
    return " ".join(text.split())


if __name__ == "__main__":
    sys.exit(main())
