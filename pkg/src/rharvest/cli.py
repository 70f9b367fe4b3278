"""Command-line entry point: ``rharvest <command> [flags]``.

Exit codes: 0 ok, 2 usage/parse error, 3 blow-down, 4 invalid bracket,
5 reproduction failure.  Data goes to stdout (or ``--out``), diagnostics to
stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import exact, harvest, periodic
from .expr import ExprError, parse
from .ivp import HarvestRHS, Status, integrate_ivp
from .quad import ImproperPolicy
from .reproduce import format_table, reproduce

EXIT_OK, EXIT_USAGE, EXIT_BLOWDOWN, EXIT_BRACKET, EXIT_REPRO = 0, 2, 3, 4, 5
COMMANDS = ("solve", "classify", "critical-k", "separation-test", "special-solution", "periodic", "reproduce-paper")


class UsageError(Exception):
    pass


def default_horizon() -> float:
    raw = os.environ.get("RH_DEFAULT_HORIZON")
    if raw is None:
        return harvest.DEFAULT_HORIZON
    try:
        value = float(raw)
    except ValueError:
        raise UsageError(f"RH_DEFAULT_HORIZON is not a number: {raw!r}") from None
    if not value > 0:
        raise UsageError("RH_DEFAULT_HORIZON must be positive")
    return value


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment; keys use flag names."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _positive(name):
    def conv(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not (v > 0 and math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"{name} must be positive and finite, got {text!r}")
        return v
    return conv


def _nonnegative(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file mirroring the flags; flags override it")
    common.add_argument("--a", help="growth coefficient a(t)")
    common.add_argument("--gamma", help="harvest profile gamma(t)")
    common.add_argument("--b", help="self-limitation coefficient b(t) (default 1)")
    common.add_argument("--k", type=_nonnegative, help="harvest intensity")
    common.add_argument("--z0", type=float, help="initial value z(0)")
    common.add_argument("--t-end", type=_positive("--t-end"), help="end time for solve")
    common.add_argument("--period", type=_positive("--period"), help="period T of the coefficients")
    common.add_argument("--k-lo", type=_nonnegative, help="lower end of a k bracket")
    common.add_argument("--k-hi", type=_nonnegative, help="upper end of a k bracket")
    common.add_argument("--tol", type=_positive("--tol"), help="tolerance (meaning depends on command)")
    common.add_argument("--horizon", type=_positive("--horizon"), help="time horizon (default $RH_DEFAULT_HORIZON or 200)")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None)

    parser = argparse.ArgumentParser(prog="rharvest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="integrate one orbit of the harvested equation")
    p.add_argument("--dt", type=float, default=0.1, help="output sampling step; 0 writes accepted steps")

    sub.add_parser("classify", parents=[common],
                   help="fate of z(0)=z0 (Bernoulli without --k, harvested with --k)")
    sub.add_parser("critical-k", parents=[common], help="bisection search for the critical harvest")
    p = sub.add_parser("separation-test", parents=[common], help="verdict on the separation integral for p")
    p.add_argument("--p", required=False, help="particular solution p(t) (closed form)")
    sub.add_parser("special-solution", parents=[common], help="negative solution separated from zero")
    p = sub.add_parser("periodic", parents=[common], help="branch diagram of periodic solutions")
    p.add_argument("--k-step", type=_positive("--k-step"), default=0.05)
    p.add_argument("--turning-point", action="store_true", help="locate the fold instead of a diagram")
    p = sub.add_parser("reproduce-paper", parents=[common], help="re-run the worked examples")
    p.add_argument("--rows", help="comma-separated subset of rows")
    return parser


EXPR_FLAGS = ("--a", "--gamma", "--b", "--p")


def _glue_expressions(argv: list[str]) -> list[str]:
    """Attach expression values to their flag so that ``--a -1`` is not read as an option."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] in EXPR_FLAGS and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    argv = _glue_expressions(argv)
    cfg_path = None
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            cfg_path = argv[i + 1]
        elif arg.startswith("--config="):
            cfg_path = arg.split("=", 1)[1]
    if cfg_path:
        cfg = read_config(cfg_path)
        # re-feed config values through argparse so they are validated like flags
        cfg_argv = [f"--{key.replace('_', '-')}={value}" for key, value in cfg.items()]
        command = next((a for a in argv if a in COMMANDS), None)
        if command is None:
            raise UsageError("a command is required")
        defaults = vars(parser.parse_args([command] + cfg_argv))
        defaults.pop("command")
        for action in parser._subparsers._group_actions[0].choices[command]._actions:
            if action.dest in defaults and defaults[action.dest] is not None:
                action.default = defaults[action.dest]
    return parser.parse_args(argv)


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError("missing required flag(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _write(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)  # "inf", "-inf", "nan": keeps the output strict JSON
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _json(obj) -> str:
    return json.dumps(_finite(json.loads(json.dumps(obj, default=str))), indent=2, allow_nan=False) + "\n"


def cmd_solve(args) -> int:
    _require(args, "a", "z0")
    t_end = args.t_end or args.horizon or default_horizon()
    rhs = HarvestRHS(parse(args.a), parse(args.gamma or "0"), args.k or 0.0,
                     None if args.b is None else parse(args.b))
    traj = integrate_ivp(rhs, args.z0, 0.0, t_end)
    if args.dt and args.dt > 0:
        n = int(math.floor(traj.t_end / args.dt + 1e-9))
        ts = np.round(np.arange(n + 1) * args.dt, 12)
        if ts[-1] < traj.t_end and traj.completed:
            ts = np.append(ts, traj.t_end)
    else:
        ts = traj.times
    if args.format == "json":
        _write(args, _json({**traj.sidecar(), "samples": [[float(t), traj(float(t))] for t in ts]}))
    else:
        _write(args, traj.to_csv(ts))
        if args.out:
            Path(args.out + ".json").write_text(traj.to_json() + "\n")
    if traj.status is Status.BLOWDOWN:
        print(f"blow-down: z <= -1e9 at t_est={traj.t_est:.12g}", file=sys.stderr)
        return EXIT_BLOWDOWN
    if traj.status is Status.UNDERFLOW:
        print(f"step size underflow at t={traj.t_end:.12g}", file=sys.stderr)
    return EXIT_OK


def cmd_classify(args) -> int:
    _require(args, "a", "z0")
    horizon = args.horizon or default_horizon()
    if args.k is not None:
        _require(args, "gamma")
        fate = harvest.fate_of_initial(args.a, args.gamma, args.k, args.z0, horizon,
                                       b=args.b)
    else:
        b = args.b or "1"
        if args.z0 > 0:
            fate = exact.classify_positive(args.a, b)
        elif args.z0 < 0:
            fate = exact.classify_negative(args.a, b, args.z0)
        else:
            fate = exact.Fate(exact.FateKind.INCONCLUSIVE, diagnostics={"note": "z0 = 0 is the trivial solution"})
    _write(args, _json(fate.to_json()))
    return EXIT_OK


def cmd_critical_k(args) -> int:
    _require(args, "a", "gamma")
    horizon = args.horizon or default_horizon()
    k_lo = 0.0 if args.k_lo is None else args.k_lo
    if args.k_hi is None:
        _, k_hi = harvest.expand_bracket(args.a, args.gamma, max(k_lo, 1.0), horizon)
    else:
        k_hi = args.k_hi
    report = harvest.find_critical_k(args.a, args.gamma, k_lo, k_hi, args.tol or 1e-2, horizon, b=args.b)
    _write(args, _json(report.to_json()))
    return EXIT_OK


def cmd_separation_test(args) -> int:
    _require(args, "a", "p")
    if args.gamma is not None and args.k is not None:
        p = harvest.particular(args.p, args.k, args.a, args.gamma)
    else:
        p = harvest.particular(args.p, args.k or 0.0)
    verdict = harvest.separation_integral(args.a, p, ImproperPolicy(rel_tol=args.tol or 1e-8))
    _write(args, _json(verdict.to_json()))
    return EXIT_OK


def cmd_special_solution(args) -> int:
    _require(args, "a")
    horizon = args.horizon or default_horizon()
    sol = exact.special_solution(args.a, args.b or "1", horizon)
    _write(args, _json(sol.to_json()))
    return EXIT_OK


def cmd_periodic(args) -> int:
    _require(args, "a", "gamma", "period")
    if args.turning_point:
        k_bar, p = periodic.turning_point(args.a, args.gamma, args.period, args.tol or 1e-3,
                                          k_lo=args.k_lo or 0.0, k_hi=args.k_hi)
        out = {"k_bar": k_bar, "periodic_solution": p.to_json(),
               "floquet_integral": periodic.floquet_integral(args.a, p)}
        _write(args, _json(out))
        return EXIT_OK
    k_lo = args.k_lo if args.k_lo is not None else args.k_step
    k_hi = args.k_hi if args.k_hi is not None else 1.5
    n = int(round((k_hi - k_lo) / args.k_step))
    ks = np.round(k_lo + args.k_step * np.arange(n + 1), 12)
    diagram = periodic.branch_diagram(args.a, args.gamma, args.period, ks)
    _write(args, diagram.to_csv())
    print(diagram.turning_json(), file=sys.stderr)
    return EXIT_OK


def cmd_reproduce_paper(args) -> int:
    rows = [r.strip() for r in args.rows.split(",")] if args.rows else None
    try:
        results = reproduce(rows, args.tol)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    _write(args, format_table(results))
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"reproduction failed: {r.name}: expected {r.expected!r}, computed {r.computed!r}, "
              f"|delta|={r.delta:.3g} > tol {r.tol:g}", file=sys.stderr)
    return EXIT_REPRO if failed else EXIT_OK


HANDLERS = {
    "solve": cmd_solve,
    "classify": cmd_classify,
    "critical-k": cmd_critical_k,
    "separation-test": cmd_separation_test,
    "special-solution": cmd_special_solution,
    "periodic": cmd_periodic,
    "reproduce-paper": cmd_reproduce_paper,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        return HANDLERS[args.command](args)
    except SystemExit as exc:  # argparse
        return int(exc.code or 0)
    except (UsageError, ExprError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except harvest.InvalidBracket as exc:
        print(f"invalid bracket: {exc}", file=sys.stderr)
        return EXIT_BRACKET
    except (exact.NotConvergentError, harvest.ResidualError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
