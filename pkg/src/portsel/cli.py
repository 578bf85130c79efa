"""Command-line front end.

Subcommands:

* ``solve``       one (instance, target return) pair; prints the portfolio.
* ``frontier``    sweep all reference returns; writes a CSV frontier.
* ``compare``     run several named solver presets and print mean losses.
* ``sensitivity`` average loss as k or the minimum fraction varies.

All randomness flows from ``--seed``; repeating an invocation reproduces
its output byte for byte.  Floats are printed with 17 significant digits
and a dot decimal separator regardless of locale.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import PortselError, ValidationError
from .instance import load_instance, load_uef, validate_target_return
from .portfolio import best_of_random, evaluate, PenaltyState
from .neighborhood import Relation, StepPolicy
from .engine import RunnerConfig, Technique
from .tokenring import TokenRing
from .frontier import (
    SingleRunner,
    SolverSpec,
    SweepConfig,
    avg_percent_loss,
    sensitivity_study,
    solve_one,
    sweep,
)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _ts_runner(relation: str, q: float, *, fixed: bool = False, **kw) -> SingleRunner:
    step = StepPolicy(q) if fixed else StepPolicy.randomized(q)
    return SingleRunner(Technique.TABU, RunnerConfig(relation=Relation(relation), step=step, **kw))


def _hc_runner(relation: str, q: float, *, fixed: bool = False) -> SingleRunner:
    step = StepPolicy(q) if fixed else StepPolicy.randomized(q)
    return SingleRunner(
        Technique.HILL_CLIMBING,
        RunnerConfig(relation=Relation(relation), step=step, hc_mode="random"),
    )


def _sa_runner(relation: str, q: float, *, fixed: bool = False) -> SingleRunner:
    step = StepPolicy(q) if fixed else StepPolicy.randomized(q)
    return SingleRunner(
        Technique.SIMULATED_ANNEALING,
        RunnerConfig(relation=Relation(relation), step=step),
    )


def _ring(*components: tuple[str, float]) -> TokenRing:
    runners = tuple(
        (Technique.TABU, RunnerConfig(relation=Relation(rel), step=StepPolicy.randomized(q)))
        for rel, q in components
    )
    return TokenRing(runners=runners)


#: Named solver presets; the table2/table3 families reproduce the published
#: single-solver and token-ring comparison suites.
PRESETS: dict[str, Callable[[], SolverSpec]] = {
    "table2-ts-idid-fixed": lambda: _ts_runner("idid", 0.5, fixed=True),
    "table2-ts-idid-random": lambda: _ts_runner("idid", 0.4),
    "table2-ts-tid-fixed": lambda: _ts_runner("tid", 0.5, fixed=True),
    "table2-ts-tid-random": lambda: _ts_runner("tid", 0.3),
    "table2-ts-idr-fixed": lambda: _ts_runner("idr", 0.4, fixed=True),
    "table2-ts-idr-random": lambda: _ts_runner("idr", 0.4),
    "table2-sa-tid-fixed": lambda: _sa_runner("tid", 0.4, fixed=True),
    "table2-sa-tid-random": lambda: _sa_runner("tid", 0.4),
    "table2-sa-idid-fixed": lambda: _sa_runner("idid", 0.2, fixed=True),
    "table2-sa-idid-random": lambda: _sa_runner("idid", 0.5),
    "table2-hc-tid-fixed": lambda: _hc_runner("tid", 0.2, fixed=True),
    "table2-hc-tid-random": lambda: _hc_runner("tid", 0.2),
    "table2-hc-idid-fixed": lambda: _hc_runner("idid", 0.2, fixed=True),
    "table2-hc-idid-random": lambda: _hc_runner("idid", 0.1),
    "table3-1": lambda: _ring(("tid", 0.4), ("tid", 0.05)),
    "table3-2": lambda: _ring(("tid", 0.4), ("tid", 0.04), ("tid", 0.004)),
    "table3-3": lambda: _ring(("tid", 0.4), ("idr", 0.05)),
    "table3-4": lambda: _ring(("tid", 0.4), ("idr", 0.05), ("tid", 0.01)),
    "table3-5": lambda: _ring(("idid", 0.4), ("idid", 0.04)),
    "table3-6": lambda: _ring(("idid", 0.3), ("idid", 0.03), ("idid", 0.003)),
    "table3-7": lambda: _ring(("idid", 0.4), ("idr", 0.05)),
    "table3-8": lambda: _ring(("idid", 0.4), ("idr", 0.04), ("idid", 0.004)),
}


def _add_common(sub: argparse.ArgumentParser, *, uef_required: bool) -> None:
    sub.add_argument("--instance", required=True, help="instance file (OR-Library port format)")
    sub.add_argument("--uef", required=uef_required, help="reference frontier file (R V lines)")
    sub.add_argument("--k", type=int, default=None,
                     help="maximum number of held assets (default: 10, capped at n)")
    sub.add_argument("--eps", type=float, default=0.01, help="uniform minimum fraction per held asset")
    sub.add_argument("--delta", type=float, default=1.0, help="uniform maximum fraction per held asset")
    sub.add_argument("--seed", type=int, default=0, help="master seed; all randomness derives from it")
    sub.add_argument("--out", default=None, help="output file (default: stdout)")
    sub.add_argument("--config", default=None, help="key = value file mirroring the flags; flags win")


def _add_solver_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--preset", default=None, help="named solver preset (see compare --list)")
    sub.add_argument("--ring", default=None,
                     help="token ring of tabu runners, e.g. 'tid:0.4,idr:0.05' (random steps)")
    sub.add_argument("--solver", choices=[t.value for t in Technique], default="ts")
    sub.add_argument("--nbh", choices=[r.value for r in Relation], default="tid")
    sub.add_argument("--q", type=float, default=0.3, help="step base")
    sub.add_argument("--d", type=float, default=None,
                     help="step spread (default: equal to --q, i.e. fully random step)")
    sub.add_argument("--tenure-min", type=int, default=10)
    sub.add_argument("--tenure-max", type=int, default=25)
    sub.add_argument("--idle", type=int, default=1000, help="stop after this many non-improving iterations")
    sub.add_argument("--iters", type=int, default=50_000, help="hard per-run iteration cap")
    sub.add_argument("--hc-mode", choices=["random", "steepest"], default="random")
    sub.add_argument("--sa-t0", type=float, default=None)
    sub.add_argument("--sa-alpha", type=float, default=0.95)
    sub.add_argument("--sa-plateau", type=int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="portsel",
        description="Local-search solvers for constrained mean-variance portfolio selection.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    solve = subs.add_parser("solve", help="solve one target return and print the portfolio")
    _add_common(solve, uef_required=False)
    _add_solver_flags(solve)
    solve.add_argument("--return", dest="r_target", type=float, required=True,
                       help="required expected return")
    solve.add_argument("--init-draws", type=int, default=100)

    frontier = subs.add_parser("frontier", help="sweep the reference returns and write a CSV frontier")
    _add_common(frontier, uef_required=True)
    _add_solver_flags(frontier)
    frontier.add_argument("--trials", type=int, default=4)
    frontier.add_argument("--init-draws", type=int, default=100)
    frontier.add_argument("--no-warm-start", action="store_true")
    frontier.add_argument("--workers", type=int, default=1,
                          help="worker processes for the independent trials")

    compare = subs.add_parser("compare", help="run several named presets and summarize mean losses")
    _add_common(compare, uef_required=True)
    compare.add_argument("--presets", nargs="+", default=None,
                         help="preset names; default: the whole table2/table3 family")
    compare.add_argument("--list", action="store_true", help="list preset names and exit")
    compare.add_argument("--trials", type=int, default=4)
    compare.add_argument("--init-draws", type=int, default=100)
    compare.add_argument("--no-warm-start", action="store_true")
    compare.add_argument("--workers", type=int, default=1)

    sens = subs.add_parser("sensitivity", help="average loss versus k or the minimum fraction")
    _add_common(sens, uef_required=True)
    _add_solver_flags(sens)
    sens.add_argument("--param", choices=["k", "eps"], required=True)
    sens.add_argument("--values", required=True,
                      help="comma-separated parameter values, e.g. 5,10,20,30,40")
    sens.add_argument("--trials", type=int, default=4)
    sens.add_argument("--init-draws", type=int, default=100)
    sens.add_argument("--no-warm-start", action="store_true")
    sens.add_argument("--workers", type=int, default=1)

    return parser


_CONFIG_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _apply_config_file(args: argparse.Namespace, argv: Sequence[str]) -> None:
    """Fill flags the user did not pass from the key = value config file."""
    if not getattr(args, "config", None):
        return
    explicit = set()
    for tok in argv:
        if tok.startswith("--"):
            explicit.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    path = Path(args.config)
    if not path.exists():
        raise PortselError(f"config file not found: {path}")
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PortselError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise PortselError(f"{path}:{lineno}: unknown option {key!r}")
        if dest in explicit:
            continue
        current = getattr(args, dest)
        if isinstance(current, bool):
            try:
                setattr(args, dest, _CONFIG_BOOL[value.lower()])
            except KeyError:
                raise PortselError(f"{path}:{lineno}: bad boolean {value!r}") from None
        elif isinstance(current, int) and not isinstance(current, bool):
            setattr(args, dest, int(value))
        elif isinstance(current, float):
            setattr(args, dest, float(value))
        else:
            setattr(args, dest, value)


def _solver_from_args(args: argparse.Namespace) -> SolverSpec:
    if args.preset:
        try:
            return PRESETS[args.preset]()
        except KeyError:
            raise PortselError(f"unknown preset {args.preset!r}; compare --list shows them") from None
    if args.ring:
        components = []
        for part in args.ring.split(","):
            rel, _, q = part.strip().partition(":")
            if not q:
                raise PortselError(f"bad ring component {part!r}; expected relation:step")
            components.append((rel, float(q)))
        return _ring(*components)
    relation = Relation(args.nbh)
    spread = args.q if args.d is None else args.d
    step = StepPolicy(base=args.q, spread=spread)
    cfg = RunnerConfig(
        relation=relation,
        step=step,
        max_idle=args.idle,
        max_iters=args.iters,
        tenure_min=args.tenure_min,
        tenure_max=args.tenure_max,
        hc_mode=args.hc_mode,
        sa_t0=args.sa_t0,
        sa_alpha=args.sa_alpha,
        sa_plateau=args.sa_plateau,
    )
    return SingleRunner(Technique(args.solver), cfg)


def _load_problem(args: argparse.Namespace):
    return load_instance(
        args.instance, min_frac=args.eps, max_frac=args.delta, max_assets=args.k
    )


def _emit(args: argparse.Namespace, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_solve(args: argparse.Namespace) -> int:
    inst = _load_problem(args)
    validate_target_return(inst, args.r_target)
    spec = _solver_from_args(args)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    s0 = best_of_random(inst, inst.max_assets, args.r_target, args.init_draws, rng)
    res = solve_one(spec, s0, inst, args.r_target, rng)
    cost = evaluate(res.best, inst, args.r_target, PenaltyState())
    lines = [f"target_return {_fmt(args.r_target)}"]
    lines.append(f"feasible {int(res.feasible)}")
    lines.append(f"return_violation {_fmt(cost.return_violation)}")
    lines.append(f"variance {_fmt(cost.variance)}")
    lines.append(f"iterations {res.iterations}")
    lines.append("holdings (asset index from 1):")
    order = np.argsort(res.best.assets)
    for pos in order:
        lines.append(f"  {int(res.best.assets[pos]) + 1} {_fmt(res.best.fractions[pos])}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


def _frontier_csv(points) -> str:
    rows = ["R,variance,uef_variance,loss_pct,num_assets,feasible"]
    for pt in points:
        num = len(pt.portfolio) if pt.portfolio is not None else 0
        rows.append(",".join([
            _fmt(pt.r_target),
            _fmt(pt.variance),
            _fmt(pt.uef_variance),
            _fmt(pt.loss_pct),
            str(num),
            str(int(pt.feasible)),
        ]))
    return "\n".join(rows) + "\n"


def _summary(points) -> str:
    feasible = sum(pt.feasible for pt in points)
    if feasible:
        return (f"points {len(points)} feasible {feasible} "
                f"mean_loss_pct {_fmt(avg_percent_loss(points))}\n")
    return f"points {len(points)} feasible 0 mean_loss_pct nan\n"


def _cmd_frontier(args: argparse.Namespace) -> int:
    inst = _load_problem(args)
    uef = load_uef(args.uef)
    cfg = SweepConfig(
        solver=_solver_from_args(args),
        trials=args.trials,
        seed=args.seed,
        warm_start=not args.no_warm_start,
        init_draws=args.init_draws,
        workers=args.workers,
    )
    points = sweep(inst, uef, cfg)
    _emit(args, _frontier_csv(points))
    stream = sys.stdout if args.out else sys.stderr
    stream.write(_summary(points))
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    if args.list:
        _emit(args, "\n".join(sorted(PRESETS)) + "\n")
        return 0
    inst = _load_problem(args)
    uef = load_uef(args.uef)
    names = args.presets or sorted(PRESETS)
    rows = ["config,mean_loss_pct,feasible_points"]
    for name in names:
        if name not in PRESETS:
            raise PortselError(f"unknown preset {name!r}; compare --list shows them")
        cfg = SweepConfig(
            solver=PRESETS[name](),
            trials=args.trials,
            seed=args.seed,
            warm_start=not args.no_warm_start,
            init_draws=args.init_draws,
            workers=args.workers,
        )
        points = sweep(inst, uef, cfg)
        feasible = sum(pt.feasible for pt in points)
        loss = _fmt(avg_percent_loss(points)) if feasible else "nan"
        rows.append(f"{name},{loss},{feasible}")
    _emit(args, "\n".join(rows) + "\n")
    return 0


def _cmd_sensitivity(args: argparse.Namespace) -> int:
    inst = _load_problem(args)
    uef = load_uef(args.uef)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise PortselError("--values must list at least one number")
    cfg = SweepConfig(
        solver=_solver_from_args(args),
        trials=args.trials,
        seed=args.seed,
        warm_start=not args.no_warm_start,
        init_draws=args.init_draws,
        workers=args.workers,
    )
    rows = ["value,avg_loss_pct,feasible"]
    for row in sensitivity_study(inst, uef, args.param, values, cfg):
        rows.append(f"{_fmt(row.value)},{_fmt(row.avg_loss_pct)},{int(row.feasible)}")
    _emit(args, "\n".join(rows) + "\n")
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "frontier": _cmd_frontier,
    "compare": _cmd_compare,
    "sensitivity": _cmd_sensitivity,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args, argv)
        return _COMMANDS[args.command](args)
    except (PortselError, OSError) as exc:
        print(f"portsel: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
