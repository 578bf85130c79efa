"""Frontier experiments: sweeps over target returns and loss metrics.

A sweep solves the constrained problem once per reference-frontier return,
running several trials per point.  The first trial of every point after
the first warm-starts from the previous point's best state; the remaining
trials start from the best of a batch of random portfolios.  A point is
feasible when at least one trial reaches the required return exactly; its
quality is the percentage variance loss against the reference frontier.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InfeasibleError, MetricError, ValidationError
from .instance import Instance, UefReference, return_grid
from .portfolio import PenaltyState, Portfolio, best_of_random
from .engine import RunnerConfig, RunResult, Technique, run
from .tokenring import TokenRing, run_token_ring


@dataclass(frozen=True)
class SingleRunner:
    technique: Technique
    config: RunnerConfig


SolverSpec = SingleRunner | TokenRing


def initial_weights(spec: SolverSpec) -> PenaltyState:
    """Penalty weights the solver starts from (first runner's, for a ring)."""
    cfg = spec.runners[0][1] if isinstance(spec, TokenRing) else spec.config
    return PenaltyState(w1=cfg.initial_w1)


def solve_one(
    spec: SolverSpec,
    s0: Portfolio,
    inst: Instance,
    r_target: float,
    rng: np.random.Generator,
) -> RunResult:
    if isinstance(spec, TokenRing):
        return run_token_ring(spec, s0, inst, r_target, rng)
    return run(spec.technique, s0, spec.config, inst, r_target, rng)


@dataclass(frozen=True)
class SweepConfig:
    solver: SolverSpec
    trials: int = 4
    seed: int = 0
    warm_start: bool = True
    init_draws: int = 100
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("need at least one trial per point")


@dataclass(frozen=True)
class FrontierPoint:
    r_target: float
    variance: float
    portfolio: Portfolio | None
    uef_variance: float
    loss_pct: float
    feasible: bool


def _trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(point, trial))))


def _run_trial(
    spec: SolverSpec,
    inst: Instance,
    r_target: float,
    seed: int,
    point: int,
    trial: int,
    init_draws: int,
    warm_state: Portfolio | None = None,
) -> RunResult:
    rng = _trial_rng(seed, point, trial)
    if warm_state is not None:
        s0 = warm_state
    else:
        s0 = best_of_random(inst, inst.max_assets, r_target, init_draws, rng,
                            weights=initial_weights(spec))
    return solve_one(spec, s0, inst, r_target, rng)


def _trial_task(args) -> tuple[tuple[int, int], RunResult]:
    spec, inst, r_target, seed, point, trial, init_draws = args
    return (point, trial), _run_trial(spec, inst, r_target, seed, point, trial, init_draws)


def sweep(inst: Instance, uef: UefReference, cfg: SweepConfig) -> list[FrontierPoint]:
    """Solve every grid return and collect the per-point best results.

    Trial seeds depend only on (master seed, point index, trial index), so
    results are identical whether the independent trials run sequentially
    or on worker processes; the warm-start chain is always sequential.
    """
    grid = return_grid(uef)
    cold: dict[tuple[int, int], RunResult] = {}
    if cfg.workers > 1 and cfg.trials > 1:
        tasks = [
            (cfg.solver, inst, float(r), cfg.seed, i, t, cfg.init_draws)
            for i, r in enumerate(grid)
            for t in range(1, cfg.trials)
        ]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for key, res in pool.map(_trial_task, tasks, chunksize=4):
                cold[key] = res

    points: list[FrontierPoint] = []
    prev_best: Portfolio | None = None
    for i, r in enumerate(grid):
        r = float(r)
        results: list[RunResult] = []
        for t in range(cfg.trials):
            if (i, t) in cold:
                results.append(cold[i, t])
                continue
            warm = prev_best if (t == 0 and cfg.warm_start and prev_best is not None) else None
            results.append(_run_trial(
                cfg.solver, inst, r, cfg.seed, i, t, cfg.init_draws, warm))
        prev_best = min(results, key=lambda res: res.best_pair()).best
        feasible = [res for res in results if res.feasible]
        uef_v = float(uef.variances[i])
        if feasible:
            top = min(feasible, key=lambda res: res.best_variance)
            v = top.best_variance
            points.append(FrontierPoint(
                r_target=r,
                variance=v,
                portfolio=top.best,
                uef_variance=uef_v,
                loss_pct=100.0 * (v - uef_v) / uef_v,
                feasible=True,
            ))
        else:
            points.append(FrontierPoint(
                r_target=r,
                variance=float("nan"),
                portfolio=None,
                uef_variance=uef_v,
                loss_pct=float("nan"),
                feasible=False,
            ))
    return points


def avg_percent_loss(points: Sequence[FrontierPoint]) -> float:
    """Mean percentage loss over the feasible frontier points."""
    losses = [pt.loss_pct for pt in points if pt.feasible]
    if not losses:
        raise MetricError("no feasible frontier point; average loss is undefined")
    return float(np.mean(losses))


def merge_acef(runs: Sequence[Sequence[FrontierPoint]]) -> list[FrontierPoint]:
    """Pointwise best (lowest feasible variance) across several sweeps."""
    if not runs:
        raise ValidationError("nothing to merge")
    first = runs[0]
    for other in runs[1:]:
        if len(other) != len(first) or any(
            a.r_target != b.r_target or a.uef_variance != b.uef_variance
            for a, b in zip(first, other)
        ):
            raise ValidationError("sweeps to merge must share the same return grid")
    merged: list[FrontierPoint] = []
    for idx in range(len(first)):
        feasible = [r[idx] for r in runs if r[idx].feasible]
        if feasible:
            merged.append(min(feasible, key=lambda pt: pt.variance))
        else:
            merged.append(first[idx])
    return merged


@dataclass(frozen=True)
class SensitivityRow:
    value: float
    avg_loss_pct: float
    feasible: bool


def sensitivity_study(
    inst: Instance,
    uef: UefReference,
    parameter: str,
    values: Sequence[float],
    cfg: SweepConfig,
) -> list[SensitivityRow]:
    """Average loss as one constraint parameter varies.

    ``parameter`` is ``"k"`` (cardinality bound) or ``"eps"`` (uniform
    minimum fraction).  Values yielding an infeasible instance, or sweeps
    with no feasible point, produce rows flagged infeasible.  The reference
    frontier is unconstrained, so it stays fixed across values.
    """
    if parameter not in ("k", "eps"):
        raise ValidationError(f"unknown sensitivity parameter: {parameter!r}")
    if not len(values):
        raise ValidationError("need at least one parameter value")
    rows: list[SensitivityRow] = []
    for value in values:
        try:
            if parameter == "k":
                trial_inst = inst.with_constraints(max_assets=int(value))
            else:
                trial_inst = inst.with_constraints(min_frac=float(value))
            loss = avg_percent_loss(sweep(trial_inst, uef, cfg))
        except (InfeasibleError, ValidationError, MetricError):
            rows.append(SensitivityRow(float(value), float("nan"), False))
            continue
        rows.append(SensitivityRow(float(value), loss, True))
    return rows
