"""Token-ring composition of search runners.

Control circulates over a fixed sequence of runners; each one starts from
the best state found so far and hands its own best onward.  The ring stops
once a full round of all runners passes without strictly improving the
global best.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .instance import Instance
from .portfolio import Portfolio, evaluate, PenaltyState
from .engine import RunnerConfig, RunResult, Technique, run

#: Observer for component runs: (round, runner index, RunResult).
ComponentHook = Callable[[int, int, RunResult], None]


@dataclass(frozen=True)
class TokenRing:
    runners: tuple[tuple[Technique, RunnerConfig], ...]
    max_idle_rounds: int = 3

    def __post_init__(self):
        if len(self.runners) < 1:
            raise ValidationError("a token ring needs at least one runner")
        if self.max_idle_rounds < 1:
            raise ValidationError("max_idle_rounds must be at least 1")
        object.__setattr__(self, "runners", tuple(self.runners))


def run_token_ring(
    ring: TokenRing,
    s0: Portfolio,
    inst: Instance,
    r_target: float,
    rng: np.random.Generator,
    *,
    on_component: ComponentHook | None = None,
) -> RunResult:
    """Circulate the best state through the ring until rounds stop helping.

    The global best is compared on the weight-free (violation, variance)
    pair; only strict improvements reset the round counter.  Every
    component run draws its own child generator from ``rng``, in ring
    order, so results are reproducible.
    """
    start = evaluate(s0, inst, r_target, PenaltyState())
    best = s0
    best_pair = (start.return_violation, start.variance)
    total_iterations = 0
    final = s0
    idle_rounds = 0
    round_no = 0
    while idle_rounds < ring.max_idle_rounds:
        round_no += 1
        improved = False
        for idx, (technique, cfg) in enumerate(ring.runners):
            child = rng.spawn(1)[0]
            res = run(technique, best, cfg, inst, r_target, child)
            total_iterations += res.iterations
            final = res.final
            if on_component is not None:
                on_component(round_no, idx, res)
            if res.best_pair() < best_pair:
                best = res.best
                best_pair = res.best_pair()
                improved = True
        idle_rounds = 0 if improved else idle_rounds + 1
    return RunResult(
        best=best,
        best_violation=best_pair[0],
        best_variance=best_pair[1],
        final=final,
        iterations=total_iterations,
    )
