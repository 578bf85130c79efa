"""Search engines: tabu search, hill climbing and simulated annealing.

All three runners share the same shape: they walk one neighborhood relation
with a per-iteration random step, track the best state seen under the
weight-free (violation, variance) order, and stop after a configured number
of iterations without improving the best state (or at a hard iteration
cap).  Only tabu search adapts the constraint penalty weight during the
run; the simpler techniques keep their initial weights.

Each runner derives five private random streams (step, move, acceptance,
tenure, penalty) from the generator it is given, so runs are reproducible
and techniques sharing a seed draw identical step/move sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import ValidationError
from .instance import Instance
from .portfolio import (
    INITIAL_W1,
    PenaltyState,
    Portfolio,
    delta_evaluate,
    evaluate,
    update_penalty,
)
from .neighborhood import (
    Arrow,
    Move,
    Relation,
    StepPolicy,
    TidMove,
    apply_move,
    draw_step,
    random_move,
)
from ._scan import ARROW_OF_CODE, CODE_TID, ScanResult, scan_neighborhood

_NEVER = np.iinfo(np.int64).min
_FOREVER = np.iinfo(np.int64).max

#: Optional per-iteration observer: (iteration, state, violation, variance, move).
TraceHook = Callable[[int, Portfolio, float, float, Move | None], None]


class Technique(Enum):
    TABU = "ts"
    HILL_CLIMBING = "hc"
    SIMULATED_ANNEALING = "sa"


class TabuList:
    """Recently accepted moves; their inverses are forbidden while unexpired.

    Each inserted move stays for a tenure drawn uniformly from
    [tenure_min, tenure_max], so the effective list size varies between the
    two bounds on its own.
    """

    def __init__(self, tenure_min: int, tenure_max: int, n_assets: int):
        if not (1 <= tenure_min <= tenure_max):
            raise ValidationError("need 1 <= tenure_min <= tenure_max")
        self.tenure_min = tenure_min
        self.tenure_max = tenure_max
        self.entries: dict[tuple, int] = {}
        self._pair = np.full((n_assets, n_assets), _NEVER, dtype=np.int64)
        self._dir = np.full((n_assets, 3), _NEVER, dtype=np.int64)

    @staticmethod
    def _key(move: Move) -> tuple:
        if isinstance(move, TidMove):
            return ("tid", move.src, move.dst)
        return ("dir", move.asset, int(move.arrow))

    def insert(self, move: Move, now: int, rng: np.random.Generator) -> int:
        tenure = int(rng.integers(self.tenure_min, self.tenure_max + 1))
        return self.insert_with_expiry(move, now + tenure)

    def insert_with_expiry(self, move: Move, expiry: int) -> int:
        key = self._key(move)
        expiry = max(expiry, self.entries.get(key, _NEVER))
        self.entries[key] = expiry
        if key[0] == "tid":
            self._pair[key[1], key[2]] = expiry
        else:
            self._dir[key[1], key[2]] = expiry
        return expiry

    def is_tabu(self, move: Move, now: int) -> bool:
        if isinstance(move, TidMove):
            return bool(self._pair[move.dst, move.src] >= now)
        others = [arw for arw in (Arrow.UP, Arrow.DOWN, Arrow.INSERT) if arw != move.arrow]
        return bool(max(self._dir[move.asset, int(o)] for o in others) >= now)

    def size(self, now: int) -> int:
        return sum(1 for e in self.entries.values() if e >= now)

    def blocking_expiry(self, scan: ScanResult) -> np.ndarray:
        """Expiry of the entry forbidding each scan candidate (or never)."""
        if scan.relation is Relation.TID:
            return self._pair[scan.b, scan.a]
        tid = scan.codes == CODE_TID
        out = np.full(len(scan), _NEVER, dtype=np.int64)
        if tid.any():
            out[tid] = self._pair[scan.b[tid], scan.a[tid]]
        rest = ~tid
        if rest.any():
            block = np.empty_like(self._dir)
            block[:, Arrow.UP] = np.maximum(self._dir[:, Arrow.DOWN], self._dir[:, Arrow.INSERT])
            block[:, Arrow.DOWN] = np.maximum(self._dir[:, Arrow.UP], self._dir[:, Arrow.INSERT])
            block[:, Arrow.INSERT] = np.maximum(self._dir[:, Arrow.UP], self._dir[:, Arrow.DOWN])
            arrows = ARROW_OF_CODE[scan.codes[rest]]
            out[rest] = block[scan.a[rest], arrows]
        return out


def is_tabu(tabu: TabuList, move: Move, now: int) -> bool:
    """True iff some unexpired entry's inverse matches ``move``."""
    return tabu.is_tabu(move, now)


@dataclass(frozen=True)
class RunnerConfig:
    relation: Relation = Relation.TID
    step: StepPolicy = field(default_factory=lambda: StepPolicy.randomized(0.3))
    max_idle: int = 1000
    max_iters: int = 50_000
    tenure_min: int = 10
    tenure_max: int = 25
    penalty_grow_after: int = 1
    penalty_shrink_after: int = 20
    initial_w1: float = INITIAL_W1
    hc_mode: str = "random"  # or "steepest"
    sa_t0: float | None = None  # default: 10 x initial weighted cost
    sa_alpha: float = 0.95
    sa_plateau: int = 100
    sa_t_min_ratio: float = 1e-9

    def __post_init__(self):
        if self.max_idle < 1:
            raise ValidationError("max_idle must be at least 1")
        if self.max_iters < 0:
            raise ValidationError("max_iters must be non-negative")
        if self.hc_mode not in ("random", "steepest"):
            raise ValidationError(f"unknown hill-climbing mode: {self.hc_mode!r}")
        if not (1 <= self.tenure_min <= self.tenure_max):
            raise ValidationError("need 1 <= tenure_min <= tenure_max")


@dataclass(frozen=True)
class RunResult:
    best: Portfolio
    best_violation: float
    best_variance: float
    final: Portfolio
    iterations: int

    @property
    def feasible(self) -> bool:
        return self.best_violation == 0.0

    def best_pair(self) -> tuple[float, float]:
        return (self.best_violation, self.best_variance)


class _RunState:
    """Bookkeeping shared by the three runners."""

    def __init__(self, s0: Portfolio, cfg: RunnerConfig, inst: Instance,
                 r_target: float, rng: np.random.Generator):
        self.cfg = cfg
        self.inst = inst
        self.r_target = r_target
        (self.step_rng, self.move_rng, self.accept_rng,
         self.tenure_rng, self.penalty_rng) = rng.spawn(5)
        self.weights = PenaltyState(
            w1=cfg.initial_w1,
            grow_after=cfg.penalty_grow_after,
            shrink_after=cfg.penalty_shrink_after,
        )
        self.state = s0
        cost = evaluate(s0, inst, r_target, self.weights)
        self.f1 = cost.return_violation
        self.f2 = cost.variance
        self.initial_weighted = cost.weighted
        self.best = s0
        self.best_f1 = self.f1
        self.best_f2 = self.f2
        self.idle = 0
        self.iterations = 0

    def weighted_current(self) -> float:
        return self.weights.weighted(self.f1, self.f2)

    def accept(self, state: Portfolio) -> None:
        self.state = state
        cost = evaluate(state, self.inst, self.r_target, self.weights)
        self.f1 = cost.return_violation
        self.f2 = cost.variance

    def close_iteration(self, trace: TraceHook | None, move: Move | None,
                        *, adapt_penalty: bool = False) -> None:
        if adapt_penalty:
            self.weights = update_penalty(self.weights, self.f1 > 0.0, self.penalty_rng)
        if (self.f1, self.f2) < (self.best_f1, self.best_f2):
            self.best = self.state
            self.best_f1, self.best_f2 = self.f1, self.f2
            self.idle = 0
        else:
            self.idle += 1
        if trace is not None:
            trace(self.iterations, self.state, self.f1, self.f2, move)

    def exhausted(self) -> bool:
        return self.iterations >= self.cfg.max_iters or self.idle >= self.cfg.max_idle

    def result(self) -> RunResult:
        return RunResult(self.best, self.best_f1, self.best_f2, self.state, self.iterations)


def run_tabu(
    s0: Portfolio,
    cfg: RunnerConfig,
    inst: Instance,
    r_target: float,
    rng: np.random.Generator,
    *,
    trace: TraceHook | None = None,
) -> RunResult:
    """Best-neighbor descent with a variable-tenure tabu list.

    The whole neighborhood is scanned each iteration; tabu candidates are
    admitted only when they beat the best state found so far (aspiration).
    The cheapest admitted neighbor is accepted even when it worsens the
    cost.  If every applicable move is tabu, the one whose entry expires
    soonest is taken.
    """
    run = _RunState(s0, cfg, inst, r_target, rng)
    tabu = TabuList(cfg.tenure_min, cfg.tenure_max, inst.n)
    while not run.exhausted():
        run.iterations += 1
        now = run.iterations
        step = draw_step(cfg.step, run.step_rng)
        scan = scan_neighborhood(run.state, cfg.relation, step, inst, r_target)
        if not scan.ok.any():
            break
        weighted = run.weights.w1 * scan.f1 + run.weights.w2 * scan.f2
        expiry = tabu.blocking_expiry(scan)
        blocked = expiry >= now
        aspiration = run.weights.weighted(run.best_f1, run.best_f2)
        allowed = scan.ok & (~blocked | (weighted <= aspiration))
        if allowed.any():
            pick = int(np.argmin(np.where(allowed, weighted, np.inf)))
        else:
            pick = int(np.argmin(np.where(scan.ok, expiry, _FOREVER)))
        move = scan.move_at(pick)
        run.accept(apply_move(run.state, move, step, inst))
        tabu.insert(move, now, run.tenure_rng)
        run.close_iteration(trace, move, adapt_penalty=True)
    return run.result()


def run_hill_climbing(
    s0: Portfolio,
    cfg: RunnerConfig,
    inst: Instance,
    r_target: float,
    rng: np.random.Generator,
    *,
    trace: TraceHook | None = None,
) -> RunResult:
    """Accept only improving or sideways moves.

    ``random`` mode draws one applicable move per iteration; ``steepest``
    mode scans the neighborhood and considers only its best candidate.
    """
    run = _RunState(s0, cfg, inst, r_target, rng)
    steepest = cfg.hc_mode == "steepest"
    while not run.exhausted():
        run.iterations += 1
        step = draw_step(cfg.step, run.step_rng)
        move: Move | None = None
        if steepest:
            scan = scan_neighborhood(run.state, cfg.relation, step, inst, r_target)
            if scan.ok.any():
                weighted = run.weights.w1 * scan.f1 + run.weights.w2 * scan.f2
                pick = int(np.argmin(np.where(scan.ok, weighted, np.inf)))
                if weighted[pick] <= run.weighted_current():
                    move = scan.move_at(pick)
        else:
            cand = random_move(run.state, cfg.relation, step, inst, run.move_rng)
            if cand is not None:
                delta = delta_evaluate(run.state, cand, step, inst, r_target, run.weights)
                if delta <= 0.0:
                    move = cand
        if move is not None:
            run.accept(apply_move(run.state, move, step, inst))
        run.close_iteration(trace, move)
    return run.result()


def run_simulated_annealing(
    s0: Portfolio,
    cfg: RunnerConfig,
    inst: Instance,
    r_target: float,
    rng: np.random.Generator,
    *,
    trace: TraceHook | None = None,
) -> RunResult:
    """Random-neighbor walk with Metropolis acceptance and geometric cooling.

    Worsening moves are accepted with probability exp(-delta / T); the
    temperature is multiplied by ``sa_alpha`` every ``sa_plateau``
    iterations and the run freezes once it falls below
    ``sa_t0 * sa_t_min_ratio``.
    """
    run = _RunState(s0, cfg, inst, r_target, rng)
    t0 = cfg.sa_t0 if cfg.sa_t0 is not None else 10.0 * max(run.initial_weighted, 1e-300)
    temperature = t0
    while not run.exhausted() and temperature >= t0 * cfg.sa_t_min_ratio:
        run.iterations += 1
        step = draw_step(cfg.step, run.step_rng)
        move: Move | None = None
        cand = random_move(run.state, cfg.relation, step, inst, run.move_rng)
        if cand is not None:
            delta = delta_evaluate(run.state, cand, step, inst, r_target, run.weights)
            if delta <= 0.0:
                move = cand
            elif run.accept_rng.random() < np.exp(-delta / temperature):
                move = cand
        if move is not None:
            run.accept(apply_move(run.state, move, step, inst))
        run.close_iteration(trace, move)
        if run.iterations % cfg.sa_plateau == 0:
            temperature *= cfg.sa_alpha
    return run.result()


_RUNNERS = {
    Technique.TABU: run_tabu,
    Technique.HILL_CLIMBING: run_hill_climbing,
    Technique.SIMULATED_ANNEALING: run_simulated_annealing,
}


def run(
    technique: Technique,
    s0: Portfolio,
    cfg: RunnerConfig,
    inst: Instance,
    r_target: float,
    rng: np.random.Generator,
    *,
    trace: TraceHook | None = None,
) -> RunResult:
    return _RUNNERS[technique](s0, cfg, inst, r_target, rng, trace=trace)
