"""Portfolio states, cost evaluation and the adaptive constraint penalty.

A portfolio holds at most ``max_assets`` assets, each with a fraction inside
its per-asset bounds, and the fractions sum to one.  All operations here
return new values; states are never mutated in place.

The search cost of a state combines the shortfall below the required return
(``return_violation``) with the portfolio variance, weighted by an adaptive
penalty that grows while the return constraint is violated and decays while
it is satisfied.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .errors import InfeasibleError, InfeasibleRepairError, ValidationError
from .instance import Instance

if TYPE_CHECKING:  # pragma: no cover
    from .neighborhood import Move

#: Tolerance on the sum-to-one invariant.
SUM_TOL = 1e-9

#: Slack used when deciding whether a repair has any surplus mass to scale.
MASS_TOL = 1e-12

#: Initial constraint weight; large so feasibility dominates early search.
INITIAL_W1 = 1e4

#: Range of the random factor applied by penalty updates.
GAMMA_RANGE = (1.5, 2.0)

#: Hard bounds on the adaptive weight.  Long one-sided streaks would
#: otherwise drive w1 to inf/0 (H = 1 multiplies every violated iteration),
#: poisoning weighted costs with NaN.
W1_BOUNDS = (1e-12, 1e18)


@dataclass(frozen=True)
class Portfolio:
    """Sparse state: held asset indices and their fractions, in hold order."""

    assets: np.ndarray
    fractions: np.ndarray

    def __post_init__(self):
        a = np.array(self.assets, dtype=np.int64)
        x = np.array(self.fractions, dtype=np.float64)
        a.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "assets", a)
        object.__setattr__(self, "fractions", x)
        object.__setattr__(self, "_pos", {int(v): i for i, v in enumerate(a)})

    def __len__(self) -> int:
        return self.assets.size

    def position(self, asset: int) -> int:
        """Index of ``asset`` in the holding order; -1 if not held."""
        return self._pos.get(asset, -1)

    def dense(self, n: int) -> np.ndarray:
        x = np.zeros(n)
        x[self.assets] = self.fractions
        return x

    def as_dict(self) -> dict[int, float]:
        return {int(a): float(x) for a, x in zip(self.assets, self.fractions)}


@dataclass(frozen=True)
class CostBreakdown:
    return_violation: float  # shortfall below the required return
    variance: float
    weighted: float

    def pair(self) -> tuple[float, float]:
        """(violation, variance) for weight-free lexicographic comparison."""
        return (self.return_violation, self.variance)


@dataclass(frozen=True)
class PenaltyState:
    """Adaptive weight on the return-constraint violation term.

    After ``shrink_after`` consecutive satisfied iterations the weight is
    divided by a random factor in ``GAMMA_RANGE``; after ``grow_after``
    consecutive violated iterations it is multiplied by one.
    """

    w1: float = INITIAL_W1
    w2: float = 1.0
    satisfied_streak: int = 0
    violated_streak: int = 0
    grow_after: int = 1
    shrink_after: int = 20

    def __post_init__(self):
        if self.w1 <= 0:
            raise ValidationError("penalty weight must stay positive")

    def weighted(self, violation: float, variance: float) -> float:
        return self.w1 * violation + self.w2 * variance


def _clip_w1(w1: float) -> float:
    lo, hi = W1_BOUNDS
    return min(max(w1, lo), hi)


def update_penalty(state: PenaltyState, violated: bool, rng: np.random.Generator) -> PenaltyState:
    """Advance the streak counters, rescaling the weight on threshold hits."""
    if violated:
        streak = state.violated_streak + 1
        if streak >= state.grow_after:
            gamma = rng.uniform(*GAMMA_RANGE)
            return replace(state, w1=_clip_w1(state.w1 * gamma),
                           satisfied_streak=0, violated_streak=0)
        return replace(state, satisfied_streak=0, violated_streak=streak)
    streak = state.satisfied_streak + 1
    if streak >= state.shrink_after:
        gamma = rng.uniform(*GAMMA_RANGE)
        return replace(state, w1=_clip_w1(state.w1 / gamma),
                       satisfied_streak=0, violated_streak=0)
    return replace(state, satisfied_streak=streak, violated_streak=0)


def check_portfolio(p: Portfolio, inst: Instance, *, sum_tol: float = SUM_TOL) -> None:
    """Raise ValidationError unless all four state invariants hold."""
    if len(p) == 0:
        raise ValidationError("portfolio holds no assets")
    if len(p) > inst.max_assets:
        raise ValidationError(f"portfolio holds {len(p)} assets, max is {inst.max_assets}")
    if np.unique(p.assets).size != p.assets.size:
        raise ValidationError("duplicate asset in portfolio")
    if np.any(p.assets < 0) or np.any(p.assets >= inst.n):
        raise ValidationError("asset index out of range")
    total = float(np.sum(p.fractions))
    if abs(total - 1.0) > sum_tol:
        raise ValidationError(f"fractions sum to {total}, not 1")
    lo = inst.min_frac[p.assets]
    hi = inst.max_frac[p.assets]
    if np.any(p.fractions < lo) or np.any(p.fractions > hi):
        raise ValidationError("held fraction outside its quantity bounds")


def portfolio_return(p: Portfolio, inst: Instance) -> float:
    return float(inst.returns[p.assets] @ p.fractions)


def evaluate(
    p: Portfolio,
    inst: Instance,
    r_target: float,
    weights: PenaltyState,
) -> CostBreakdown:
    """Cost of a state: return shortfall, variance and their weighted sum.

    The variance iterates only the held assets, so the cost of a sparse
    state is O(p^2) rather than O(n^2).
    """
    x = p.fractions
    sub = inst.cov[p.assets[:, None], p.assets[None, :]]
    variance = float(x @ sub @ x)
    violation = max(0.0, r_target - portfolio_return(p, inst))
    return CostBreakdown(violation, variance, weights.weighted(violation, variance))


def delta_evaluate(
    p: Portfolio,
    move: "Move",
    step: float,
    inst: Instance,
    r_target: float,
    weights: PenaltyState,
) -> float:
    """Weighted cost change of applying ``move`` to ``p``.

    Share transfers are evaluated incrementally in O(p) via the cached
    linear form c_i = sum_j sigma_ij x_j; the other relations change every
    held fraction, so they are re-evaluated from the moved state.

    Raises MoveRejectedError if the move is not applicable to ``p``.
    """
    from .neighborhood import TidMove, apply_move, tid_transfer

    before = evaluate(p, inst, r_target, weights)
    if isinstance(move, TidMove):
        plan = tid_transfer(p, move, step, inst)
        if plan is not None and not plan.needs_repair:
            t = plan.amount
            s, d = move.src, move.dst
            cov = inst.cov
            c = cov[np.ix_([s, d], p.assets)] @ p.fractions
            dvar = t * t * (cov[s, s] + cov[d, d] - 2.0 * cov[s, d]) + 2.0 * t * (c[1] - c[0])
            ret = portfolio_return(p, inst) + t * (inst.returns[d] - inst.returns[s])
            violation = max(0.0, r_target - ret)
            after_weighted = weights.weighted(violation, before.variance + dvar)
            return after_weighted - before.weighted
    after = evaluate(apply_move(p, move, step, inst), inst, r_target, weights)
    return after.weighted - before.weighted


def renormalize(p: Portfolio, pinned: int | None, inst: Instance) -> Portfolio:
    """Rescale the surplus above each minimum so fractions sum to one.

    The pinned asset (if any) keeps its fraction exactly.  Every other held
    fraction becomes ``min_j + s * (x_j - min_j)``; assets pushed above their
    maximum are clamped there and the residual is redistributed over the
    rest, repeating until no bound is violated.

    Raises InfeasibleRepairError when the mass cannot be placed within the
    bounds (callers treat this as "reject the move").
    """
    assets = p.assets
    x = p.fractions
    eps = inst.min_frac[assets]
    dlt = inst.max_frac[assets]
    y = x.astype(np.float64).copy()

    if pinned is None:
        free = np.ones(len(p), dtype=bool)
        fixed_mass = 0.0
    else:
        pos = p.position(pinned)
        if pos < 0:
            raise ValidationError(f"pinned asset {pinned} is not held")
        free = np.ones(len(p), dtype=bool)
        free[pos] = False
        fixed_mass = float(x[pos])

    while True:
        idx = np.flatnonzero(free)
        if idx.size == 0:
            if abs(fixed_mass - 1.0) > SUM_TOL:
                raise InfeasibleRepairError("clamped fractions cannot reach total 1")
            break
        surplus = 1.0 - fixed_mass - float(np.sum(eps[idx]))
        if surplus < -MASS_TOL:
            raise InfeasibleRepairError("minimum fractions exceed the available mass")
        pool = float(np.sum(x[idx] - eps[idx]))
        if pool <= MASS_TOL:
            if surplus <= max(MASS_TOL, 1e-9):
                y[idx] = eps[idx]
                break
            raise InfeasibleRepairError("no surplus left to absorb the remaining mass")
        s = max(0.0, surplus) / pool
        scaled = eps[idx] + s * (x[idx] - eps[idx])
        over = scaled > dlt[idx]
        if not over.any():
            y[idx] = scaled
            break
        clamped = idx[over]
        y[clamped] = dlt[clamped]
        fixed_mass += float(np.sum(dlt[clamped]))
        free[clamped] = False

    return Portfolio(assets=assets, fractions=y)


def random_portfolio(inst: Instance, k: int, rng: np.random.Generator) -> Portfolio:
    """Uniformly sample k distinct assets and a feasible split of the mass.

    Each selected asset gets its minimum plus a Dirichlet-uniform share of
    the remaining mass; excess over any maximum is redistributed over the
    others' headroom.
    """
    if not (1 <= k <= inst.n):
        raise InfeasibleError(f"cannot hold {k} of {inst.n} assets")
    for _ in range(64):
        sel = np.sort(rng.choice(inst.n, size=k, replace=False))
        eps = inst.min_frac[sel]
        dlt = inst.max_frac[sel]
        free_mass = 1.0 - float(np.sum(eps))
        if free_mass < -MASS_TOL or float(np.sum(dlt)) < 1.0 - MASS_TOL:
            continue  # this particular selection cannot carry the mass
        if k == 1:
            x = np.array([1.0])
        else:
            x = eps + max(0.0, free_mass) * rng.dirichlet(np.ones(k))
        over = x > dlt
        if over.any():
            excess = float(np.sum(x[over] - dlt[over]))
            x[over] = dlt[over]
            if excess > 1e-15:
                headroom = dlt - x
                headroom[over] = 0.0
                room = float(np.sum(headroom))
                if room <= 0.0 or room < excess - 1e-9:
                    continue
                x = np.minimum(x + excess * headroom / room, dlt)
        return Portfolio(assets=sel, fractions=x)
    raise InfeasibleError(f"found no feasible selection of exactly {k} assets")


def best_of_random(
    inst: Instance,
    k: int,
    r_target: float,
    count: int,
    rng: np.random.Generator,
    weights: PenaltyState | None = None,
) -> Portfolio:
    """Best of ``count`` random portfolios under the (initial) weighted cost."""
    if count < 1:
        raise ValidationError("need at least one random draw")
    if weights is None:
        weights = PenaltyState()
    best: Portfolio | None = None
    best_cost = np.inf
    for _ in range(count):
        cand = random_portfolio(inst, k, rng)
        cost = evaluate(cand, inst, r_target, weights).weighted
        if cost < best_cost:
            best, best_cost = cand, cost
    assert best is not None
    return best
