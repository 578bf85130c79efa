"""Neighborhood relations over portfolio states.

Three move families, each parameterized by a per-iteration step in (0, 1):

* ``idr``  — increase/decrease a held asset's fraction; a decrease that
  would fall below the asset's minimum deletes it and brings in a named
  replacement.  Never changes the number of held assets.
* ``idid`` — increase/decrease like ``idr``, but deletions are not replaced
  and explicit insertions of new assets are available.
* ``tid``  — transfer a slice of one asset's fraction to another asset,
  inserting the destination or draining the source as needed.

After the primary change the state is repaired by
:func:`portsel.portfolio.renormalize`, which scales the surplus above each
minimum; moves whose repair is infeasible are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .errors import InfeasibleRepairError, MoveRejectedError, ValidationError
from .instance import Instance
from .portfolio import Portfolio, renormalize


class Relation(Enum):
    IDR = "idr"
    IDID = "idid"
    TID = "tid"


class Arrow(IntEnum):
    UP = 0
    DOWN = 1
    INSERT = 2


@dataclass(frozen=True, slots=True)
class IdrMove:
    asset: int
    arrow: Arrow
    replacement: int | None = None  # only meaningful on deletion-triggering DOWN


@dataclass(frozen=True, slots=True)
class IdidMove:
    asset: int
    arrow: Arrow


@dataclass(frozen=True, slots=True)
class TidMove:
    src: int
    dst: int


Move = IdrMove | IdidMove | TidMove


def relation_of(move: Move) -> Relation:
    if isinstance(move, IdrMove):
        return Relation.IDR
    if isinstance(move, IdidMove):
        return Relation.IDID
    if isinstance(move, TidMove):
        return Relation.TID
    raise TypeError(f"not a move: {move!r}")


def is_inverse(m1: Move, m2: Move) -> bool:
    """Whether m2 undoes m1: same asset and a different arrow for the
    increase/decrease families, swapped endpoints for transfers."""
    if type(m1) is not type(m2):
        raise ValueError(f"cannot compare moves across relations: {m1!r} vs {m2!r}")
    if isinstance(m1, TidMove):
        return m1.src == m2.dst and m1.dst == m2.src
    return m1.asset == m2.asset and m1.arrow != m2.arrow


@dataclass(frozen=True, slots=True)
class StepPolicy:
    """Step magnitude distribution: uniform over [base - spread, base + spread]."""

    base: float
    spread: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.base < 1.0):
            raise ValidationError(f"step base must be in (0, 1), got {self.base}")
        if not (0.0 <= self.spread <= self.base):
            raise ValidationError(f"step spread must be in [0, base], got {self.spread}")

    @classmethod
    def randomized(cls, base: float) -> "StepPolicy":
        """Full-width policy: the step varies over (0, 2 * base)."""
        return cls(base=base, spread=base)


def draw_step(policy: StepPolicy, rng: np.random.Generator) -> float:
    """One step value; draws outside (0, 1) are rejected and redrawn."""
    if policy.spread == 0.0:
        return policy.base
    lo, hi = policy.base - policy.spread, policy.base + policy.spread
    while True:
        v = float(rng.uniform(lo, hi))
        if 0.0 < v < 1.0:
            return v


@dataclass(frozen=True, slots=True)
class TidPlan:
    """Resolved effect of a transfer move for one concrete state and step."""

    amount: float
    drains_src: bool
    inserts_dst: bool
    needs_repair: bool  # destination ends above its max; clamp + renormalize


def tid_transfer(p: Portfolio, move: TidMove, step: float, inst: Instance) -> TidPlan | None:
    """Transfer amount and side effects, or None when the move is rejected."""
    if move.src == move.dst:
        raise ValidationError("transfer needs two distinct assets")
    pos_s = p.position(move.src)
    if pos_s < 0:
        raise ValidationError(f"transfer source {move.src} is not held")
    pos_d = p.position(move.dst)
    dst_held = pos_d >= 0
    x_s = float(p.fractions[pos_s])
    eps_d = float(inst.min_frac[move.dst])
    dlt_d = float(inst.max_frac[move.dst])

    t = step * x_s
    if not dst_held and t < eps_d:
        t = eps_d
    drains = (x_s - t) < float(inst.min_frac[move.src])
    if drains:
        t = x_s
    if not dst_held:
        if t < eps_d:
            return None  # draining the source still undershoots the minimum
        if len(p) >= inst.max_assets and not drains:
            return None
    else:
        if float(p.fractions[pos_d]) >= dlt_d:
            return None  # no capacity left at the destination
    if drains and not dst_held and len(p) == 1:
        # everything moves to the new asset; it must be able to carry 1
        if dlt_d < 1.0:
            return None
    x_d = float(p.fractions[pos_d]) if dst_held else 0.0
    return TidPlan(
        amount=t,
        drains_src=drains,
        inserts_dst=not dst_held,
        needs_repair=(x_d + t) > dlt_d,
    )


def _set_and_repair(
    p: Portfolio, pos: int, value: float, inst: Instance
) -> Portfolio:
    x = p.fractions.copy()
    x[pos] = value
    try:
        return renormalize(Portfolio(p.assets, x), int(p.assets[pos]), inst)
    except InfeasibleRepairError as exc:
        raise MoveRejectedError(str(exc)) from exc


def _drop(p: Portfolio, pos: int) -> tuple[np.ndarray, np.ndarray]:
    keep = np.ones(len(p), dtype=bool)
    keep[pos] = False
    return p.assets[keep], p.fractions[keep]


def _resize_held(p: Portfolio, asset: int, step: float, up: bool, inst: Instance) -> Portfolio:
    """Shared up/down scaling for the idr and idid families (no deletion)."""
    pos = p.position(asset)
    x = float(p.fractions[pos])
    if up:
        value = min(x * (1.0 + step), float(inst.max_frac[asset]))
    else:
        value = x * (1.0 - step)
    return _set_and_repair(p, pos, value, inst)


def apply_move(p: Portfolio, move: Move, step: float, inst: Instance) -> Portfolio:
    """State after ``move``; raises MoveRejectedError when it cannot apply."""
    if isinstance(move, TidMove):
        return _apply_tid(p, move, step, inst)
    if isinstance(move, IdidMove) and move.arrow is Arrow.INSERT:
        return _apply_insert(p, move.asset, inst)

    pos = p.position(move.asset)
    if pos < 0:
        raise ValidationError(f"asset {move.asset} is not held")
    if move.arrow is Arrow.UP:
        return _resize_held(p, move.asset, step, True, inst)

    x = float(p.fractions[pos])
    if x * (1.0 - step) >= float(inst.min_frac[move.asset]):
        return _resize_held(p, move.asset, step, False, inst)

    # the decrease falls below the minimum: delete (and replace for idr)
    assets, fractions = _drop(p, pos)
    if isinstance(move, IdrMove):
        rep = move.replacement
        if rep is None:
            raise MoveRejectedError("decrease deletes the asset but no replacement is named")
        if p.position(rep) >= 0 or rep == move.asset:
            raise ValidationError(f"replacement {rep} must be a new asset")
        assets = np.append(assets, rep)
        fractions = np.append(fractions, float(inst.min_frac[rep]))
        pinned: int | None = rep
    else:
        if assets.size == 0:
            raise MoveRejectedError("cannot delete the only held asset")
        pinned = None
    try:
        return renormalize(Portfolio(assets, fractions), pinned, inst)
    except InfeasibleRepairError as exc:
        raise MoveRejectedError(str(exc)) from exc


def _apply_insert(p: Portfolio, asset: int, inst: Instance) -> Portfolio:
    if p.position(asset) >= 0:
        raise ValidationError(f"asset {asset} is already held")
    if len(p) >= inst.max_assets:
        raise MoveRejectedError("insertion would exceed the cardinality bound")
    assets = np.append(p.assets, asset)
    fractions = np.append(p.fractions, float(inst.min_frac[asset]))
    try:
        return renormalize(Portfolio(assets, fractions), asset, inst)
    except InfeasibleRepairError as exc:
        raise MoveRejectedError(str(exc)) from exc


def _apply_tid(p: Portfolio, move: TidMove, step: float, inst: Instance) -> Portfolio:
    plan = tid_transfer(p, move, step, inst)
    if plan is None:
        raise MoveRejectedError(f"transfer {move.src}->{move.dst} is not applicable")
    t = plan.amount
    if plan.drains_src:
        assets, fractions = _drop(p, p.position(move.src))
    else:
        assets = p.assets.copy()
        fractions = p.fractions.copy()
        fractions[p.position(move.src)] = float(p.fractions[p.position(move.src)]) - t
    if plan.inserts_dst:
        assets = np.append(assets, move.dst)
        fractions = np.append(fractions, t)
        pos_d = len(fractions) - 1
    else:
        pos_d = int(np.flatnonzero(assets == move.dst)[0])
        fractions = fractions.copy()
        fractions[pos_d] += t
    state = Portfolio(assets, fractions)
    if plan.needs_repair:
        x = fractions.copy()
        x[pos_d] = float(inst.max_frac[move.dst])
        try:
            return renormalize(Portfolio(assets, x), move.dst, inst)
        except InfeasibleRepairError as exc:
            raise MoveRejectedError(str(exc)) from exc
    return state


def _idr_drains(p: Portfolio, step: float, inst: Instance) -> np.ndarray:
    """Which held assets would fall below their minimum if decreased."""
    return p.fractions * (1.0 - step) < inst.min_frac[p.assets]


def enumerate_moves(
    p: Portfolio, relation: Relation, step: float, inst: Instance
) -> list[Move]:
    """All applicable moves of ``relation`` from state ``p`` at this step.

    Candidates whose application would fail repair are filtered out, so
    every returned move can be applied.
    """
    unheld = np.setdiff1d(np.arange(inst.n), p.assets)
    moves: list[Move] = []

    if relation is Relation.TID:
        for src in p.assets:
            for dst in range(inst.n):
                if dst == src:
                    continue
                m = TidMove(int(src), dst)
                plan = tid_transfer(p, m, step, inst)
                if plan is None:
                    continue
                if plan.needs_repair and not _applies(p, m, step, inst):
                    continue
                moves.append(m)
        return moves

    if relation is Relation.IDID:
        for a in p.assets:
            for arrow in (Arrow.UP, Arrow.DOWN):
                m = IdidMove(int(a), arrow)
                if _applies(p, m, step, inst):
                    moves.append(m)
        if len(p) < inst.max_assets:
            for a in unheld:
                m = IdidMove(int(a), Arrow.INSERT)
                if _applies(p, m, step, inst):
                    moves.append(m)
        return moves

    if relation is Relation.IDR:
        drains = _idr_drains(p, step, inst)
        for pos, a in enumerate(p.assets):
            up = IdrMove(int(a), Arrow.UP)
            if _applies(p, up, step, inst):
                moves.append(up)
            if drains[pos]:
                for rep in unheld:
                    m = IdrMove(int(a), Arrow.DOWN, int(rep))
                    if _applies(p, m, step, inst):
                        moves.append(m)
            else:
                m = IdrMove(int(a), Arrow.DOWN)
                if _applies(p, m, step, inst):
                    moves.append(m)
        return moves

    raise ValueError(f"unknown relation: {relation!r}")


def _applies(p: Portfolio, m: Move, step: float, inst: Instance) -> bool:
    try:
        apply_move(p, m, step, inst)
    except MoveRejectedError:
        return False
    return True


def random_move(
    p: Portfolio,
    relation: Relation,
    step: float,
    inst: Instance,
    rng: np.random.Generator,
) -> Move | None:
    """Uniform draw from the applicable moves of ``relation``, or None.

    Sampling is structural with rejection, which keeps single-move search
    techniques cheap; each applicable move has equal probability.
    """
    for _ in range(8 * inst.n):
        m = _random_candidate(p, relation, step, inst, rng)
        if m is not None and _applies(p, m, step, inst):
            return m
    moves = enumerate_moves(p, relation, step, inst)
    if not moves:
        return None
    return moves[int(rng.integers(len(moves)))]


def _random_candidate(
    p: Portfolio,
    relation: Relation,
    step: float,
    inst: Instance,
    rng: np.random.Generator,
) -> Move | None:
    n, k = inst.n, inst.max_assets
    held = p.assets
    if relation is Relation.TID:
        src = int(held[rng.integers(len(p))])
        dst = int(rng.integers(n - 1))
        if dst >= src:
            dst += 1
        return TidMove(src, dst)
    if relation is Relation.IDID:
        n_insert = (n - len(p)) if len(p) < k else 0
        i = int(rng.integers(2 * len(p) + n_insert))
        if i < 2 * len(p):
            return IdidMove(int(held[i // 2]), Arrow.UP if i % 2 == 0 else Arrow.DOWN)
        unheld = np.setdiff1d(np.arange(n), held)
        return IdidMove(int(unheld[i - 2 * len(p)]), Arrow.INSERT)
    if relation is Relation.IDR:
        drains = _idr_drains(p, step, inst)
        n_unheld = n - len(p)
        counts = np.where(drains, 1 + n_unheld, 2)
        total = int(np.sum(counts))
        if total == 0:
            return None
        i = int(rng.integers(total))
        cum = np.cumsum(counts)
        pos = int(np.searchsorted(cum, i, side="right"))
        offset = i - (cum[pos - 1] if pos else 0)
        asset = int(held[pos])
        if offset == 0:
            return IdrMove(asset, Arrow.UP)
        if not drains[pos]:
            return IdrMove(asset, Arrow.DOWN)
        unheld = np.setdiff1d(np.arange(n), held)
        return IdrMove(asset, Arrow.DOWN, int(unheld[offset - 1]))
    raise ValueError(f"unknown relation: {relation!r}")
