"""Vectorized single-iteration neighborhood evaluation.

The search engines need the cost of every candidate move at each iteration.
Doing that through ``apply_move`` + ``evaluate`` is O(moves * p^2); this
module computes the same numbers with closed-form incremental algebra:

* transfers change two coordinates, so the new variance is a rank-two
  update of the current one;
* the increase/decrease/insert/replace families pin one asset and rescale
  every other held fraction affinely (``eps + s * (x - eps)``), so the new
  variance is a quadratic polynomial in ``s`` whose coefficients are shared
  across all candidates of an iteration.

Candidates that would trip the max-fraction clamp inside renormalization
(rare under benchmark bounds) are routed through the exact slow path so
that the scan agrees with ``enumerate_moves`` + ``apply_move`` everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MoveRejectedError
from .instance import Instance
from .portfolio import MASS_TOL, PenaltyState, Portfolio, evaluate
from .neighborhood import (
    Arrow,
    IdidMove,
    IdrMove,
    Move,
    Relation,
    TidMove,
    apply_move,
)

CODE_TID = 0
CODE_UP = 1
CODE_DOWN = 2
CODE_REPLACE = 3
CODE_INSERT = 4

#: Arrow index used for tabu lookups, per move code (TID handled apart).
ARROW_OF_CODE = np.array([0, Arrow.UP, Arrow.DOWN, Arrow.DOWN, Arrow.INSERT], dtype=np.int64)

_EVAL_W = PenaltyState()


@dataclass
class ScanResult:
    """Flat per-candidate arrays for one (state, relation, step) scan."""

    relation: Relation
    step: float
    codes: np.ndarray
    a: np.ndarray
    b: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    ok: np.ndarray

    def __len__(self) -> int:
        return self.codes.size

    def move_at(self, i: int) -> Move:
        code = int(self.codes[i])
        a = int(self.a[i])
        b = int(self.b[i])
        if code == CODE_TID:
            return TidMove(a, b)
        if code == CODE_INSERT:
            return IdidMove(a, Arrow.INSERT)
        arrow = Arrow.UP if code == CODE_UP else Arrow.DOWN
        if self.relation is Relation.IDR:
            return IdrMove(a, arrow, b if code == CODE_REPLACE else None)
        return IdidMove(a, arrow)


class _Ctx:
    """Shared per-iteration quantities for one state.

    The affine terms (min-fraction cross sums, clamp thresholds) are only
    needed by the id* families; transfer scans skip them.
    """

    def __init__(self, p: Portfolio, inst: Instance, *, affine: bool):
        a = p.assets
        x = p.fractions
        self.inst = inst
        self.p = p
        self.assets = a
        self.x = x
        self.eps_h = inst.min_frac[a]
        self.dlt_h = inst.max_frac[a]
        self.r_h = inst.returns[a]
        self.diag_h = inst.cov[a, a]
        cov_cols = inst.cov[:, a]                      # (n, p)
        self.c_all = cov_cols @ x                      # c_i = sum_l cov[i,l] x_l
        self.c_h = self.c_all[a]
        self.q_xx = float(x @ self.c_h)
        self.sr_x = float(self.r_h @ x)
        self.e_sum = float(np.sum(self.eps_h))
        self.f_sum = float(np.sum(x) - self.e_sum)
        self.held_mask = np.zeros(inst.n, dtype=bool)
        self.held_mask[a] = True
        self.x_dense = np.zeros(inst.n)
        self.x_dense[a] = x
        if not affine:
            return
        self.ec_all = cov_cols @ self.eps_h
        self.ec_h = self.ec_all[a]
        self.q_xe = float(x @ self.ec_h)
        self.q_ee = float(self.eps_h @ self.ec_h)
        self.sr_e = float(self.r_h @ self.eps_h)
        # scale factor at which some non-pinned held asset hits its max
        surplus = x - self.eps_h
        with np.errstate(divide="ignore"):
            g = np.where(surplus > 1e-15,
                         (self.dlt_h - self.eps_h) / np.maximum(surplus, 1e-300),
                         np.inf)
        self.g = g
        order = np.argsort(g, kind="stable")
        self.g_min = g[order[0]] if g.size else np.inf
        self.g_second = g[order[1]] if g.size > 1 else np.inf
        self.g_argmin = int(order[0]) if g.size else -1

    def g_min_excluding(self, pos: np.ndarray) -> np.ndarray:
        """Smallest clamp threshold over held assets other than ``pos``."""
        return np.where(pos == self.g_argmin, self.g_second, self.g_min)


def _affine_f2_ret(
    s: np.ndarray,
    qxx, qxe, qee,
    pin_v, pin_cx, pin_ce, pin_var,
    ret_x, ret_e, pin_ret,
) -> tuple[np.ndarray, np.ndarray]:
    one_m = 1.0 - s
    f2 = (
        s * s * qxx
        + 2.0 * s * one_m * qxe
        + one_m * one_m * qee
        + 2.0 * pin_v * (s * pin_cx + one_m * pin_ce)
        + pin_v * pin_v * pin_var
    )
    ret = s * ret_x + one_m * ret_e + pin_ret
    return f2, ret


def _scale_solution(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mirror of renormalize's scale computation: (s, reject_mask)."""
    tiny_pool = den <= MASS_TOL
    reject = (num < -MASS_TOL) | (tiny_pool & (num > 1e-9))
    s = np.where(tiny_pool, 0.0, np.maximum(num, 0.0) / np.where(tiny_pool, 1.0, den))
    return s, reject


def scan_neighborhood(
    p: Portfolio,
    relation: Relation,
    step: float,
    inst: Instance,
    r_target: float,
) -> ScanResult:
    """Evaluate every candidate move; mirrors enumerate_moves + apply_move."""
    ctx = _Ctx(p, inst, affine=relation is not Relation.TID)
    if relation is Relation.TID:
        parts = [_scan_tid(ctx, step, r_target)]
    elif relation is Relation.IDID:
        parts = [_scan_up_down(ctx, step, r_target, with_replacement=False)]
        if len(p) < inst.max_assets:
            parts.append(_scan_insert(ctx, r_target))
    elif relation is Relation.IDR:
        parts = [_scan_up_down(ctx, step, r_target, with_replacement=True)]
    else:
        raise ValueError(f"unknown relation: {relation!r}")

    if len(parts) == 1:
        codes, a, b, f1, f2, ok, slow = parts[0]
    else:
        codes = np.concatenate([q[0] for q in parts])
        a = np.concatenate([q[1] for q in parts])
        b = np.concatenate([q[2] for q in parts])
        f1 = np.concatenate([q[3] for q in parts])
        f2 = np.concatenate([q[4] for q in parts])
        ok = np.concatenate([q[5] for q in parts])
        slow = np.concatenate([q[6] for q in parts])

    result = ScanResult(relation, step, codes, a, b, f1, f2, ok)
    for i in np.flatnonzero(slow & ok):
        try:
            moved = apply_move(p, result.move_at(int(i)), step, inst)
        except MoveRejectedError:
            ok[i] = False
            continue
        cost = evaluate(moved, inst, r_target, _EVAL_W)
        f1[i] = cost.return_violation
        f2[i] = cost.variance
    return result


def _scan_tid(ctx: _Ctx, step: float, r_target: float):
    inst = ctx.inst
    n = inst.n
    pn = ctx.assets.size
    src_x = ctx.x[:, None]
    eps_s = ctx.eps_h[:, None]
    eps_d = inst.min_frac[None, :]
    dlt_d = inst.max_frac[None, :]
    dst_held = ctx.held_mask[None, :]
    x_d = ctx.x_dense[None, :]

    t = step * src_x
    t = np.where(~dst_held & (t < eps_d), eps_d, t)
    drains = (src_x - t) < eps_s
    t = np.where(drains, src_x, t)

    reject = ctx.assets[:, None] == np.arange(n)[None, :]
    reject |= ~dst_held & (t < eps_d)
    if pn >= inst.max_assets:
        reject |= ~dst_held & ~drains
    reject |= dst_held & (x_d >= dlt_d)
    if pn == 1:
        reject |= drains & ~dst_held & (dlt_d < 1.0)
    slow = ~reject & ((x_d + t) > dlt_d)

    cov = inst.cov
    sigma_sd = cov[ctx.assets, :]                     # (p, n)
    dvar = (
        t * t * (ctx.diag_h[:, None] + cov.diagonal()[None, :] - 2.0 * sigma_sd)
        + 2.0 * t * (ctx.c_all[None, :] - ctx.c_h[:, None])
    )
    ret = ctx.sr_x + t * (inst.returns[None, :] - ctx.r_h[:, None])
    f2 = ctx.q_xx + dvar
    f1 = np.maximum(0.0, r_target - ret)

    codes = np.full(pn * n, CODE_TID, dtype=np.int8)
    a = np.repeat(ctx.assets, n)
    b = np.tile(np.arange(n, dtype=np.int64), pn)
    return codes, a, b, f1.ravel(), f2.ravel(), (~reject).ravel(), slow.ravel()


def _minus_u_terms(ctx: _Ctx):
    x_u = ctx.x
    e_u = ctx.eps_h
    qxx = ctx.q_xx - 2.0 * x_u * ctx.c_h + x_u * x_u * ctx.diag_h
    qxe = ctx.q_xe - x_u * ctx.ec_h - e_u * ctx.c_h + x_u * e_u * ctx.diag_h
    qee = ctx.q_ee - 2.0 * e_u * ctx.ec_h + e_u * e_u * ctx.diag_h
    ret_x = ctx.sr_x - x_u * ctx.r_h
    ret_e = ctx.sr_e - e_u * ctx.r_h
    e_sum = ctx.e_sum - e_u
    f_sum = ctx.f_sum - (x_u - e_u)
    return qxx, qxe, qee, ret_x, ret_e, e_sum, f_sum


def _scan_up_down(ctx: _Ctx, step: float, r_target: float, *, with_replacement: bool):
    """UP and DOWN candidates for every held asset (both id* families).

    DOWN moves that fall below the asset minimum become deletions; with
    ``with_replacement`` each deletion fans out over all unheld assets.
    """
    inst = ctx.inst
    pn = ctx.assets.size
    pos = np.arange(pn)
    qxx, qxe, qee, ret_x, ret_e, e_sum, f_sum = _minus_u_terms(ctx)
    g_lim = ctx.g_min_excluding(pos)
    pin_cx = ctx.c_h - ctx.x * ctx.diag_h
    pin_ce = ctx.ec_h - ctx.eps_h * ctx.diag_h

    out = []

    def emit(code, a, b, f1, f2, ok, slow):
        out.append((
            np.full(np.size(a), code, dtype=np.int8),
            np.asarray(a, dtype=np.int64).ravel(),
            np.asarray(np.broadcast_to(b, np.shape(a)), dtype=np.int64).ravel(),
            np.atleast_1d(f1).ravel(),
            np.atleast_1d(f2).ravel(),
            np.atleast_1d(ok).ravel(),
            np.atleast_1d(slow).ravel(),
        ))

    def pinned_eval(v):
        num = 1.0 - v - e_sum
        s, rej = _scale_solution(num, f_sum)
        f2, ret = _affine_f2_ret(
            s, qxx, qxe, qee, v, pin_cx, pin_ce, ctx.diag_h, ret_x, ret_e, v * ctx.r_h
        )
        slow = s >= g_lim * (1.0 - 1e-9)
        return np.maximum(0.0, r_target - ret), f2, ~rej, slow & ~rej

    # UP: pin at min(x * (1 + step), max_frac)
    v_up = np.minimum(ctx.x * (1.0 + step), ctx.dlt_h)
    f1, f2, ok, slow = pinned_eval(v_up)
    emit(CODE_UP, ctx.assets, -1, f1, f2, ok, slow)

    v_dn = ctx.x * (1.0 - step)
    drain = v_dn < ctx.eps_h

    # DOWN, non-deleting
    keep = ~drain
    if keep.any():
        f1, f2, ok, slow = pinned_eval(np.where(keep, v_dn, ctx.eps_h))
        emit(CODE_DOWN, ctx.assets[keep], -1, f1[keep], f2[keep], ok[keep], slow[keep])

    if not with_replacement:
        # DOWN that deletes the asset outright
        if drain.any():
            num = 1.0 - e_sum
            s, rej = _scale_solution(num, f_sum)
            zero = np.zeros(pn)
            f2, ret = _affine_f2_ret(s, qxx, qxe, qee, zero, zero, zero, zero, ret_x, ret_e, zero)
            rej |= pn == 1
            slow = (s >= g_lim * (1.0 - 1e-9)) & ~rej
            f1 = np.maximum(0.0, r_target - ret)
            emit(CODE_DOWN, ctx.assets[drain], -1, f1[drain], f2[drain], ~rej[drain], slow[drain])
    elif drain.any():
        # DOWN that deletes and brings in a named replacement
        unheld = np.flatnonzero(~ctx.held_mask)
        eps_b = inst.min_frac[unheld]
        r_b = inst.returns[unheld]
        var_b = inst.cov[unheld, unheld]
        for u in np.flatnonzero(drain):
            num = 1.0 - eps_b - e_sum[u]
            s, rej = _scale_solution(num, np.full(unheld.size, f_sum[u]))
            cov_bu = inst.cov[unheld, ctx.assets[u]]
            f2, ret = _affine_f2_ret(
                s, qxx[u], qxe[u], qee[u],
                eps_b,
                ctx.c_all[unheld] - ctx.x[u] * cov_bu,
                ctx.ec_all[unheld] - ctx.eps_h[u] * cov_bu,
                var_b,
                ret_x[u], ret_e[u], eps_b * r_b,
            )
            slow = (s >= g_lim[u] * (1.0 - 1e-9)) & ~rej
            f1 = np.maximum(0.0, r_target - ret)
            emit(CODE_REPLACE, np.full(unheld.size, ctx.assets[u]), unheld, f1, f2, ~rej, slow)

    codes = np.concatenate([q[0] for q in out])
    a = np.concatenate([q[1] for q in out])
    b = np.concatenate([q[2] for q in out])
    f1 = np.concatenate([q[3] for q in out])
    f2 = np.concatenate([q[4] for q in out])
    ok = np.concatenate([q[5] for q in out])
    slow = np.concatenate([q[6] for q in out])
    return codes, a, b, f1, f2, ok, slow


def _scan_insert(ctx: _Ctx, r_target: float):
    inst = ctx.inst
    unheld = np.flatnonzero(~ctx.held_mask)
    eps_b = inst.min_frac[unheld]
    num = 1.0 - eps_b - ctx.e_sum
    s, rej = _scale_solution(num, np.full(unheld.size, ctx.f_sum))
    f2, ret = _affine_f2_ret(
        s, ctx.q_xx, ctx.q_xe, ctx.q_ee,
        eps_b, ctx.c_all[unheld], ctx.ec_all[unheld], inst.cov[unheld, unheld],
        ctx.sr_x, ctx.sr_e, eps_b * inst.returns[unheld],
    )
    slow = (s >= ctx.g_min * (1.0 - 1e-9)) & ~rej
    f1 = np.maximum(0.0, r_target - ret)
    codes = np.full(unheld.size, CODE_INSERT, dtype=np.int8)
    return codes, unheld.astype(np.int64), np.full(unheld.size, -1, dtype=np.int64), f1, f2, ~rej, slow
