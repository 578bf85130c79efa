from __future__ import annotations

import numpy as np
import pytest

from portsel import (
    Arrow,
    IdidMove,
    IdrMove,
    Instance,
    MoveRejectedError,
    Portfolio,
    Relation,
    StepPolicy,
    TidMove,
    apply_move,
    check_portfolio,
    draw_step,
    enumerate_moves,
    is_inverse,
    random_move,
    random_portfolio,
)
from conftest import make_instance


def test_draw_step_fixed():
    rng = np.random.default_rng(1)
    policy = StepPolicy(0.3)
    assert all(draw_step(policy, rng) == 0.3 for _ in range(10))


def test_draw_step_full_spread_statistics():
    rng = np.random.default_rng(2)
    policy = StepPolicy.randomized(0.4)
    draws = np.array([draw_step(policy, rng) for _ in range(100_000)])
    assert np.all((draws > 0.0) & (draws <= 0.8))
    assert abs(draws.mean() - 0.4) < 0.01


def test_draw_step_small_range():
    rng = np.random.default_rng(3)
    policy = StepPolicy.randomized(0.05)
    draws = np.array([draw_step(policy, rng) for _ in range(100_000)])
    assert np.all((draws > 0.0) & (draws <= 0.1))


def test_step_policy_validation():
    with pytest.raises(Exception):
        StepPolicy(0.0)
    with pytest.raises(Exception):
        StepPolicy(0.5, 0.6)


def test_is_inverse_examples():
    assert is_inverse(IdidMove(3, Arrow.UP), IdidMove(3, Arrow.DOWN))
    assert is_inverse(IdidMove(3, Arrow.INSERT), IdidMove(3, Arrow.DOWN))
    assert not is_inverse(IdidMove(3, Arrow.UP), IdidMove(4, Arrow.DOWN))
    assert is_inverse(TidMove(1, 5), TidMove(5, 1))
    assert not is_inverse(TidMove(1, 5), TidMove(1, 5))
    assert is_inverse(IdrMove(2, Arrow.UP), IdrMove(2, Arrow.DOWN, 9))
    with pytest.raises(ValueError):
        is_inverse(TidMove(1, 5), IdidMove(1, Arrow.UP))


def test_is_inverse_symmetric_for_tid():
    rng = np.random.default_rng(4)
    for _ in range(200):
        a, b, c, d = rng.integers(0, 10, size=4)
        if a == b or c == d:
            continue
        m1, m2 = TidMove(int(a), int(b)), TidMove(int(c), int(d))
        assert is_inverse(m1, m2) == is_inverse(m2, m1)


def equal_split_state(inst: Instance, members) -> Portfolio:
    members = np.asarray(members)
    return Portfolio(members, np.full(members.size, 1.0 / members.size))


def test_idr_size_linear_when_no_asset_near_minimum(inst98):
    p = equal_split_state(inst98, np.arange(10))
    moves = enumerate_moves(p, Relation.IDR, 0.2, inst98)  # 0.1 * 0.8 >= 0.01
    assert len(moves) == 2 * 10


def test_idr_size_quadratic_when_all_assets_drain(inst98):
    inst = inst98.with_constraints(min_frac=0.0999)
    p = equal_split_state(inst, np.arange(10))
    moves = enumerate_moves(p, Relation.IDR, 0.005, inst)
    # 10 increases plus 10 deletions fanning out over the 88 unheld assets
    assert len(moves) == 10 + 10 * 88
    downs = [m for m in moves if m.arrow is Arrow.DOWN]
    assert all(m.replacement is not None for m in downs)


def test_tid_candidate_count(inst98):
    inst = inst98.with_constraints(max_assets=11)
    p = equal_split_state(inst, np.arange(10))
    moves = enumerate_moves(p, Relation.TID, 0.1, inst)
    assert len(moves) == 10 * (inst.n - 1)


def test_idid_count_and_insert_suppression(inst98):
    p = equal_split_state(inst98, np.arange(10))
    moves = enumerate_moves(p, Relation.IDID, 0.2, inst98)
    # |L| == k: inserts are suppressed
    assert len(moves) == 2 * 10
    bigger = inst98.with_constraints(max_assets=11)
    moves = enumerate_moves(p, Relation.IDID, 0.2, bigger)
    assert len(moves) == 2 * 10 + 88


def test_tid_transfer_bumps_to_destination_minimum():
    inst = make_instance(4, seed=0, min_frac=0.05, max_assets=4)
    p = Portfolio([0, 1], [0.5, 0.5])
    out = apply_move(p, TidMove(0, 2), 0.01, inst)
    # 0.01 * 0.5 = 0.005 < eps_j: the transferred quantity becomes eps_j
    assert out.as_dict()[2] == pytest.approx(0.05, abs=1e-15)
    assert out.as_dict()[0] == pytest.approx(0.45, abs=1e-15)


def test_tid_drains_source_below_minimum():
    inst = make_instance(4, seed=0, min_frac=0.05, max_assets=4)
    p = Portfolio([0, 1], [0.12, 0.88])
    out = apply_move(p, TidMove(0, 1), 0.7, inst)
    # 0.12 * 0.3 = 0.036 < 0.05: the whole share moves and the source leaves
    assert out.as_dict() == {1: pytest.approx(1.0)}


def test_idr_down_threshold_deletes_and_replaces():
    inst = make_instance(5, seed=1, min_frac=0.01, max_assets=5)
    p = Portfolio([0, 1], [0.011, 0.989])
    out = apply_move(p, IdrMove(0, Arrow.DOWN, 3), 0.2, inst)
    # 0.011 * 0.8 = 0.0088 < 0.01: delete asset 0, insert 3 at its minimum
    held = out.as_dict()
    assert 0 not in held
    assert held[3] == pytest.approx(0.01, abs=1e-15)
    assert len(out) == 2
    # without a named replacement the same decrease cannot apply
    with pytest.raises(MoveRejectedError):
        apply_move(p, IdrMove(0, Arrow.DOWN), 0.2, inst)


def test_idid_up_caps_at_maximum():
    free = make_instance(3, seed=2, min_frac=0.0, max_assets=3)
    p = Portfolio([0, 1, 2], [0.9, 0.06, 0.04])
    out = apply_move(p, IdidMove(0, Arrow.UP), 0.2, free)
    # 0.9 * 1.2 > 1 so the fraction caps at the maximum; with zero minimums
    # the other holdings are squeezed to zero but stay in the portfolio
    assert out.as_dict()[0] == 1.0
    assert out.as_dict()[1] == 0.0
    tight = make_instance(3, seed=2, min_frac=0.02, max_assets=3)
    with pytest.raises(MoveRejectedError):
        apply_move(p, IdidMove(0, Arrow.UP), 0.2, tight)


def test_idr_preserves_cardinality(inst20):
    rng = np.random.default_rng(6)
    for _ in range(300):
        p = random_portfolio(inst20, int(rng.integers(2, 11)), rng)
        step = draw_step(StepPolicy.randomized(0.3), rng)
        m = random_move(p, Relation.IDR, step, inst20, rng)
        if m is None:
            continue
        out = apply_move(p, m, step, inst20)
        assert len(out) == len(p)


@pytest.mark.parametrize("relation,allowed", [
    (Relation.IDID, {-1, 0, 1}),
    (Relation.TID, {-1, 0, 1}),
])
def test_cardinality_change_bounds(inst20, relation, allowed):
    rng = np.random.default_rng(7)
    for _ in range(300):
        p = random_portfolio(inst20, int(rng.integers(1, 11)), rng)
        step = draw_step(StepPolicy.randomized(0.3), rng)
        m = random_move(p, relation, step, inst20, rng)
        if m is None:
            continue
        out = apply_move(p, m, step, inst20)
        assert len(out) - len(p) in allowed


@pytest.mark.parametrize("relation", list(Relation))
def test_closure_random_walks(inst20, relation):
    rng = np.random.default_rng(8)
    p = random_portfolio(inst20, 6, rng)
    applications = 0
    while applications < 3000:
        step = draw_step(StepPolicy.randomized(0.3), rng)
        m = random_move(p, relation, step, inst20, rng)
        if m is None:
            p = random_portfolio(inst20, int(rng.integers(1, 11)), rng)
            continue
        p = apply_move(p, m, step, inst20)
        check_portfolio(p, inst20)
        applications += 1
        if applications % 100 == 0:
            p = random_portfolio(inst20, int(rng.integers(1, 11)), rng)


def test_enumerated_moves_all_apply(inst20):
    rng = np.random.default_rng(9)
    for relation in Relation:
        for _ in range(10):
            p = random_portfolio(inst20, int(rng.integers(1, 11)), rng)
            step = draw_step(StepPolicy.randomized(0.4), rng)
            for m in enumerate_moves(p, relation, step, inst20):
                out = apply_move(p, m, step, inst20)
                check_portfolio(p, inst20)
                assert abs(float(np.sum(out.fractions)) - 1.0) <= 1e-9
