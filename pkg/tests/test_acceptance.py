"""Acceptance suite: one test per release criterion, run at full protocol.

Each test prints a single ``ACCEPT <name>: PASS`` line on success (visible
with ``pytest -s`` or in the captured output); failures raise with the
measured numbers.  The quantitative solver criteria run on the bundled
98-asset benchmark (``data/port4.txt``) with its exact reference frontier.

This module is the slow part of the suite (tens of minutes at full
protocol); everything else in tests/ stays fast.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import pytest

from portsel import (
    PenaltyState,
    Relation,
    RunnerConfig,
    SingleRunner,
    StepPolicy,
    SweepConfig,
    Technique,
    TokenRing,
    apply_move,
    avg_percent_loss,
    best_of_random,
    check_portfolio,
    draw_step,
    enumerate_moves,
    evaluate,
    load_instance,
    load_uef,
    merge_acef,
    random_portfolio,
    run_tabu,
    sensitivity_study,
    sweep,
    update_penalty,
)
from portsel.cli import main
from conftest import DATA_DIR, make_instance
from oracles import W0, grid_optimum

pytestmark = pytest.mark.acceptance

PORT4 = DATA_DIR / "port4.txt"
PORTEF4 = DATA_DIR / "portef4.txt"

#: Full published protocol: 100 grid points, 4 trials, 50k-iteration cap.
TRIALS = 4
MAX_ITERS = 50_000


def report(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPT {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def inst4():
    return load_instance(PORT4)


@pytest.fixture(scope="module")
def uef4():
    return load_uef(PORTEF4)


def ts(relation: Relation, q: float, **kw) -> SingleRunner:
    return SingleRunner(Technique.TABU, RunnerConfig(
        relation=relation, step=StepPolicy.randomized(q), max_iters=MAX_ITERS, **kw))


def table2_losses(inst, uef, seed):
    """The three quantitative single-runner rows, full protocol."""
    rows = {
        "ts-tid": ts(Relation.TID, 0.3),
        "ts-idid": ts(Relation.IDID, 0.4),
        "hc-tid": SingleRunner(Technique.HILL_CLIMBING, RunnerConfig(
            relation=Relation.TID, step=StepPolicy.randomized(0.2),
            hc_mode="random", max_iters=MAX_ITERS)),
    }
    out = {}
    for name, solver in rows.items():
        pts = sweep(inst, uef, SweepConfig(solver=solver, trials=TRIALS, seed=seed))
        out[name] = avg_percent_loss(pts)
    return out


# --- criterion: feasibility closure -------------------------------------

@pytest.mark.parametrize("relation", list(Relation))
def test_feasibility_closure_100k_applications(inst4, relation):
    rng = np.random.default_rng(2024 + list(Relation).index(relation))
    policy = StepPolicy.randomized(0.3)
    applications = 0
    started = time.perf_counter()
    state = random_portfolio(inst4, 10, rng)
    while applications < 100_000:
        step = draw_step(policy, rng)
        moves = enumerate_moves(state, relation, step, inst4)
        if not moves:
            state = random_portfolio(inst4, int(rng.integers(1, 11)), rng)
            continue
        picks = rng.integers(len(moves), size=min(len(moves), 120))
        for i in picks:
            out = apply_move(state, moves[int(i)], step, inst4)
            check_portfolio(out, inst4)  # sum, bounds, cardinality, duplicates
            applications += 1
        # walk on from one of the applied moves, occasionally restarting
        state = apply_move(state, moves[int(picks[0])], step, inst4)
        if rng.random() < 0.02:
            state = random_portfolio(inst4, int(rng.integers(1, 11)), rng)
    elapsed = time.perf_counter() - started
    report(f"feasibility-closure-{relation.value}", elapsed < 60.0,
           f"{applications} applications, 0 violations, {elapsed:.1f}s")


# --- criterion: oracle equivalence on tiny instances ---------------------

def test_grid_oracle_equivalence():
    worst = 0.0
    for idx in range(20):
        n = 3 + idx % 3                      # universe sizes 3..5
        k = 1 + (idx % 2)                    # cardinality bound 1..2
        inst = make_instance(n, seed=500 + idx, max_assets=k, min_frac=0.1)
        lo, hi = float(np.min(inst.returns)), float(np.max(inst.returns))
        r_target = lo + (0.25 + 0.5 * ((idx * 37) % 100) / 100.0) * (hi - lo)
        target = grid_optimum(inst, r_target, resolution=0.01)
        best = np.inf
        for seed in range(5):
            rng = np.random.default_rng(9000 + 10 * idx + seed)
            s0 = best_of_random(inst, k, r_target, 100, rng)
            res = run_tabu(s0, RunnerConfig(
                relation=Relation.TID, step=StepPolicy.randomized(0.3),
                max_idle=1000, max_iters=20_000), inst, r_target, rng)
            best = min(best, evaluate(res.best, inst, r_target, W0).weighted)
        ratio = best / target
        worst = max(worst, ratio)
        assert ratio <= 1.02, f"instance {idx}: {best} vs grid {target}"
    report("grid-oracle-equivalence", worst <= 1.02,
           f"20 instances, worst cost ratio {worst:.4f} (limit 1.02)")


# --- criterion: single-solver comparison bands ---------------------------

@pytest.fixture(scope="module")
def table2(inst4, uef4):
    return table2_losses(inst4, uef4, seed=1)


def test_table2_ts_tid_band(table2):
    loss = table2["ts-tid"]
    report("table2-ts-tid", loss <= 6.0, f"mean loss {loss:.3f}% (limit 6.0)")


def test_table2_ts_idid_band(table2):
    loss = table2["ts-idid"]
    report("table2-ts-idid", loss <= 7.0, f"mean loss {loss:.3f}% (limit 7.0)")


def test_table2_hc_band_and_ordering(table2):
    loss = table2["hc-tid"]
    ok = 20.0 <= loss <= 45.0 and table2["ts-tid"] < loss
    report("table2-hc-tid", ok,
           f"mean loss {loss:.3f}% (band [20, 45]), ts-tid {table2['ts-tid']:.3f}%")


# --- criterion: token-ring beats the single runners ----------------------

def test_table3_token_ring(inst4, uef4, table2):
    ring = TokenRing(runners=(
        (Technique.TABU, RunnerConfig(relation=Relation.TID,
                                      step=StepPolicy.randomized(0.4),
                                      max_iters=MAX_ITERS)),
        (Technique.TABU, RunnerConfig(relation=Relation.IDR,
                                      step=StepPolicy.randomized(0.05),
                                      max_iters=MAX_ITERS)),
    ))
    pts = sweep(inst4, uef4, SweepConfig(solver=ring, trials=TRIALS, seed=1))
    loss = avg_percent_loss(pts)
    best_single = min(table2.values())
    ok = loss <= 5.5 and loss < best_single
    report("table3-token-ring", ok,
           f"ring {loss:.3f}% (limit 5.5) vs best single {best_single:.3f}%")


# --- criterion: benchmark suite sanity ------------------------------------

def test_table1_sizes_and_reference_mean():
    sizes = []
    for suffix in "12345":
        inst = load_instance(DATA_DIR / f"port{suffix}.txt")
        sizes.append(inst.n)
    mean4 = load_uef(PORTEF4).mean_variance()
    ok = sizes == [31, 85, 89, 98, 225] and abs(mean4 - 0.502038e-3) < 1e-9
    report("table1-sanity", ok,
           f"sizes {sizes}, instance-4 mean reference variance {mean4:.9e}")


# --- criterion: constraint sensitivity ------------------------------------

def sensitivity_losses(inst, uef, parameter, values, *, seeds=(1, 2)):
    solver = ts(Relation.TID, 0.3, max_idle=400)
    out = []
    for value in values:
        if parameter == "k":
            trial = inst.with_constraints(max_assets=int(value))
        else:
            trial = inst.with_constraints(min_frac=float(value))
        runs = [sweep(trial, uef, SweepConfig(solver=solver, trials=2, seed=s,
                                              workers=2))
                for s in seeds]
        out.append(avg_percent_loss(merge_acef(runs)))
    return out


def test_sensitivity_cardinality_monotone(inst4, uef4):
    ks = [5, 10, 20, 30, 40]
    losses = sensitivity_losses(inst4, uef4, "k", ks)
    weakly_decreasing = all(a >= b - 1e-12 for a, b in zip(losses, losses[1:]))
    tail = abs(losses[-2] - losses[-1])
    ok = weakly_decreasing and tail < 0.2
    report("sensitivity-cardinality", ok,
           "loss(k)=" + ", ".join(f"{k}:{v:.3f}" for k, v in zip(ks, losses))
           + f"; |k30-k40|={tail:.3f}pp")


def test_sensitivity_min_fraction_monotone(inst4, uef4):
    eps = [0.01, 0.05, 0.1, 0.2]
    inst = inst4.with_constraints(max_assets=20)
    losses = sensitivity_losses(inst, uef4, "eps", eps)
    ok = all(b >= a - 1e-12 for a, b in zip(losses, losses[1:]))
    report("sensitivity-min-fraction", ok,
           "loss(eps)=" + ", ".join(f"{e}:{v:.3f}" for e, v in zip(eps, losses)))


# --- criterion: shifting-penalty unit behaviour ---------------------------

def test_shifting_penalty_thresholds():
    rng = np.random.default_rng(0)
    ok = True
    for trial in range(200):
        w = PenaltyState(w1=1000.0)
        for i in range(19):
            w = update_penalty(w, violated=False, rng=rng)
            ok &= w.w1 == 1000.0
        w = update_penalty(w, violated=False, rng=rng)  # 20th feasible call
        ok &= 500.0 <= w.w1 <= 1000.0 / 1.5
        before = w.w1
        w = update_penalty(w, violated=True, rng=rng)   # H=1: one violation
        ok &= 1.5 * before <= w.w1 <= 2.0 * before
    report("shifting-penalty", ok,
           "w1/gamma after exactly 20 feasible, w1*gamma after 1 violated, "
           "gamma in [1.5, 2]; 200 randomized repetitions")


# --- criterion: CLI determinism -------------------------------------------

def test_cli_byte_identical_repeats(tmp_path):
    port1 = DATA_DIR / "port1.txt"
    portef1 = DATA_DIR / "portef1.txt"
    outs = []
    for rep in range(2):
        out = tmp_path / f"frontier{rep}.csv"
        rc = main(["frontier", "--instance", str(port1), "--uef", str(portef1),
                   "--trials", "2", "--seed", "11", "--idle", "120",
                   "--q", "0.3", "--out", str(out)])
        assert rc == 0
        outs.append(out.read_bytes())
    same_frontier = outs[0] == outs[1]

    solves = []
    for rep in range(2):
        out = tmp_path / f"solve{rep}.txt"
        rc = main(["solve", "--instance", str(port1), "--return", "0.004",
                   "--seed", "3", "--idle", "150", "--out", str(out)])
        assert rc == 0
        solves.append(out.read_bytes())
    ok = same_frontier and solves[0] == solves[1]
    report("cli-determinism", ok,
           f"frontier CSV identical: {same_frontier}; solve identical: {solves[0] == solves[1]}")
