from __future__ import annotations

import numpy as np
import pytest

from portsel import (
    IncompleteMatrixError,
    Instance,
    InfeasibleError,
    ParseError,
    ValidationError,
    parse_instance,
    parse_uef,
    return_grid,
    serialize_instance,
)
from conftest import make_instance

ONE_ASSET = "1\n0.05 0.1\n1 1 1.0\n"
TWO_ASSET = "2\n0.004 0.01\n0.005 0.02\n1 1 1.0\n1 2 0.5\n2 2 1.0\n"


def test_parse_single_asset_variance():
    inst = parse_instance(ONE_ASSET)
    assert inst.n == 1
    assert inst.cov[0, 0] == pytest.approx(0.01, rel=1e-12)


def test_parse_cross_covariance_by_hand():
    # rho * sd_i * sd_j = 0.5 * 0.01 * 0.02
    inst = parse_instance(TWO_ASSET)
    assert inst.cov[0, 1] == pytest.approx(1.0e-4, rel=1e-12)
    assert inst.cov[0, 1] == inst.cov[1, 0]


def test_parse_defaults_are_overridable():
    inst = parse_instance(TWO_ASSET)
    assert inst.max_assets == 2  # default 10 capped at n
    assert np.all(inst.min_frac == 0.01)
    assert np.all(inst.max_frac == 1.0)
    inst = parse_instance(TWO_ASSET, min_frac=0.1, max_frac=0.9, max_assets=2)
    assert inst.max_assets == 2
    assert np.all(inst.min_frac == 0.1)
    assert np.all(inst.max_frac == 0.9)
    inst = parse_instance(TWO_ASSET, max_assets=1)
    assert inst.max_assets == 1


def test_parse_reports_line_numbers():
    with pytest.raises(ParseError) as exc:
        parse_instance("2\n0.004 0.01\nbogus 0.02\n1 1 1.0\n")
    assert exc.value.line == 3
    assert "bogus" in str(exc.value)


def test_parse_missing_pair_is_incomplete_matrix():
    with pytest.raises(IncompleteMatrixError):
        parse_instance("2\n0.004 0.01\n0.005 0.02\n1 1 1.0\n2 2 1.0\n")


def test_parse_duplicate_pair_rejected():
    with pytest.raises(ParseError):
        parse_instance(TWO_ASSET + "1 2 0.5\n")


def test_parse_correlation_out_of_range():
    with pytest.raises(ValidationError):
        parse_instance("1\n0.05 0.1\n1 1 1.5\n")


def test_parse_correlation_clamped_within_slack():
    inst = parse_instance("1\n0.05 0.1\n1 1 1.0000000005\n")
    assert inst.cov[0, 0] == pytest.approx(0.01, rel=1e-12)


def test_parse_tolerates_whitespace_and_blank_lines():
    messy = "\n\n  2\n0.004   0.01\n\n0.005 0.02\n  1 1 1.0\n1 2 0.5\n\n2 2 1.0\n\n  \n"
    inst = parse_instance(messy)
    assert inst.n == 2


def test_serialize_parse_round_trip():
    inst = make_instance(13, seed=5)
    back = parse_instance(
        serialize_instance(inst),
        min_frac=inst.min_frac,
        max_frac=inst.max_frac,
        max_assets=inst.max_assets,
    )
    assert np.array_equal(back.returns, inst.returns)
    assert np.allclose(back.cov, inst.cov, rtol=1e-14, atol=0.0)
    assert back.max_assets == inst.max_assets


def test_parsed_covariance_near_psd():
    text = serialize_instance(make_instance(40, seed=11))
    inst = parse_instance(text)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        v = rng.normal(size=inst.n)
        v /= np.linalg.norm(v)
        assert v @ inst.cov @ v >= -1e-12


def test_instance_invariant_validation():
    cov = np.array([[0.01, 0.0], [1e-5, 0.04]])  # asymmetric
    with pytest.raises(ValidationError):
        Instance(np.array([0.004, 0.005]), cov, np.zeros(2), np.ones(2), 2)
    sym = np.array([[0.01, 0.0], [0.0, 0.04]])
    with pytest.raises(ValidationError):  # min above max for one asset
        Instance(np.array([0.004, 0.005]), sym, np.array([0.6, 0.2]), np.array([0.5, 1.0]), 2)
    with pytest.raises(ValidationError):  # cardinality bound above n
        Instance(np.array([0.004, 0.005]), sym, np.zeros(2), np.ones(2), 3)


def test_cardinality_feasibility_check():
    sym = np.array([[0.01, 0.0], [0.0, 0.04]])
    # each asset capped at 0.4: even both together cannot reach weight 1
    with pytest.raises(InfeasibleError):
        Instance(np.array([0.004, 0.005]), sym, np.zeros(2), np.full(2, 0.4), 2)


def test_uef_two_lines_echo():
    uef = parse_uef("0.001 0.5\n0.002 0.6\n")
    assert np.array_equal(uef.returns, [0.001, 0.002])
    assert np.array_equal(uef.variances, [0.5, 0.6])


def test_uef_empty_rejected():
    with pytest.raises(ParseError):
        parse_uef("   \n \n")


def test_uef_sorted_and_duplicates_rejected():
    uef = parse_uef("0.002 0.6\n0.001 0.5\n")
    assert np.array_equal(uef.returns, [0.001, 0.002])
    with pytest.raises(ValidationError):
        parse_uef("0.001 0.5\n0.001 0.6\n")
    with pytest.raises(ParseError):
        parse_uef("0.001 oops\n")
    with pytest.raises(ValidationError):
        parse_uef("0.001 0.0\n")  # non-positive variance


def test_return_grid_echoes_reference():
    r = np.arange(1, 11) * 1e-3
    text = "\n".join(f"{x} {0.5 + i * 0.01}" for i, x in enumerate(r))
    uef = parse_uef(text)
    grid = return_grid(uef)
    assert np.array_equal(grid, r)
    single = parse_uef("0.003 0.25\n")
    assert np.array_equal(return_grid(single), [0.003])
