import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ea_active.analysis import (
    LearningCurve,
    aggregate,
    auc,
    format_table,
    welch_t_test,
    write_aggregate_csv,
    write_curves_csv,
)


def curve(xs, ys, total=None):
    return LearningCurve(tuple(xs), tuple(ys), total_queries=total)


def dense_oracle(xs, ys, total, n=200_001):
    """Midpoint Riemann sum of the piecewise-linear interpolant, prefix and carry-forward included."""
    grid = (np.arange(n) + 0.5) * (total / n)
    px = [0] + list(xs) + [total]
    py = [ys[0]] + list(ys) + [ys[-1]]
    return float(np.interp(grid, px, py).mean())


def test_constant_one():
    assert auc(curve([10, 20, 30], [1.0, 1.0, 1.0]), 30) == 1.0


def test_triangle():
    assert auc(curve([0, 100], [0.0, 1.0]), 100) == pytest.approx(0.5)


def test_prefix_and_carry_forward():
    # (0, .5) -> (10, .5) -> (20, 1) -> carried to 40
    assert auc(curve([10, 20], [0.5, 1.0]), 40) == pytest.approx((5 + 7.5 + 20) / 40)


def test_staircase_against_dense_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        xs = np.cumsum(rng.integers(1, 30, size=rng.integers(1, 15)))
        ys = rng.random(len(xs))
        total = int(xs[-1] + rng.integers(0, 50))
        got = auc(curve(xs.tolist(), ys.tolist()), total)
        # the midpoint rule is exact for linear pieces except those straddling a knot
        assert abs(got - dense_oracle(xs, ys, total)) < 1e-6


def test_staircase_exact_piecewise():
    rng = np.random.default_rng(1)
    for _ in range(20):
        xs = np.cumsum(rng.integers(1, 30, size=rng.integers(1, 15)))
        ys = rng.random(len(xs))
        total = int(xs[-1] + rng.integers(0, 50))
        px = [0] + xs.tolist() + [total]
        py = [ys[0]] + ys.tolist() + [ys[-1]]
        exact = sum((px[i + 1] - px[i]) * (py[i] + py[i + 1]) / 2 for i in range(len(px) - 1)) / total
        assert abs(auc(curve(xs.tolist(), ys.tolist()), total) - exact) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.floats(0, 1), st.integers(0, 2**31 - 1))
def test_dominating_curve_has_larger_auc(ys, bump, seed):
    rng = np.random.default_rng(seed)
    xs = np.cumsum(rng.integers(1, 10, size=len(ys))).tolist()
    higher = [min(1.0, y + bump * rng.random()) for y in ys]
    total = xs[-1] + 5
    assert auc(curve(xs, higher), total) >= auc(curve(xs, ys), total) - 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=10), st.integers(0, 2**31 - 1))
def test_collinear_insertion_invariant(ys, seed):
    rng = np.random.default_rng(seed)
    xs = (np.cumsum(rng.integers(2, 10, size=len(ys))) * 2).tolist()
    i = int(rng.integers(len(xs) - 1))
    mid_x = (xs[i] + xs[i + 1]) // 2
    if mid_x in (xs[i], xs[i + 1]):
        return
    t = (mid_x - xs[i]) / (xs[i + 1] - xs[i])
    mid_y = ys[i] + t * (ys[i + 1] - ys[i])
    x2 = xs[: i + 1] + [mid_x] + xs[i + 1 :]
    y2 = ys[: i + 1] + [mid_y] + ys[i + 1 :]
    assert auc(curve(x2, y2), xs[-1]) == pytest.approx(auc(curve(xs, ys), xs[-1]), abs=1e-12)


def test_curve_validation():
    with pytest.raises(ValueError):
        curve([1, 1], [0.0, 0.0])
    with pytest.raises(ValueError):
        curve([1, 2], [0.0, math.nan])
    with pytest.raises(ValueError):
        auc(curve([10, 20], [0.0, 0.0]), 15)


def test_welch_identical():
    r = welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert r.t == 0 and r.p == pytest.approx(1.0)


def test_welch_shifted():
    a = np.tile([1.0, 1.1, 0.9], 5) + 10
    b = np.tile([1.0, 1.1, 0.9], 5)
    assert welch_t_test(a, b).p < 1e-6


def test_welch_symmetry_and_reference():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.normal(size=rng.integers(2, 10)), rng.normal(0.5, 2, size=rng.integers(2, 10))
        ab, ba = welch_t_test(a, b), welch_t_test(b, a)
        assert ab.t == pytest.approx(-ba.t) and ab.p == pytest.approx(ba.p)
        ref = stats.ttest_ind(a, b, equal_var=False)
        assert ab.t == pytest.approx(ref.statistic) and ab.p == pytest.approx(ref.pvalue)
        assert 0.0 <= ab.p <= 1.0


def test_welch_zero_variance():
    assert welch_t_test([2.0, 2.0], [2.0, 2.0]).p == 1.0
    r = welch_t_test([3.0, 3.0], [2.0, 2.0])
    assert r.p == 0.0 and r.t == math.inf


def test_welch_needs_two_values():
    with pytest.raises(ValueError):
        welch_t_test([1.0], [1.0, 2.0])


def test_aggregate_identical_runs():
    rows = aggregate({"rnd": [0.3] * 5})
    assert rows[0].std_auc == 0.0 and rows[0].p_vs_rnd is None


def test_aggregate_flags_disjoint_ranges():
    runs = {"rnd": [0.10, 0.11, 0.12, 0.105, 0.115], "betw": [0.20, 0.21, 0.22, 0.205, 0.215]}
    rows = {r.heuristic: r for r in aggregate(runs)}
    assert rows["betw"].significant
    assert rows["betw"].p_vs_rnd == pytest.approx(welch_t_test(runs["betw"], runs["rnd"]).p)
    assert rows["betw"].std_auc == pytest.approx(np.std(runs["betw"], ddof=1))
    assert rows["rnd"].significant is None


def test_aggregate_without_baseline_warns(caplog):
    rows = aggregate({"deg": [0.1, 0.2]})
    assert rows[0].significant is None
    assert "significance" in caplog.text


def test_single_run_table():
    rows = aggregate({"rnd": [0.25]})
    assert math.isnan(rows[0].std_auc)
    text = format_table(rows)
    assert text.splitlines()[1].startswith("rnd")
    assert "*" not in text


def test_csv_outputs(tmp_path):
    rows = aggregate({"rnd": [0.1, 0.12], "deg": [0.3, 0.31]})
    write_aggregate_csv(rows, tmp_path / "agg.csv")
    with open(tmp_path / "agg.csv") as fh:
        table = list(csv.DictReader(fh))
    assert [r["heuristic"] for r in table] == ["deg", "rnd"]
    curves = [LearningCurve((10, 20), (0.1, 0.2), "rnd", 0), LearningCurve((10,), (0.3,), "deg", 1)]
    write_curves_csv(curves, tmp_path / "curves.csv")
    lines = (tmp_path / "curves.csv").read_text().splitlines()
    assert lines == ["heuristic,seed,queries,score", "rnd,0,10,0.1", "rnd,0,20,0.2", "deg,1,10,0.3"]
