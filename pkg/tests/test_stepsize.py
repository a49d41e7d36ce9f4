import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dhcsp import ast as A
from dhcsp.parser import parse, parse_expr
from dhcsp.reference import integrate_dde, run_reference
from dhcsp.stepsize import (DEFAULT_SIGMA, MaxHalvings, ScheduleSegment, SimLists, StepConfig, check_schedule,
                            check_stepsize, com_stepsize_multi, com_stepsize_one, delay_offset, euler_step,
                            hull_width, stepsize_for_trace, tube_violations)

OPEN = "2.0 - 3.14 * 0.18 ^ 2 * sqrt(9.8 * (d + d@0.1))"


def spec(rhs, var="x"):
    return A.DdeSpec((var,), (parse_expr(rhs),))


def lattice(h, r):
    k = math.log2(r / h)
    return abs(k - round(k)) < 1e-9 and round(k) >= 0


# ---------------------------------------------------------------- pieces


def test_euler_identity():
    assert euler_step([3.0], [1.0], spec("0"), 0.5)[0] == 3.0


def test_euler_decay():
    assert euler_step([1.0], [1.0], spec("-x"), 0.1)[0] == pytest.approx(0.9)


def test_euler_open_valve():
    oracle = 4.5 + 0.025 * (2.0 - 3.14 * 0.18 ** 2 * math.sqrt(9.8 * 9.0))
    y = euler_step([4.5], [4.5], spec(OPEN, "d"), 0.025)[0]
    assert y == pytest.approx(oracle, abs=1e-12)
    # the quoted 4.5261138 uses a slope rounded to 1.044552
    assert y == pytest.approx(4.5261138, abs=1e-6)


def test_euler_rejects_bad_step():
    with pytest.raises(ValueError):
        euler_step([1.0], [1.0], spec("-x"), 0.0)


def test_hull_width_examples():
    assert hull_width(0.0, 0.0, 0.0, 0.0) == 0.0
    assert hull_width(4.5, 0.01, 4.526, 0.012) == pytest.approx(0.048)


@given(st.floats(-10, 10), st.floats(0, 1), st.floats(-10, 10), st.floats(0, 1))
def test_hull_width_symmetric(a, da, b, db):
    assert hull_width(a, da, b, db) == hull_width(b, db, a, da)
    assert hull_width(a, da, b, db) >= 2 * max(da, db) - 1e-12


def test_delay_offset():
    assert delay_offset(0.1, 0.025) == 4
    with pytest.raises(ValueError):
        delay_offset(0.1, 0.03)


def test_step_config_checks():
    with pytest.raises(ValueError):
        StepConfig(eps_bar=0.0, T_d=1.0)
    with pytest.raises(ValueError):
        StepConfig(eps_bar=0.1, T_d=0.0)


def test_schedule_tiling():
    check_schedule([ScheduleSegment(0, 0.0, 1.0), ScheduleSegment(1, 1.0, 2.0)], 2.0)
    with pytest.raises(ValueError):
        check_schedule([ScheduleSegment(0, 0.0, 1.0), ScheduleSegment(1, 1.5, 2.0)], 2.0)
    with pytest.raises(ValueError):
        check_schedule([ScheduleSegment(0, 0.0, 1.0)], 2.0)


# ------------------------------------------------------------ check_stepsize


def test_check_zero_dynamics():
    h = 0.05
    lists = SimLists.initial([1.0], h, 2)
    ok, lists = check_stepsize(spec("0"), 0.1, h, 0.1, (0.0, 1.0), lists)
    assert ok
    assert lists.t_end == pytest.approx(1.0)
    for k in range(1, len(lists)):
        assert lists.d[k] == pytest.approx((k - 1) * h * DEFAULT_SIGMA, rel=1e-6, abs=1e-300)


def test_check_stiff_fails_first_step():
    lists = SimLists.initial([1.0], 1.0, 1)
    ok, lists = check_stepsize(spec("100 * x@1"), 1.0, 1.0, 0.01, (0.0, 1.0), lists)
    assert not ok
    assert lists.fail_step == 1 and len(lists) == 2


def test_check_open_valve():
    lists = SimLists.initial([4.5], 0.025, 4, names=("d",))
    ok, lists = check_stepsize(spec(OPEN, "d"), 0.1, 0.025, 0.1, (0.0, 1.0), lists)
    assert ok and lists.t_end == pytest.approx(1.0)
    t, y, d = lists.arrays()
    assert len(t) == 42
    assert np.all(np.diff(d) >= 0)


def test_lists_csv():
    lists = SimLists.initial([4.5], 0.025, 4, names=("d",))
    check_stepsize(spec(OPEN, "d"), 0.1, 0.025, 0.1, (0.0, 0.05), lists)
    rows = lists.to_csv().splitlines()
    assert rows[0] == "t,d,d_bound"
    assert rows[1].startswith("-0.025,4.5,0") and rows[2].startswith("0,4.5,0")
    other = SimLists.initial([1.0], 0.1, 1, names=("x",))
    assert other.to_csv().splitlines()[0] == "t,x,d"


# ---------------------------------------------------------------- search


def test_zero_dynamics_gives_r():
    assert com_stepsize_one(spec("0*x@0.1"), 1.0, 0.1, 0.05, 1.0) == 0.1


def test_decay_tube_contains_exact_solution():
    h, lists = com_stepsize_one(spec("-x"), 1.0, 0.1, 0.5, 1.0, return_lists=True)
    assert lattice(h, 0.1)
    t, y, d = lists.arrays()
    k = int(np.argmin(np.abs(t - 1.0)))
    assert t[k] == pytest.approx(1.0)
    assert abs(y[k, 0] - math.exp(-1)) <= d[k]
    # the whole exact solution stays in the hull of consecutive boxes
    for j in range(1, len(t) - 1):
        s = np.linspace(t[j], t[j + 1], 11)
        x = np.exp(-s)
        lo = min(y[j, 0] - d[j], y[j + 1, 0] - d[j + 1])
        hi = max(y[j, 0] + d[j], y[j + 1, 0] + d[j + 1])
        assert np.all((lo <= x) & (x <= hi))


def test_max_halvings():
    with pytest.raises(MaxHalvings) as exc:
        com_stepsize_one(spec("100 * x@1"), 1.0, 1.0, 1e-6, 1.0, max_halvings=3)
    assert exc.value.h == pytest.approx(1.0 / 8)


def test_multi_single_segment_agrees():
    f = spec(OPEN, "d")
    one = com_stepsize_one(f, 4.5, 0.1, 0.1, 2.0)
    multi = com_stepsize_multi([f], [ScheduleSegment(0, 0.0, 2.0)], 4.5, 0.1, 0.1, 2.0)
    assert one == multi


def test_multi_zero_segments():
    f = spec("0*x@0.1")
    sched = [ScheduleSegment(0, 0.0, 1.0), ScheduleSegment(1, 1.0, 2.0)]
    assert com_stepsize_multi([f, f], sched, 1.0, 0.1, 0.01, 2.0) == 0.1


def test_multi_threads_lists_across_segments():
    up, down = spec(OPEN, "d"), spec("-(3.14 * 0.18 ^ 2 * sqrt(9.8 * (d + d@0.1)))", "d")
    sched = [ScheduleSegment(0, 0.0, 1.0), ScheduleSegment(None, 1.0, 1.5), ScheduleSegment(1, 1.5, 3.0)]
    h, lists = com_stepsize_multi([up, down], sched, 4.5, 0.1, 0.1, 3.0, return_lists=True)
    assert lattice(h, 0.1)
    t, y, d = lists.arrays()
    assert t[-1] == pytest.approx(3.0)
    hold = (t >= 1.0 - 1e-9) & (t <= 1.5 + 1e-9)
    assert np.ptp(y[hold, 0]) == 0.0
    assert np.all(np.diff(d) >= 0)


@settings(max_examples=25)
@given(st.floats(0.02, 0.2), st.floats(1.0, 3.0))
def test_relaxing_precision_keeps_step_valid(eps1, factor):
    f = spec(OPEN, "d")
    h = com_stepsize_one(f, 4.5, 0.1, eps1, 1.0)
    lists = SimLists.initial([4.5], h, delay_offset(0.1, h))
    ok, _ = check_stepsize(f, 0.1, h, eps1 * factor, (0.0, 1.0), lists)
    assert ok


_kinds = st.sampled_from(["-x", "-x@0.1", "0.5 * x - x@0.1", "1 - 0.2 * x@0.1", "-2 * x + sqrt(abs(x@0.1) + 1)"])


@settings(max_examples=40)
@given(_kinds, st.floats(0.2, 3.0), st.floats(0.05, 0.5), st.sampled_from([0.1, 0.05, 0.025]))
def test_d_monotone_and_width_bounded(rhs, x0, eps_bar, h):
    lists = SimLists.initial([x0], h, delay_offset(0.1, h))
    ok, lists = check_stepsize(spec(rhs), 0.1, h, eps_bar, (0.0, 1.0), lists)
    t, y, d = lists.arrays()
    assert np.all(d >= 0)
    assert np.all(np.diff(d) >= 0)
    for k in range(len(t) - 1):
        assert hull_width(y[k], d[k], y[k + 1], d[k + 1]) <= eps_bar


@pytest.mark.parametrize("src", [
    "x := 1; <x' = -x@0.1 & true>",
    "x := 2; <x' = 1 - x * x@0.1 & x > 0>",
])
def test_tube_against_reference(src):
    p = parse(src)
    tr = run_reference(p, T=1.0, dt_ref=1e-4)
    rep = stepsize_for_trace(tr, 0.1, 1.0)
    assert lattice(rep.h, 0.1)
    (lists,) = rep.lists
    assert tube_violations(lists, tr) == []


def test_step_budget():
    with pytest.raises(MaxHalvings, match="more than 1000 Euler steps"):
        com_stepsize_one(spec(OPEN, "d"), 4.5, 0.1, 1e-6, 10.0, max_steps=1000)
