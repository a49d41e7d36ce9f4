import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dhcsp import ast as A
from dhcsp.bisim import TICK, build_ts, check_approx_bisim, max_bisim, run_discrete, verify_relation
from dhcsp.discretize import discretize
from dhcsp.engine import StateBudgetExceeded
from dhcsp.parser import parse

from strategies import discrete_processes


# ---------------------------------------------------------------- interpreter


def test_assign_then_wait():
    tr = run_discrete(parse("x := 1; wait 1"), T=2.0)
    assert [(e.time, e.label) for e in tr.events] == [(0.0, "tau"), (0.0, "delay 1")]
    assert tr.value("x", 2.0) == 1.0


def test_race_single_event():
    tr = run_discrete(parse("system S { a!1 || a!2 || x := 0; a?x; wait 5 }"), T=1.0)
    assert [e.label for e in tr.comm_events()] == ["a.1"]


def test_discrete_watertank_regime(wt):
    tr = run_discrete(discretize(wt, 0.025, 0.2, 10.0), T=10.0)
    d = tr.column("d")
    t = tr.t
    rising = (t > 0.1) & (t < 1.9)
    falling = (t > 2.1) & (t < 4.9)
    # sampled between Euler steps, so the trace is a staircase
    assert np.all(np.diff(d[rising]) >= -1e-9) and d[rising][-1] > d[rising][0] + 1.0
    assert np.all(np.diff(d[falling]) <= 1e-9) and d[falling][-1] < d[falling][0] - 1.0
    assert [e.label for e in tr.comm_events() if e.chan == "cv"][:5] == ["cv.1", "cv.0", "cv.0", "cv.0", "cv.1"]
    # frozen from the first correct build
    assert tr.value("d", 2.0) == pytest.approx(6.402, abs=5e-3)
    assert d.max() == pytest.approx(6.43, abs=1e-2)


# ---------------------------------------------------------------- transition systems


def test_skip_ts():
    ts = build_ts(A.Skip(), step=0.1, T=1.0)
    assert len(ts) == 2
    assert [e.label for e in ts.edges[1]] == [TICK]


def test_wait_chain():
    # initial, after 1, after 2 (terminated, with its tick loop) plus the tau-closure of the assignment
    ts = build_ts(parse("x := 0; wait 2"), step=1.0, T=3.0)
    durs = [e.dur for es in ts.edges for e in es if e.kind == "dur"]
    assert durs == [1.0, 1.0]
    assert len(ts) == 4


def test_three_step_miniature():
    ts = build_ts(parse("x := 0; (wait 0.1; x := x + 1)*{3}"), step=0.1, T=1.0)
    assert len(ts) == 1 + 1 + 3


def test_watertank_one_period(wt):
    ts = build_ts(discretize(wt, 0.025, 0.2, 10.0), step=0.025, T=1.0)
    # initial node, its tau-closure, 40 Euler steps; the first exchange is at the horizon
    assert len(ts) == 42


def test_ichoice_branches():
    ts = build_ts(parse("x := 0; (x := 1 |~| x := 2); wait 1"), step=1.0, T=2.0)
    finals = {tuple(v) for v in ts.vals}
    assert (1.0,) in finals and (2.0,) in finals


def test_state_budget():
    with pytest.raises(StateBudgetExceeded):
        build_ts(parse("x := 0; (wait 0.1; x := x + 1)*{30}"), step=0.1, T=5.0, budget=5)


def test_dump(tmp_path):
    ts = build_ts(parse("x := 0; wait 1"), step=0.5, T=1.0)
    ts.dump(str(tmp_path), "src")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["src_edges.csv", "src_nodes.csv"]


# ---------------------------------------------------------------- relation


def test_skip_vs_skip():
    assert check_approx_bisim(A.Skip(), A.Skip(), 0.1, 0.2, 1.0).accepted


def test_duration_gap():
    h = 0.1
    res = check_approx_bisim(parse("x := 0; wait 1"), parse("x := 0; wait 1.3"), h, 0.2, 2.0)
    assert not res.accepted


def test_value_offset_rejected_at_start():
    eps = 0.2
    res = check_approx_bisim(parse("x := 0; wait 1"), parse("x := %g; wait 1" % (2 * eps)), 0.1, eps, 2.0)
    assert not res.accepted
    assert res.counterexample[0]["t"] == 0.0


def test_values_within_eps_accepted():
    res = check_approx_bisim(parse("x := 0; wait 1; x := 0.1; wait 1"),
                             parse("x := 0.05; wait 1; x := 0.12; wait 1"), 0.1, 0.2, 2.0)
    assert res.accepted
    assert res.max_deviation == pytest.approx(0.05)


def test_delay_needs_a_delay():
    # a 0.05 s lag before the exchange is not matched by standing still
    a = parse("system S { x := 0; wait 1; ch!1; wait 2 || y := 0; ch?y; wait 2 }")
    b = parse("system S { x := 0; wait 1.05; ch!1; wait 2 || y := 0; ch?y; wait 2 }")
    assert not check_approx_bisim(a, b, 0.1, 0.2, 2.0).accepted


def test_source_against_discretisation():
    src = parse("x := 1; <x' = -x & true>")
    h = 0.025
    res = check_approx_bisim(src, discretize(src, h, 0.2, 1.0), h, 0.2, 1.0)
    assert res.accepted and res.max_deviation < 0.2
    assert verify_relation(res.ts1, res.ts2, res.relation, h, 0.2) == []


@settings(max_examples=40)
@given(discrete_processes(), st.sampled_from([0.0, 0.05, 0.5]))
def test_reflexive(p, eps):
    assert check_approx_bisim(p, p, 0.1, eps, 1.0).accepted


@settings(max_examples=40)
@given(discrete_processes(), discrete_processes(), st.sampled_from([0.0, 0.5, 1.0, 2.0]), st.floats(0.0, 2.0))
def test_eps_monotone(p, q, e1, bump):
    r1 = check_approx_bisim(p, q, 0.1, e1, 1.0)
    r2 = check_approx_bisim(p, q, 0.1, e1 + bump, 1.0)
    if r1.accepted:
        assert r2.accepted
    assert r1.relation <= r2.relation


@settings(max_examples=40)
@given(discrete_processes(), discrete_processes())
def test_fixed_point_reverifies(p, q):
    res = check_approx_bisim(p, q, 0.1, 0.5, 1.0)
    assert verify_relation(res.ts1, res.ts2, res.relation, 0.1, 0.5) == []


def test_csv_counterexample():
    res = check_approx_bisim(parse("x := 0; wait 1"), parse("x := 1; wait 1"), 0.1, 0.2, 2.0)
    assert res.counterexample_csv().splitlines()[0] == "t,label"
