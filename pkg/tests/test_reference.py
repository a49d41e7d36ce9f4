import math

import numpy as np
import pytest

from dhcsp import ast as A
from dhcsp.engine import DeadlockDetected
from dhcsp.exprs import DomainError
from dhcsp.parser import parse, parse_bool, parse_expr
from dhcsp.reference import DomainExit, TimeOut, integrate_dde, run_reference

OPEN = "2.0 - 3.14 * 0.18 ^ 2 * sqrt(9.8 * (d + d@0.1))"


def spec(rhs, var="x"):
    return A.DdeSpec((var,), (parse_expr(rhs),))


def test_zero_dynamics():
    seg, ex = integrate_dde(spec("0"), 4.5, t_max=1.0)
    assert isinstance(ex, TimeOut) and ex.t == 1.0
    assert np.all(seg.x == 4.5)
    assert seg(0.37)[0] == 4.5


def test_exponential_decay():
    seg, _ = integrate_dde(spec("-x"), 1.0, t_max=1.0)
    assert seg.t[-1] == pytest.approx(1.0)
    assert seg.end[0] == pytest.approx(math.exp(-1), abs=1e-8)
    # dense output between knots
    assert seg(0.5)[0] == pytest.approx(math.exp(-0.5), abs=1e-8)


def test_method_of_steps_against_closed_form():
    # x' = -x(t-1), x = 1 on [-1, 0]
    seg, _ = integrate_dde(spec("-x@1"), 1.0, t_max=2.0, dt=1e-3)
    for t in (0.25, 0.5, 1.0):
        assert seg(t)[0] == pytest.approx(1 - t, abs=1e-9)
    for t in (1.25, 1.5, 2.0):
        assert seg(t)[0] == pytest.approx(1 - t + (t - 1) ** 2 / 2, abs=1e-9)


def test_history_function():
    # x' = x(t-1) with x(s) = s on [-1, 0]: x(t) = (t-1)^2/2 - 1/2 on [0, 1]
    seg, _ = integrate_dde(spec("x@1"), lambda s: np.array([s]), t_max=1.0, dt=1e-3)
    for t in (0.3, 0.8, 1.0):
        assert seg(t)[0] == pytest.approx((t - 1) ** 2 / 2 - 0.5, abs=1e-5)


def test_domain_exit_bisection():
    seg, ex = integrate_dde(spec("1"), 0.0, domain=parse_bool("x < 0.7317"), t_max=5.0)
    assert isinstance(ex, DomainExit)
    assert ex.t == pytest.approx(0.7317, abs=2e-9)
    assert seg.t[-1] == pytest.approx(ex.t)


def test_initially_outside_domain():
    _, ex = integrate_dde(spec("1"), 2.0, domain=parse_bool("x < 1"), t_max=1.0)
    assert ex == DomainExit(0.0)


def test_domain_error_propagates():
    with pytest.raises(DomainError):
        integrate_dde(spec("-sqrt(x) - 5"), 1.0, t_max=1.0)


def test_open_valve_rate():
    d = A.DdeSpec(("d",), (parse_expr(OPEN),))
    slope = 2.0 - 3.14 * 0.18 ** 2 * math.sqrt(9.8 * 9.0)
    assert slope == pytest.approx(1.0445478, abs=1e-7)
    seg, _ = integrate_dde(d, 4.5, t_max=0.1, dt=1e-4)
    fine, _ = integrate_dde(d, 4.5, t_max=0.1, dt=1e-5)
    assert seg(0.025)[0] == pytest.approx(fine(0.025)[0], abs=1e-9)
    assert seg(0.025)[0] == pytest.approx(4.5 + 0.025 * slope, abs=1e-3)


def test_convergence_order():
    d = A.DdeSpec(("d",), (parse_expr(OPEN),))
    ends = [integrate_dde(d, 4.5, t_max=3.0, dt=dt)[0].end[0] for dt in (0.1, 0.05, 0.025)]
    e1, e2 = abs(ends[0] - ends[1]), abs(ends[1] - ends[2])
    assert e2 <= e1 / 2  # empirical order >= 1 (RK4 gives about 4)
    assert e1 <= 1e-8


# ---------------------------------------------------------------- interpreter


def test_skip_parallel():
    tr = run_reference(parse("system S { skip || skip }"), T=1.0)
    assert [e.label for e in tr.events] == ["tau", "tau"]
    assert tr.t[0] == 0.0 and tr.t[-1] == 1.0


def test_forced_synchronisation():
    tr = run_reference(parse("system S { x := 0; wait 1; ch!2 || y := 0; ch?y }"), T=2.0)
    (ev,) = tr.comm_events()
    assert (ev.time, ev.label) == (1.0, "ch.2")
    assert tr.value("y", 0.99) == 0.0
    assert tr.value("y", 1.0) == 2.0 and tr.value("y", 2.0) == 2.0


def test_deadlock():
    with pytest.raises(DeadlockDetected):
        run_reference(parse("system S { a!1 || b?x; a?x }"), T=1.0)


def test_interrupt_preempts_flow():
    tr = run_reference(parse("system S { x := 0; <x' = 1 & true> |> [a!x -> (skip)] || y := 0; wait 0.5; a?y }"),
                       T=1.0, dt_ref=1e-3)
    (ev,) = tr.comm_events()
    assert ev.time == 0.5 and float(ev.label.split(".", 1)[1]) == pytest.approx(0.5)
    assert tr.value("x", 1.0) == pytest.approx(0.5)


@pytest.fixture(scope="module")
def wt_trace(wt):
    return run_reference(wt, T=10.0)


def test_watertank_regression(wt_trace):
    d = wt_trace.column("d")
    # frozen from a dt_ref = 1e-4 run
    assert d.min() == pytest.approx(3.427234, abs=1e-5)
    assert d.max() == pytest.approx(6.430669, abs=1e-5)
    v = wt_trace.column("v")
    first_off = wt_trace.t[np.argmax(v < 0.5)]
    assert first_off == 2.0
    assert wt_trace.value("d", 1.0) < 5.9 <= wt_trace.value("d", 2.0)


def test_watertank_events(wt_trace):
    labels = [e.label for e in wt_trace.comm_events()]
    assert len(labels) == 20
    assert [lab.split(".")[0] for lab in labels] == ["wl", "cv"] * 10
    assert labels[1] == "cv.1" and labels[3] == "cv.0"


def test_clock_monotone(wt_trace):
    times = [e.time for e in wt_trace.events]
    assert times == sorted(times)
    assert np.all(np.diff(wt_trace.t) > 0)


def test_determinism(wt):
    src = parse("system S { x := 0; (x := 1 |~| x := 2); <x' = -x & true> |> [a!x -> (skip)] || y := 0; wait 1; a?y }")
    a = run_reference(src, T=2.0, seed=3, dt_ref=1e-3)
    b = run_reference(src, T=2.0, seed=3, dt_ref=1e-3)
    assert a.events == b.events and np.array_equal(a.values, b.values)


def test_csv_shapes(wt_trace):
    text = wt_trace.to_csv()
    head, first = text.splitlines()[:2]
    assert head == "t,d,v,x,y"
    assert first.startswith("0,4.5,1,")
    assert wt_trace.events_csv().splitlines()[0] == "t,label"
