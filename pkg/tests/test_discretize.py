import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dhcsp import ast as A
from dhcsp.bisim import run_discrete
from dhcsp.discretize import check_window, discretize, estimate_robustness, repeat_count
from dhcsp.exprs import DomainError, eval_bool
from dhcsp.neighborhood import UnsupportedAtom, materialize, normalize, shifted, shrink, widen
from dhcsp.parser import parse, parse_bool, parse_expr
from dhcsp.printer import bool_str
from dhcsp.reference import run_reference
from dhcsp.validate import validate

from strategies import bools, processes

OPEN = "2.0 - 3.14 * 0.18 ^ 2 * sqrt(9.8 * (d + d@0.1))"


def holds(b, **env):
    return eval_bool(b, env)


def test_widen_strict_atom():
    assert materialize(widen(parse_bool("x > 2"), 0.2)) == parse_bool("x > 1.8")


def test_widen_true():
    assert materialize(widen(A.TRUE, 0.2)) == A.TRUE
    assert materialize(shrink(A.TRUE, 0.2)) == A.TRUE


def test_widen_conjunction():
    b = parse_bool("x >= 5.9 && y <= 1")
    assert bool_str(materialize(widen(b, 0.2))) == "x >= 5.7 && y <= 1.2"
    s = materialize(shrink(b, 0.2))
    assert (s.left.op, s.right.op) == (">=", "<=")
    assert (s.left.right.value, s.right.right.value) == pytest.approx((6.1, 0.8))


@pytest.mark.parametrize("text", ["x > 2", "x >= 5.9 && y <= 1", "!(x < 1 || y > 3)"])
def test_neighbourhoods_by_sampling(text):
    b = parse_bool(text)
    w, s = materialize(widen(b, 0.2)), materialize(shrink(b, 0.2))
    rng = np.random.default_rng(7)
    for x, y in rng.uniform(-2, 8, size=(10_000, 2)):
        if holds(b, x=x, y=y):
            assert holds(w, x=x, y=y)
        if holds(s, x=x, y=y):
            assert holds(b, x=x, y=y)


def test_equality_rejected():
    with pytest.raises(UnsupportedAtom):
        widen(parse_bool("x == 1"), 0.1)


def test_normalize_pushes_negation():
    assert normalize(parse_bool("!(x < 1 && !(y >= 2))")) == parse_bool("x >= 1 || y >= 2")


@settings(max_examples=300)
@given(bools(delayed=False), st.floats(0.01, 1.0),
       st.fixed_dictionaries({v: st.floats(-5, 5) for v in ["x", "y", "z", "v1", "w"]}))
def test_widening_soundness(b, eps, env):
    try:
        w, s = materialize(widen(b, eps)), materialize(shrink(b, eps))
        inside = eval_bool(b, env)
        win, sin = eval_bool(w, env), eval_bool(s, env)
    except (UnsupportedAtom, DomainError, OverflowError, ZeroDivisionError):
        return
    assert not inside or win
    assert not sin or inside


def test_shifted_is_widen_at_euler_successor():
    b = parse_bool("d < 5.9")
    odes = (("d", parse_expr("2 - d")),)
    n = materialize(shifted(b, 0.2, 0.1, odes))
    for d in np.linspace(4, 7, 61):
        nxt = d + 0.1 * (2 - d)
        assert eval_bool(n, {"d": d}) == (nxt < 6.1)


# ---------------------------------------------------------------- discretize


def test_skip():
    assert discretize(A.Skip(), 0.025, 0.2, 1.0) == A.Skip()


def test_trivial_domain_loop():
    p = A.Dde(A.DdeSpec(("d",), (parse_expr(OPEN),)), A.TRUE)
    d = discretize(p, 0.025, 0.2, 1.0)
    loop, tail = d.items
    assert isinstance(loop, A.Repeat) and loop.count == 40
    assert loop.body.cond == A.TRUE
    wait, upd = loop.body.body.items
    assert wait == A.Wait(0.025)
    assert upd.var == "d" and [x.delay for x in A.delayed_refs(upd.expr)] == [pytest.approx(0.125)]
    assert tail == A.Guard(A.TRUE, A.Stop())


def test_repeat_count_rounds_up():
    assert repeat_count(1.0, 0.025) == 40
    assert repeat_count(1.0, 0.3) == 4


def test_communication_flags():
    d = discretize(parse("system S { a!1 || a?x }"), 0.1, 0.2, 1.0)
    w, r = d.components
    assert w == A.Seq((A.Assign("a_w", A.Const(1.0)), A.Output("a", A.Const(1.0)), A.Assign("a_w", A.Const(0.0))))
    assert r.items[0] == A.Assign("a_r", A.Const(1.0))


def test_watertank_shape(wt):
    d = discretize(wt, 0.025, 0.2, 10.0)
    assert not A.dde_nodes(d)
    assert validate(d, discrete=True) == []
    flags = {n.var for n in A.walk(d) if isinstance(n, A.Assign) and n.var.endswith(("_r", "_w"))}
    assert flags == {"wl_w", "wl_r", "cv_w", "cv_r"}
    loops = [n for n in A.walk(d) if isinstance(n, A.Repeat) and n.count == 400]
    assert len(loops) == 2
    text = str(d)
    assert "Wait(duration=0.025" in text


@settings(max_examples=200)
@given(processes())
def test_discretization_total(p):
    try:
        d = discretize(p, 0.05, 0.1, 1.0)
    except UnsupportedAtom:
        return
    assert not any(isinstance(n, (A.Dde, A.DdeInterrupt)) for n in A.walk(d))


def test_guard_flow_agreement(wt):
    ref = run_reference(wt, T=10.0)
    dis = run_discrete(discretize(wt, 0.025, 0.2, 10.0), T=10.0)
    cv = lambda tr: [(e.time, e.label) for e in tr.comm_events() if e.chan == "cv"]
    assert cv(ref) == cv(dis)


# ---------------------------------------------------------------- robustness


def test_no_guards_unconstrained():
    rep = estimate_robustness(parse("x := 1; <x' = -x & true>"), T=1.0, n_runs=2)
    assert rep.delta == 0.0 and rep.unconstrained


def test_single_guard_margin():
    rep = estimate_robustness(parse("x := 5; <x' = 1 & x < 6>; x >= 5.9 -> skip"), T=2.0, n_runs=1, dt_ref=1e-4)
    assert rep.worst().margin == pytest.approx(0.1, abs=1e-6)
    assert rep.delta == 0.0


def test_grazing_exit_has_dwell():
    # the flow leaves x < 1 tangentially and comes back: positive dwell
    rep = estimate_robustness(parse("x := 0; t := 0; <x' = 1 - 2 * t, t' = 1 & x < 0.25>; x := 0"), T=1.0,
                              n_runs=1, dt_ref=1e-4)
    assert rep.delta > 0


def test_window_check():
    assert check_window(0.0, 0.025) is None
    assert check_window(0.04, 0.025) is None
    assert "outside" in check_window(0.1, 0.025)
