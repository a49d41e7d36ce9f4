import pytest
from hypothesis import given, settings

from dhcsp import ast as A
from dhcsp.parser import ParseError, parse, parse_bool, parse_expr
from dhcsp.printer import pretty
from dhcsp.validate import validate

from strategies import bools, exprs, processes, systems


def test_skip():
    assert parse("skip") == A.Skip()
    assert pretty(A.Skip()) == "skip"


def test_two_leaf_sequence():
    p = parse("x := 2; wait 1")
    assert p == A.Seq((A.Assign("x", A.Const(2.0)), A.Wait(1.0)))
    assert pretty(p) == "x := 2; wait 1"


def test_watertank_structure(wt):
    assert isinstance(wt, A.Parallel)
    assert wt.labels == ("Watertank", "Controller")
    assert A.channels(wt) == {"wl", "cv"}
    ddes = A.dde_nodes(wt)
    assert len(ddes) == 2 and all(isinstance(n, A.DdeInterrupt) for n in ddes)
    assert {n.spec.delay for n in ddes} == {0.1}
    assert validate(wt) == []


def test_watertank_round_trip(wt):
    assert parse(pretty(wt)) == wt


@pytest.mark.parametrize("text,where", [
    ("x := ", (1, 6)),
    ("x := 1;\n  wait", (2, 7)),
    ("system S { a!1 || }", (1, 19)),
    ("(x := 1)*{0.5}", (1, 11)),
])
def test_parse_error_location(text, where):
    with pytest.raises(ParseError) as exc:
        parse(text)
    assert (exc.value.line, exc.value.col) == where


def test_extended_syntax_round_trips():
    src = ("system S { A: x, y := 1, 2; x == 1 && !(y != 2) -> stop; (x := x ^ 2)*{3} |~| wait 0.5; "
           "[a!x -> (skip), b?y -> (x := sqrt(abs(y)))] || B: a?z; b!exp(1) }")
    p = parse(src)
    assert parse(pretty(p)) == p
    assert p.labels == ("A", "B")


def test_comments_ignored():
    assert parse("# leading\nx := 1 # trailing\n; skip") == parse("x := 1; skip")


@settings(max_examples=1000)
@given(systems())
def test_round_trip_systems(p):
    assert parse(pretty(p)) == p


@settings(max_examples=300)
@given(processes())
def test_round_trip_processes(p):
    assert parse(pretty(p)) == p


@settings(max_examples=300)
@given(exprs())
def test_round_trip_exprs(e):
    from dhcsp.printer import expr_str
    assert parse_expr(expr_str(e)) == e


@settings(max_examples=300)
@given(bools())
def test_round_trip_bools(b):
    from dhcsp.printer import bool_str
    assert parse_bool(bool_str(b)) == b


# ------------------------------------------------------------------ validate


def codes(src):
    return [d.message for d in validate(parse(src))]


def test_validate_skip():
    assert validate(A.Skip()) == []


def test_two_writers():
    msgs = codes("system S { x := 1; wl!x || y := 2; wl!y || wl?z; wl?z }")
    assert "channel wl: multiple writers" in msgs


def test_unpaired_channel():
    assert "channel a: no reader" in codes("system S { a!1 || skip }")


def test_delayed_outside_dde():
    msgs = codes("x := 1; y := x@0.1")
    assert any("outside a continuous statement" in m for m in msgs)


def test_delay_of_foreign_variable():
    msgs = codes("x := 1; y := 1; <x' = y@0.1 & true>")
    assert any("not a state of this continuous statement" in m for m in msgs)


def test_undeclared_domain_variable():
    msgs = codes("x := 1; <x' = 1 & q < 2>")
    assert any("variable q is never assigned" in m for m in msgs)


def test_two_delay_constants():
    msgs = codes("x := 1; <x' = x@0.1 & true>; <x' = x@0.2 & true>")
    assert any("several delay constants" in m for m in msgs)


def test_bad_repnum():
    assert any("positive bound" in d.message for d in validate(A.Repeat(A.Skip(), 0)))


def test_flag_collision():
    msgs = codes("system S { a_r := 1; a!a_r || a?x }")
    assert any("collides with a readiness flag" in m for m in msgs)


def test_nested_parallel():
    p = A.Parallel((A.Seq((A.Skip(), A.Parallel((A.Skip(),)))),))
    assert any(d.code == "nested-parallel" for d in validate(p))
