"""Epsilon-neighbourhoods of boolean expressions.

Atoms ``e op c`` are moved by ``eps`` in the value of ``e``; for atoms over
a single variable this is exactly the spatial neighbourhood.
"""

from __future__ import annotations

from . import ast as A


class UnsupportedAtom(ValueError):
    pass


_FLIP = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "=="}


def normalize(b):
    """Push negations down to the atoms."""
    if isinstance(b, A.Not):
        a = b.arg
        if isinstance(a, A.Not):
            return normalize(a.arg)
        if isinstance(a, A.BoolConst):
            return A.BoolConst(not a.value)
        if isinstance(a, A.Cmp):
            return A.Cmp(_FLIP[a.op], a.left, a.right)
        if isinstance(a, A.And):
            return A.Or(normalize(A.Not(a.left)), normalize(A.Not(a.right)))
        if isinstance(a, A.Or):
            return A.And(normalize(A.Not(a.left)), normalize(A.Not(a.right)))
        if isinstance(a, A.Nbhd):
            return normalize(A.Not(materialize(a)))
    if isinstance(b, A.And):
        return A.And(normalize(b.left), normalize(b.right))
    if isinstance(b, A.Or):
        return A.Or(normalize(b.left), normalize(b.right))
    if isinstance(b, A.Nbhd):
        return materialize(b)
    return b


def _shift(e, delta):
    if isinstance(e, A.Const):
        return A.Const(e.value + delta)
    if delta >= 0:
        return A.BinOp("+", e, A.Const(delta))
    return A.BinOp("-", e, A.Const(-delta))


def _move(b, eps):
    """Move every atom so the satisfied set grows by ``eps`` (shrinks if eps < 0)."""
    if isinstance(b, A.BoolConst):
        return b
    if isinstance(b, A.Cmp):
        if b.op in ("==", "!="):
            raise UnsupportedAtom("equality atom %s has no neighbourhood" % b.op)
        delta = -eps if b.op in (">", ">=") else eps
        return A.Cmp(b.op, b.left, _shift(b.right, delta))
    if isinstance(b, A.And):
        return A.And(_move(b.left, eps), _move(b.right, eps))
    if isinstance(b, A.Or):
        return A.Or(_move(b.left, eps), _move(b.right, eps))
    raise TypeError("expected a normalized boolean expression: %r" % (b,))


def substitute(e, mapping):
    """Replace variables (not delayed references) by expressions."""
    if isinstance(e, A.Var):
        return mapping.get(e.name, e)
    if isinstance(e, A.Neg):
        return A.Neg(substitute(e.arg, mapping))
    if isinstance(e, A.Call):
        return A.Call(e.func, substitute(e.arg, mapping))
    if isinstance(e, A.BinOp):
        return A.BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    return e


def substitute_bool(b, mapping):
    if isinstance(b, A.Cmp):
        return A.Cmp(b.op, substitute(b.left, mapping), substitute(b.right, mapping))
    if isinstance(b, A.And):
        return A.And(substitute_bool(b.left, mapping), substitute_bool(b.right, mapping))
    if isinstance(b, A.Or):
        return A.Or(substitute_bool(b.left, mapping), substitute_bool(b.right, mapping))
    if isinstance(b, A.Not):
        return A.Not(substitute_bool(b.arg, mapping))
    return b


def euler_map(odes, h):
    return {x: A.BinOp("+", A.Var(x), A.BinOp("*", A.Const(h), f)) for x, f in odes}


def materialize(n):
    """Plain boolean expression equivalent to a tagged neighbourhood."""
    base = normalize(n.base)
    if n.tag == "widen":
        return _move(base, n.eps)
    if n.tag == "shrink":
        return _move(base, -n.eps)
    if n.tag == "shifted":
        return substitute_bool(_move(base, n.eps), euler_map(n.odes, n.h))
    raise ValueError("unknown neighbourhood tag %r" % n.tag)


def widen(b, eps: float):
    """N(B, eps): tagged predicate whose satisfied set contains B's."""
    b = normalize(b)
    _move(b, eps)  # raise early on equality atoms
    return A.Nbhd("widen", float(eps), b)


def shrink(b, eps: float):
    b = normalize(b)
    _move(b, -eps)
    return A.Nbhd("shrink", float(eps), b)


def shifted(b, eps: float, h: float, odes):
    """N'(B, eps): widened B evaluated at the Euler successor x + h*f(x, x_r)."""
    b = normalize(b)
    _move(b, eps)
    return A.Nbhd("shifted", float(eps), b, float(h), tuple(odes))
