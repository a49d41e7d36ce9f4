"""Point evaluation of expressions and compilation to Python/numba callables."""

from __future__ import annotations

import math

from . import ast as A
from . import _jit


class DomainError(ArithmeticError):
    """Expression undefined at the given point (negative sqrt, division by zero, ...)."""

    def __init__(self, msg, time=None):
        if time is not None:
            msg = "%s (t=%.9g)" % (msg, time)
        super().__init__(msg)
        self.time = time


def _pow(a, b):
    if a == 0.0 and b < 0:
        raise DomainError("zero to a negative power")
    if a < 0 and b != math.floor(b):
        raise DomainError("negative base with fractional exponent")
    try:
        return a ** b
    except OverflowError:
        return math.inf


def _exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        return math.inf


def evaluate(e, env, delayed=None) -> float:
    """Evaluate ``e`` with variables from ``env``.

    ``delayed(name, delay)`` supplies values of delayed references; without it
    a delayed reference is an error.
    """
    if isinstance(e, A.Const):
        return e.value
    if isinstance(e, A.Var):
        try:
            return env[e.name]
        except KeyError:
            raise DomainError("unbound variable %s" % e.name) from None
    if isinstance(e, A.Delayed):
        if delayed is None:
            raise DomainError("delayed reference %s@%g outside a history" % (e.name, e.delay))
        return delayed(e.name, e.delay)
    if isinstance(e, A.Neg):
        return -evaluate(e.arg, env, delayed)
    if isinstance(e, A.Call):
        v = evaluate(e.arg, env, delayed)
        if e.func == "sqrt":
            if v < 0:
                raise DomainError("sqrt of negative value %g" % v)
            return math.sqrt(v)
        if e.func == "exp":
            return _exp(v)
        if e.func == "abs":
            return abs(v)
        raise DomainError("unknown function %s" % e.func)
    if isinstance(e, A.BinOp):
        a = evaluate(e.left, env, delayed)
        b = evaluate(e.right, env, delayed)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0:
                raise DomainError("division by zero")
            return a / b
        if e.op == "^":
            return _pow(a, b)
    raise TypeError("not an expression: %r" % (e,))


def eval_bool(b, env, delayed=None) -> bool:
    if isinstance(b, A.BoolConst):
        return b.value
    if isinstance(b, A.Cmp):
        x = evaluate(b.left, env, delayed)
        y = evaluate(b.right, env, delayed)
        op = b.op
        if op == "<":
            return x < y
        if op == "<=":
            return x <= y
        if op == ">":
            return x > y
        if op == ">=":
            return x >= y
        if op == "==":
            return x == y
        return x != y
    if isinstance(b, A.And):
        return eval_bool(b.left, env, delayed) and eval_bool(b.right, env, delayed)
    if isinstance(b, A.Or):
        return eval_bool(b.left, env, delayed) or eval_bool(b.right, env, delayed)
    if isinstance(b, A.Not):
        return not eval_bool(b.arg, env, delayed)
    if isinstance(b, A.Nbhd):
        from .neighborhood import materialize
        return eval_bool(materialize(b), env, delayed)
    raise TypeError("not a boolean expression: %r" % (b,))


# --------------------------------------------------------------- compilation
#
# Compiled helpers return nan instead of raising, so that the same source
# works under numba (which cannot raise cheaply in a hot loop) and in Python.
# Callers treat any non-finite derivative as a DomainError.


def _c_sqrt(a):
    if a < 0.0:
        return math.nan
    return math.sqrt(a)


def _c_div(a, b):
    if b == 0.0:
        return math.nan
    return a / b


def _c_pow(a, b):
    if a == 0.0 and b < 0.0:
        return math.nan
    if a < 0.0 and b != math.floor(b):
        return math.nan
    return a ** b


def _c_exp(a):
    if a > 709.0:
        return math.inf
    return math.exp(a)


def _c_abs(a):
    return abs(a)


_HELPERS = {"sqrt": "_c_sqrt", "exp": "_c_exp", "abs": "_c_abs"}


def expr_source(e, index, rindex=None) -> str:
    """Python source for ``e``; variable ``v`` becomes ``x[index[v]]``.

    Delayed references ``v@r`` become ``xr[rindex[v]]``.
    """
    rindex = index if rindex is None else rindex
    if isinstance(e, A.Const):
        return repr(float(e.value))
    if isinstance(e, A.Var):
        return "x[%d]" % index[e.name]
    if isinstance(e, A.Delayed):
        return "xr[%d]" % rindex[e.name]
    if isinstance(e, A.Neg):
        return "(-%s)" % expr_source(e.arg, index, rindex)
    if isinstance(e, A.Call):
        return "%s(%s)" % (_HELPERS[e.func], expr_source(e.arg, index, rindex))
    if isinstance(e, A.BinOp):
        a = expr_source(e.left, index, rindex)
        b = expr_source(e.right, index, rindex)
        if e.op == "/":
            return "_c_div(%s, %s)" % (a, b)
        if e.op == "^":
            return "_c_pow(%s, %s)" % (a, b)
        return "(%s %s %s)" % (a, e.op, b)
    raise TypeError("not an expression: %r" % (e,))


def bool_source(b, index) -> str:
    if isinstance(b, A.BoolConst):
        return "True" if b.value else "False"
    if isinstance(b, A.Cmp):
        return "(%s %s %s)" % (expr_source(b.left, index), b.op, expr_source(b.right, index))
    if isinstance(b, A.And):
        return "(%s and %s)" % (bool_source(b.left, index), bool_source(b.right, index))
    if isinstance(b, A.Or):
        return "(%s or %s)" % (bool_source(b.left, index), bool_source(b.right, index))
    if isinstance(b, A.Not):
        return "(not %s)" % bool_source(b.arg, index)
    if isinstance(b, A.Nbhd):
        from .neighborhood import materialize
        return bool_source(materialize(b), index)
    raise TypeError("not a boolean expression: %r" % (b,))


_cache = {}


def _namespace():
    ns = {"math": math}
    for name, fn in (("_c_sqrt", _c_sqrt), ("_c_div", _c_div), ("_c_pow", _c_pow),
                     ("_c_exp", _c_exp), ("_c_abs", _c_abs)):
        ns[name] = _jit.maybe_njit(fn)
    return ns


def _build(src, name):
    key = (src, _jit.jit_enabled())
    fn = _cache.get(key)
    if fn is None:
        ns = _namespace()
        exec(compile(src, "<dhcsp:%s>" % name, "exec"), ns)
        fn = _jit.maybe_njit(ns[name])
        _cache[key] = fn
    return fn


def compile_rhs(exprs_by_slot, nv, index):
    """Compile ``out[i] = expr_i(x, xr)`` for the given slots; other slots get 0."""
    lines = ["def _rhs(x, xr, out):"]
    for k in range(nv):
        e = exprs_by_slot.get(k)
        lines.append("    out[%d] = %s" % (k, expr_source(e, index) if e is not None else "0.0"))
    if nv == 0:
        lines.append("    pass")
    return _build("\n".join(lines) + "\n", "_rhs")


def compile_pred(b, index):
    src = "def _pred(x):\n    return %s\n" % bool_source(b, index)
    return _build(src, "_pred")
