"""Canonical pretty-printer; ``parse(pretty(p)) == p`` for every well-formed AST."""

from __future__ import annotations

from . import ast as A

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def fmt_num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return "%d" % int(v)
    return repr(v)


def expr_str(e, ctx: int = 0) -> str:
    if isinstance(e, A.Const):
        s = fmt_num(e.value)
        if e.value < 0 and ctx > 3:
            return "(%s)" % s
        return s
    if isinstance(e, A.Var):
        return e.name
    if isinstance(e, A.Delayed):
        return "%s@%s" % (e.name, fmt_num(e.delay))
    if isinstance(e, A.Call):
        return "%s(%s)" % (e.func, expr_str(e.arg))
    if isinstance(e, A.Neg):
        arg = e.arg
        if isinstance(arg, A.Const) and arg.value >= 0:
            inner = "(%s)" % expr_str(arg)
        else:
            inner = expr_str(arg, 3)
        s = "-" + inner
        return "(%s)" % s if ctx > 3 else s
    if isinstance(e, A.BinOp):
        p = _PREC[e.op]
        if e.op == "^":
            s = "%s ^ %s" % (expr_str(e.left, 5), expr_str(e.right, 3))
        else:
            s = "%s %s %s" % (expr_str(e.left, p), e.op, expr_str(e.right, p + 1))
        return "(%s)" % s if p < ctx else s
    raise TypeError("not an expression: %r" % (e,))


def odes_str(pairs) -> str:
    return ", ".join("%s' = %s" % (x, expr_str(e)) for x, e in pairs)


def bool_str(b, ctx: int = 0) -> str:
    if isinstance(b, A.BoolConst):
        return "true" if b.value else "false"
    if isinstance(b, A.Cmp):
        s = "%s %s %s" % (expr_str(b.left), b.op, expr_str(b.right))
        return "(%s)" % s if ctx > 3 else s
    if isinstance(b, A.Not):
        return "!(%s)" % bool_str(b.arg)
    if isinstance(b, A.And):
        s = "%s && %s" % (bool_str(b.left, 2), bool_str(b.right, 3))
        return "(%s)" % s if ctx > 2 else s
    if isinstance(b, A.Or):
        s = "%s || %s" % (bool_str(b.left, 1), bool_str(b.right, 2))
        return "(%s)" % s if ctx > 1 else s
    if isinstance(b, A.Nbhd):
        if b.tag == "shifted":
            head = "Np{%s; %s; %s}" % (fmt_num(b.eps), fmt_num(b.h), odes_str(b.odes))
        else:
            head = "%s{%s}" % ("N" if b.tag == "widen" else "S", fmt_num(b.eps))
        return "%s(%s)" % (head, bool_str(b.base))
    raise TypeError("not a boolean expression: %r" % (b,))


def _event(ev) -> str:
    if isinstance(ev, A.Input):
        return "%s?%s" % (ev.chan, ev.var)
    return "%s!%s" % (ev.chan, expr_str(ev.expr))


def _handlers(hs) -> str:
    return ", ".join("%s -> (%s)" % (_event(ev), proc_str(q)) for ev, q in hs)


def proc_str(p, ctx: int = 0) -> str:
    """ctx: 0 = sequence position, 1 = choice operand, 2 = guard body / unit."""
    if isinstance(p, A.Skip):
        return "skip"
    if isinstance(p, A.Stop):
        return "stop"
    if isinstance(p, A.Assign):
        return "%s := %s" % (p.var, expr_str(p.expr))
    if isinstance(p, A.ParAssign):
        return "%s := %s" % (", ".join(p.vars), ", ".join(expr_str(e) for e in p.exprs))
    if isinstance(p, A.Wait):
        return "wait %s" % fmt_num(p.duration)
    if isinstance(p, (A.Input, A.Output)):
        return _event(p)
    if isinstance(p, A.Seq):
        s = "; ".join(proc_str(q, 1) for q in p.items)
        return "(%s)" % s if ctx > 0 else s
    if isinstance(p, A.IChoice):
        s = "%s |~| %s" % (proc_str(p.left, 1), proc_str(p.right, 2))
        return "(%s)" % s if ctx > 1 else s
    if isinstance(p, A.Guard):
        return "%s -> %s" % (bool_str(p.cond), proc_str(p.body, 2))
    if isinstance(p, A.Repeat):
        return "(%s)*{%d}" % (proc_str(p.body), p.count)
    if isinstance(p, A.CommChoice):
        return "[%s]" % _handlers(p.branches)
    if isinstance(p, A.Dde):
        return "<%s & %s>" % (odes_str(p.spec.odes()), bool_str(p.domain))
    if isinstance(p, A.DdeInterrupt):
        return "<%s & %s> |> [%s]" % (odes_str(p.spec.odes()), bool_str(p.domain),
                                      _handlers(p.handlers))
    if isinstance(p, A.Parallel):
        parts = []
        for i, c in enumerate(p.components):
            lab = p.labels[i] + ": " if i < len(p.labels) and p.labels[i] else ""
            parts.append("  " + lab + proc_str(c))
        return "system %s {\n%s\n}" % (p.name, "\n||\n".join(parts))
    raise TypeError("not a process: %r" % (p,))


def pretty(p) -> str:
    return proc_str(p)
