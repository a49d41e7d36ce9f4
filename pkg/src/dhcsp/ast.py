"""Abstract syntax for dHCSP processes, arithmetic and boolean expressions.

All nodes are frozen dataclasses so they can be hashed and used as keys
when building transition systems. Source spans are carried along but are
ignored by equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple, Union

Span = Optional[Tuple[int, int]]


def _span():
    return field(default=None, compare=False, hash=False, repr=False)


# ---------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Const:
    value: float
    span: Span = _span()


@dataclass(frozen=True)
class Var:
    name: str
    span: Span = _span()


@dataclass(frozen=True)
class Delayed:
    """Value of ``name`` at ``now - delay`` (written ``name@delay``)."""

    name: str
    delay: float
    span: Span = _span()


@dataclass(frozen=True)
class Neg:
    arg: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Call:
    func: str  # sqrt, exp, abs
    arg: "Expr"
    span: Span = _span()


Expr = Union[Const, Var, Delayed, Neg, BinOp, Call]

FUNCTIONS = ("sqrt", "exp", "abs")


# ------------------------------------------------------------------- booleans


@dataclass(frozen=True)
class BoolConst:
    value: bool
    span: Span = _span()


@dataclass(frozen=True)
class Cmp:
    op: str  # < <= > >= == !=
    left: Expr
    right: Expr
    span: Span = _span()


@dataclass(frozen=True)
class And:
    left: "BoolExpr"
    right: "BoolExpr"
    span: Span = _span()


@dataclass(frozen=True)
class Or:
    left: "BoolExpr"
    right: "BoolExpr"
    span: Span = _span()


@dataclass(frozen=True)
class Not:
    arg: "BoolExpr"
    span: Span = _span()


@dataclass(frozen=True)
class Nbhd:
    """Tagged neighbourhood predicate built from ``base``.

    ``widen`` / ``shrink`` move every atom by ``eps``.  ``shifted`` is the
    widened predicate evaluated at the Euler successor ``x + h*f(x, x_r)``
    where ``odes`` gives the right-hand side per variable.
    """

    tag: str  # widen | shrink | shifted
    eps: float
    base: "BoolExpr"
    h: float = 0.0
    odes: Tuple[Tuple[str, Expr], ...] = ()
    span: Span = _span()


BoolExpr = Union[BoolConst, Cmp, And, Or, Not, Nbhd]

TRUE = BoolConst(True)
FALSE = BoolConst(False)


# ------------------------------------------------------------------ processes


@dataclass(frozen=True)
class Skip:
    span: Span = _span()


@dataclass(frozen=True)
class Stop:
    span: Span = _span()


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Expr
    span: Span = _span()


@dataclass(frozen=True)
class ParAssign:
    """Simultaneous assignment ``x, y := e1, e2`` (used for vector Euler steps)."""

    vars: Tuple[str, ...]
    exprs: Tuple[Expr, ...]
    span: Span = _span()


@dataclass(frozen=True)
class Wait:
    duration: float
    span: Span = _span()


@dataclass(frozen=True)
class Input:
    chan: str
    var: str
    span: Span = _span()


@dataclass(frozen=True)
class Output:
    chan: str
    expr: Expr
    span: Span = _span()


CommEvent = Union[Input, Output]


@dataclass(frozen=True)
class Seq:
    items: Tuple["Process", ...]
    span: Span = _span()


@dataclass(frozen=True)
class Guard:
    cond: BoolExpr
    body: "Process"
    span: Span = _span()


@dataclass(frozen=True)
class IChoice:
    left: "Process"
    right: "Process"
    span: Span = _span()


@dataclass(frozen=True)
class Repeat:
    body: "Process"
    count: int
    span: Span = _span()


@dataclass(frozen=True)
class CommChoice:
    branches: Tuple[Tuple[CommEvent, "Process"], ...]
    span: Span = _span()


@dataclass(frozen=True)
class DdeSpec:
    vars: Tuple[str, ...]
    rhs: Tuple[Expr, ...]

    @property
    def delay(self) -> Optional[float]:
        ds = {d.delay for e in self.rhs for d in delayed_refs(e)}
        if not ds:
            return None
        return max(ds)

    def odes(self):
        return tuple(zip(self.vars, self.rhs))


@dataclass(frozen=True)
class Dde:
    spec: DdeSpec
    domain: BoolExpr
    span: Span = _span()


@dataclass(frozen=True)
class DdeInterrupt:
    spec: DdeSpec
    domain: BoolExpr
    handlers: Tuple[Tuple[CommEvent, "Process"], ...]
    span: Span = _span()


@dataclass(frozen=True)
class Parallel:
    components: Tuple["Process", ...]
    name: str = "S"
    labels: Tuple[str, ...] = ()
    span: Span = _span()

    def label(self, i):
        if i < len(self.labels) and self.labels[i]:
            return self.labels[i]
        return "P%d" % (i + 1)


Process = Union[Skip, Stop, Assign, ParAssign, Wait, Input, Output, Seq, Guard,
                IChoice, Repeat, CommChoice, Dde, DdeInterrupt, Parallel]


def seq(*items):
    """Build a flat Seq, dropping nested Seqs; single items are returned as is."""
    out = []
    for it in items:
        if isinstance(it, Seq):
            out.extend(it.items)
        else:
            out.append(it)
    if len(out) == 1:
        return out[0]
    return Seq(tuple(out))


# ------------------------------------------------------------------ traversal


def expr_children(e) -> Tuple:
    if isinstance(e, (Neg, Call)):
        return (e.arg,)
    if isinstance(e, BinOp):
        return (e.left, e.right)
    return ()


def walk_expr(e) -> Iterator:
    stack = [e]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(expr_children(cur))


def expr_vars(e) -> set:
    return {n.name for n in walk_expr(e) if isinstance(n, Var)}


def delayed_refs(e) -> list:
    return [n for n in walk_expr(e) if isinstance(n, Delayed)]


def bool_children(b) -> Tuple:
    if isinstance(b, (And, Or)):
        return (b.left, b.right)
    if isinstance(b, Not):
        return (b.arg,)
    if isinstance(b, Nbhd):
        return (b.base,)
    return ()


def atoms(b) -> list:
    out = []
    stack = [b]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Cmp):
            out.append(cur)
        stack.extend(bool_children(cur))
    return out


def bool_exprs(b) -> list:
    """All arithmetic expressions appearing in ``b`` (including shifted rhs)."""
    out = []
    stack = [b]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Cmp):
            out += [cur.left, cur.right]
        if isinstance(cur, Nbhd):
            out += [e for _, e in cur.odes]
        stack.extend(bool_children(cur))
    return out


def bool_vars(b) -> set:
    s = set()
    for e in bool_exprs(b):
        s |= expr_vars(e)
        s |= {d.name for d in delayed_refs(e)}
    return s


def children(p) -> Tuple:
    if isinstance(p, Seq):
        return p.items
    if isinstance(p, Guard):
        return (p.body,)
    if isinstance(p, IChoice):
        return (p.left, p.right)
    if isinstance(p, Repeat):
        return (p.body,)
    if isinstance(p, (CommChoice, DdeInterrupt)):
        br = p.branches if isinstance(p, CommChoice) else p.handlers
        return tuple(x for ev, q in br for x in (ev, q))
    if isinstance(p, Parallel):
        return p.components
    return ()


def walk(p) -> Iterator:
    stack = [p]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(children(cur)))


def process_exprs(p) -> Iterator:
    """Yield (node, expr) for every arithmetic expression directly owned by a node."""
    for n in walk(p):
        if isinstance(n, Assign):
            yield n, n.expr
        elif isinstance(n, ParAssign):
            for e in n.exprs:
                yield n, e
        elif isinstance(n, Output):
            yield n, n.expr
        elif isinstance(n, Guard):
            for e in bool_exprs(n.cond):
                yield n, e
        elif isinstance(n, (Dde, DdeInterrupt)):
            for e in n.spec.rhs:
                yield n, e
            for e in bool_exprs(n.domain):
                yield n, e


def assigned_vars(p) -> set:
    out = set()
    for n in walk(p):
        if isinstance(n, Assign):
            out.add(n.var)
        elif isinstance(n, ParAssign):
            out.update(n.vars)
        elif isinstance(n, Input):
            out.add(n.var)
        elif isinstance(n, (Dde, DdeInterrupt)):
            out.update(n.spec.vars)
    return out


def all_vars(p) -> set:
    out = assigned_vars(p)
    for _, e in process_exprs(p):
        out |= expr_vars(e)
        out |= {d.name for d in delayed_refs(e)}
    return out


def channels(p) -> set:
    return {n.chan for n in walk(p) if isinstance(n, (Input, Output))}


def dde_nodes(p) -> list:
    return [n for n in walk(p) if isinstance(n, (Dde, DdeInterrupt))]


def components(p) -> Tuple:
    return p.components if isinstance(p, Parallel) else (p,)
