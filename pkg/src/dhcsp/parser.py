"""Recursive-descent parser for the ASCII dHCSP syntax.

A statement beginning like a boolean expression is tried as a guard first and
the parser backtracks when no ``->`` follows.  Programs are small, so the
quadratic worst case of this strategy does not matter in practice.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import ast as A

KEYWORDS = {"skip", "stop", "wait", "true", "false", "system"}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\|~\||\|\||\|>|:=|->|<=|>=|==|!=|&&|[-+*/^()\[\]{}<>;,?!@'=&:|])
""", re.VERBOSE)


class ParseError(Exception):
    def __init__(self, msg, line=0, col=0):
        super().__init__("%d:%d: %s" % (line, col, msg))
        self.msg = msg
        self.line = line
        self.col = col


@dataclass
class Tok:
    kind: str  # num | id | op | eof
    text: str
    line: int
    col: int


def tokenize(text):
    toks = []
    pos, line, lstart = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError("unexpected character %r" % text[pos], line, pos - lstart + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(Tok(kind, m.group(), line, pos - lstart + 1))
        chunk = m.group()
        nl = chunk.count("\n")
        if nl:
            line += nl
            lstart = pos + chunk.rfind("\n") + 1
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - lstart + 1))
    return toks


class Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0
        self.best = None  # furthest error seen, reported on failure

    # -- token helpers
    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text, k=0):
        t = self.peek(k) if k else self.tok
        return t.kind in ("op", "id") and t.text == text

    def fail(self, msg, tok=None):
        tok = tok or self.tok
        err = ParseError(msg, tok.line, tok.col)
        if self.best is None or (tok.line, tok.col) >= (self.best.line, self.best.col):
            self.best = err
        raise err

    def expect(self, text):
        if not self.at(text):
            self.fail("expected %r, found %r" % (text, self.tok.text or "end of input"))
        t = self.tok
        self.i += 1
        return t

    def ident(self):
        t = self.tok
        if t.kind != "id" or t.text in KEYWORDS:
            self.fail("expected identifier, found %r" % (t.text or "end of input"))
        self.i += 1
        return t.text

    def number(self):
        t = self.tok
        neg = False
        if self.at("-") and self.peek().kind == "num":
            neg = True
            self.i += 1
            t = self.tok
        if t.kind != "num":
            self.fail("expected number, found %r" % (t.text or "end of input"))
        self.i += 1
        v = float(t.text)
        return -v if neg else v

    def span(self, t=None):
        t = t or self.tok
        return (t.line, t.col)

    # -- entry points
    def parse(self):
        try:
            if self.at("system"):
                p = self.system()
            else:
                p = self.proc()
            if self.tok.kind != "eof":
                self.fail("unexpected %r" % self.tok.text)
            return p
        except ParseError as e:
            if self.best is not None and (self.best.line, self.best.col) > (e.line, e.col):
                raise self.best from None
            raise

    def system(self):
        start = self.expect("system")
        name = self.ident()
        self.expect("{")
        comps, labels = [], []
        while True:
            label = ""
            if self.tok.kind == "id" and self.at(":", 1):
                label = self.ident()
                self.expect(":")
            labels.append(label)
            comps.append(self.proc())
            if self.at("||"):
                self.i += 1
                continue
            break
        self.expect("}")
        named = [x for x in labels if x]
        if len(set(named)) != len(named):
            self.fail("duplicate component label", start)
        if not any(labels):
            labels = []
        return A.Parallel(tuple(comps), name, tuple(labels), span=self.span(start))

    def proc(self):
        start = self.tok
        items = [self.choice()]
        while self.at(";"):
            self.i += 1
            items.append(self.choice())
        if len(items) == 1:
            return items[0]
        return A.Seq(tuple(items), span=self.span(start))

    def choice(self):
        start = self.tok
        p = self.unit()
        while self.at("|~|"):
            self.i += 1
            p = A.IChoice(p, self.unit(), span=self.span(start))
        return p

    def unit(self):
        t = self.tok
        if t.kind == "id" and t.text in ("skip", "stop", "wait"):
            return self.atom()
        if t.kind == "id" and t.text not in KEYWORDS and not self._nbhd_start():
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text in (":=", ",", "?", "!"):
                return self.atom()
        if self.at("<") or self.at("["):
            return self.atom()
        # try a guard, fall back to a plain statement
        save = self.i
        try:
            cond = self.bexpr()
            if not self.at("->"):
                self.fail("expected '->'")
            self.i += 1
        except ParseError:
            self.i = save
            return self.atom()
        body = self.unit()
        return A.Guard(cond, body, span=self.span(t))

    def atom(self):
        t = self.tok
        sp = self.span(t)
        if self.at("skip"):
            self.i += 1
            return A.Skip(span=sp)
        if self.at("stop"):
            self.i += 1
            return A.Stop(span=sp)
        if self.at("wait"):
            self.i += 1
            d = self.number()
            if d < 0:
                self.fail("negative wait duration", t)
            return A.Wait(d, span=sp)
        if self.at("("):
            self.i += 1
            body = self.proc()
            self.expect(")")
            if self.at("*"):
                self.i += 1
                self.expect("{")
                nt = self.tok
                n = self.number()
                if n != int(n) or n < 1:
                    self.fail("repetition count must be a positive integer", nt)
                self.expect("}")
                return A.Repeat(body, int(n), span=sp)
            return body
        if self.at("<"):
            return self.dde()
        if self.at("["):
            self.i += 1
            br = self.handlers()
            self.expect("]")
            return A.CommChoice(br, span=sp)
        if t.kind == "id":
            name = self.ident()
            if self.at(":="):
                self.i += 1
                return A.Assign(name, self.expr(), span=sp)
            if self.at(","):
                names = [name]
                while self.at(","):
                    self.i += 1
                    names.append(self.ident())
                self.expect(":=")
                exprs = [self.expr()]
                while self.at(","):
                    self.i += 1
                    exprs.append(self.expr())
                if len(exprs) != len(names):
                    self.fail("assignment arity mismatch", t)
                if len(set(names)) != len(names):
                    self.fail("duplicate variable in assignment", t)
                return A.ParAssign(tuple(names), tuple(exprs), span=sp)
            if self.at("?"):
                self.i += 1
                return A.Input(name, self.ident(), span=sp)
            if self.at("!"):
                self.i += 1
                return A.Output(name, self.expr(), span=sp)
        self.fail("expected statement, found %r" % (t.text or "end of input"))

    def event(self):
        t = self.tok
        ch = self.ident()
        if self.at("?"):
            self.i += 1
            return A.Input(ch, self.ident(), span=self.span(t))
        self.expect("!")
        return A.Output(ch, self.expr(), span=self.span(t))

    def handlers(self):
        out = []
        while True:
            ev = self.event()
            self.expect("->")
            self.expect("(")
            body = self.proc()
            self.expect(")")
            out.append((ev, body))
            if not self.at(","):
                return tuple(out)
            self.i += 1

    def odes(self):
        names, rhs = [], []
        while True:
            t = self.tok
            name = self.ident()
            if name in names:
                self.fail("duplicate variable %r in continuous statement" % name, t)
            self.expect("'")
            self.expect("=")
            names.append(name)
            rhs.append(self.expr())
            if not self.at(","):
                return A.DdeSpec(tuple(names), tuple(rhs))
            self.i += 1

    def dde(self):
        t = self.expect("<")
        spec = self.odes()
        self.expect("&")
        dom = self.bexpr()
        self.expect(">")
        if self.at("|>"):
            self.i += 1
            self.expect("[")
            hs = self.handlers()
            self.expect("]")
            return A.DdeInterrupt(spec, dom, hs, span=self.span(t))
        return A.Dde(spec, dom, span=self.span(t))

    # -- boolean expressions
    def bexpr(self):
        left = self.band()
        while self.at("||"):
            t = self.tok
            self.i += 1
            left = A.Or(left, self.band(), span=self.span(t))
        return left

    def band(self):
        left = self.bunary()
        while self.at("&&"):
            t = self.tok
            self.i += 1
            left = A.And(left, self.bunary(), span=self.span(t))
        return left

    def _nbhd_start(self):
        t = self.tok
        return t.kind == "id" and t.text in ("N", "S", "Np") and self.at("{", 1)

    def bunary(self):
        t = self.tok
        sp = self.span(t)
        if self.at("!"):
            self.i += 1
            return A.Not(self.bunary(), span=sp)
        if self.at("true"):
            self.i += 1
            return A.BoolConst(True, span=sp)
        if self.at("false"):
            self.i += 1
            return A.BoolConst(False, span=sp)
        if self._nbhd_start():
            return self.nbhd()
        if self.at("("):
            save = self.i
            try:
                self.i += 1
                b = self.bexpr()
                self.expect(")")
                return b
            except ParseError:
                self.i = save
        left = self.expr()
        op = self.tok
        if not (op.kind == "op" and op.text in ("<", "<=", ">", ">=", "==", "!=")):
            self.fail("expected comparison operator, found %r" % (op.text or "end of input"))
        self.i += 1
        return A.Cmp(op.text, left, self.expr(), span=sp)

    def nbhd(self):
        t = self.tok
        kind = {"N": "widen", "S": "shrink", "Np": "shifted"}[self.ident()]
        self.expect("{")
        eps = self.number()
        h, odes = 0.0, ()
        if kind == "shifted":
            self.expect(";")
            h = self.number()
            self.expect(";")
            odes = self.odes().odes()
        self.expect("}")
        self.expect("(")
        base = self.bexpr()
        self.expect(")")
        return A.Nbhd(kind, eps, base, h, odes, span=self.span(t))

    # -- arithmetic
    def expr(self):
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            t = self.tok
            self.i += 1
            left = A.BinOp(t.text, left, self.term(), span=self.span(t))
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            t = self.tok
            self.i += 1
            left = A.BinOp(t.text, left, self.unary(), span=self.span(t))
        return left

    def unary(self):
        t = self.tok
        if self.at("-"):
            self.i += 1
            if self.tok.kind == "num" and not self.at("^", 1):
                v = float(self.tok.text)
                self.i += 1
                return A.Const(-v, span=self.span(t))
            return A.Neg(self.unary(), span=self.span(t))
        return self.power()

    def power(self):
        base = self.primary()
        if self.at("^"):
            t = self.tok
            self.i += 1
            return A.BinOp("^", base, self.unary(), span=self.span(t))
        return base

    def primary(self):
        t = self.tok
        sp = self.span(t)
        if t.kind == "num":
            self.i += 1
            return A.Const(float(t.text), span=sp)
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "id" and t.text not in KEYWORDS:
            self.i += 1
            if t.text in A.FUNCTIONS and self.at("("):
                self.i += 1
                arg = self.expr()
                self.expect(")")
                return A.Call(t.text, arg, span=sp)
            if self.at("@"):
                self.i += 1
                d = self.number()
                if d <= 0:
                    self.fail("delay must be positive", t)
                return A.Delayed(t.text, d, span=sp)
            return A.Var(t.text, span=sp)
        self.fail("expected expression, found %r" % (t.text or "end of input"))


def parse(text: str):
    """Parse a full ``system`` or a single sequential process."""
    return Parser(text).parse()


def parse_expr(text: str):
    p = Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        p.fail("unexpected %r" % p.tok.text)
    return e


def parse_bool(text: str):
    p = Parser(text)
    b = p.bexpr()
    if p.tok.kind != "eof":
        p.fail("unexpected %r" % p.tok.text)
    return b
