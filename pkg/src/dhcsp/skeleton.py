"""Read an emitted SystemC skeleton back into a discrete process.

Only the code shapes the emitter produces are understood.  The result is
meant for trace comparison against the process that was emitted.
"""

from __future__ import annotations

import re
from typing import Dict, List, Optional

from . import ast as A
from .codegen import CPP_RESERVED, UNITS
from .discretize import repeat_count


class SkeletonError(ValueError):
    pass


_TOK = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|"
                  r"(&&|\|\||<=|>=|==|!=|[-+*/%<>!(),\[\].]))")


def _tokens(s):
    out, pos = [], 0
    s = s.strip()
    while pos < len(s):
        m = _TOK.match(s, pos)
        if not m or m.end() == pos:
            raise SkeletonError("cannot tokenize %r at %d" % (s, pos))
        pos = m.end()
        if m.group(1):
            out.append(("num", float(m.group(1))))
        elif m.group(2):
            out.append(("id", m.group(2)))
        else:
            out.append(("op", m.group(3)))
    return out


def _split_top(s, sep=","):
    parts, depth, cur = [], 0, ""
    for ch in s:
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    return [p.strip() for p in parts]


class _Module:
    def __init__(self, header: str):
        self.text = header
        self.consts = {}
        for m in re.finditer(r"static constexpr double (\w+) = ([^;]+);", header):
            self.consts[m.group(1)] = float(m.group(2))
        self.hvars = re.findall(r"^\s*hvar (\w+);", header, re.M)
        ctor = re.search(r"SC_CTOR\(\w+\) : (.*) \{", header)
        self.delayed = {}
        if ctor:
            for m in re.finditer(r"(\w+)\((\w+), ([^)]+)\)", ctor.group(1)):
                if m.group(1) != "rng":
                    self.delayed[m.group(1)] = (m.group(2), float(m.group(3)))
        self.fs = {}
        for m in re.finditer(r"double (f_\w+)\(([^)]*)\) \{\n\s*return (.*);\n", header):
            params = [p.split()[1] for p in m.group(2).split(",")]
            self.fs[m.group(1)] = (params, m.group(3))
        self.preds = {}
        for fn in ("N", "S", "N_p"):
            m = re.search(r"bool %s\(int b, double e\) \{\n(.*?)\n\s*return false;" % fn, header, re.S)
            if m:
                self.preds[fn] = {int(k): body for k, body in re.findall(r"case (\d+): return (.*);", m.group(1))}
        self.arrays: Dict[str, List[str]] = {}
        self.unit = "SC_SEC"
        m = re.search(r"sc_start\([^,]+, (\w+)\)", header)
        if m:
            self.unit = m.group(1)
        self.rename: Dict[str, str] = {}

    @property
    def h(self):
        return self.consts["h"]


class _ExprParser:
    def __init__(self, mod: _Module, text, env=None):
        self.m = mod
        self.toks = _tokens(text)
        self.i = 0
        self.env = env or {}  # identifier -> Expr (function parameters, e)

    def peek(self, k=0):
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else ("eof", None)

    def take(self, val=None):
        t = self.peek()
        if val is not None and t[1] != val:
            raise SkeletonError("expected %r, got %r" % (val, t))
        self.i += 1
        return t

    def parse(self):
        kind, v = self.or_()
        if self.peek()[0] != "eof":
            raise SkeletonError("trailing tokens %r" % (self.toks[self.i:],))
        return kind, v

    def boolean(self):
        kind, v = self.parse()
        return v if kind == "bool" else A.Cmp("!=", v, A.Const(0.0))

    def number(self):
        kind, v = self.parse()
        if kind != "num":
            raise SkeletonError("expected a number expression")
        return v

    def or_(self):
        k, a = self.and_()
        while self.peek()[1] == "||":
            self.take()
            k2, b = self.and_()
            a, k = A.Or(_as_bool(k, a), _as_bool(k2, b)), "bool"
        return k, a

    def and_(self):
        k, a = self.not_()
        while self.peek()[1] == "&&":
            self.take()
            k2, b = self.not_()
            a, k = A.And(_as_bool(k, a), _as_bool(k2, b)), "bool"
        return k, a

    def not_(self):
        if self.peek()[1] == "!":
            self.take()
            k, a = self.not_()
            return "bool", A.Not(_as_bool(k, a))
        return self.cmp()

    def cmp(self):
        k, a = self.sum_()
        if self.peek()[1] in ("<", "<=", ">", ">=", "==", "!="):
            op = self.take()[1]
            _, b = self.sum_()
            if k == "bool":
                raise SkeletonError("comparison of a condition")
            return "bool", A.Cmp(op, a, b)
        return k, a

    def sum_(self):
        k, a = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            _, b = self.term()
            a = A.BinOp(op, a, b)
        return k, a

    def term(self):
        k, a = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            _, b = self.unary()
            a = A.BinOp(op, a, b)
        return k, a

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            k, a = self.unary()
            if isinstance(a, A.Const):
                return "num", A.Const(-a.value)
            return "num", A.Neg(a)
        return self.primary()

    def args(self):
        self.take("(")
        out = []
        if self.peek()[1] != ")":
            while True:
                start = self.i
                depth = 0
                while True:
                    t = self.peek()
                    if t[0] == "eof":
                        raise SkeletonError("unbalanced call")
                    if t[1] == "(":
                        depth += 1
                    elif t[1] == ")":
                        if depth == 0:
                            break
                        depth -= 1
                    elif t[1] == "," and depth == 0:
                        break
                    self.i += 1
                sub = _ExprParser(self.m, "", self.env)
                sub.toks = self.toks[start:self.i]
                out.append(sub.parse())
                if self.peek()[1] == ",":
                    self.take()
                    continue
                break
        self.take(")")
        return out

    def primary(self):
        kind, v = self.take()
        if kind == "num":
            return "num", A.Const(v)
        if v == "(":
            k, a = self.or_()
            self.take(")")
            return k, a
        if kind != "id":
            raise SkeletonError("unexpected %r" % (v,))
        if v in ("true", "false"):
            return "bool", A.BoolConst(v == "true")
        if v in self.env:
            return self.env[v]
        if self.peek()[1] == "(":
            args = self.args()
            return self.call(v, args)
        if self.peek()[1] == "[":
            self.take("[")
            j = int(self.take()[1])
            self.take("]")
            if v not in self.m.arrays:
                raise SkeletonError("unknown array %s" % v)
            return "bool", A.Cmp("==", A.Var(self.m.arrays[v][j]), A.Const(1.0))
        if self.peek()[1] == ".":
            self.take(".")
            meth = self.take()[1]
            (_, d), = self.args()
            if meth != "before":
                raise SkeletonError("unexpected method %s" % meth)
            return "num", A.Delayed(self._var(v), float(d.value))
        if v in self.m.delayed:
            var, d = self.m.delayed[v]
            return "num", A.Delayed(self._var(var), round(d, 12))
        if v in self.m.consts:
            return "num", A.Const(self.m.consts[v])
        return "num", A.Var(self._var(v))

    def _var(self, v):
        return self.m.rename.get(v, v)

    def call(self, fn, args):
        if fn == "pow":
            return "num", A.BinOp("^", args[0][1], args[1][1])
        if fn in ("sqrt", "exp", "fabs"):
            return "num", A.Call("abs" if fn == "fabs" else fn, args[0][1])
        if fn in self.m.fs:
            params, body = self.m.fs[fn]
            env = {p: a for p, a in zip(params, args)}
            return _ExprParser(self.m, body, env).parse()
        if fn in self.m.preds:
            (_, b), e = args
            k = int(self.m.consts.get(b.name[2:], b.name[2:])) if isinstance(b, A.Var) else int(b.value)
            body = self.m.preds[fn][k]
            return "bool", _ExprParser(self.m, body, {"e": e}).boolean()
        raise SkeletonError("unknown function %s" % fn)


def _as_bool(k, a):
    return a if k == "bool" else A.Cmp("!=", a, A.Const(0.0))


class _Reader:
    def __init__(self, mod: _Module, lines: List[str]):
        self.m = mod
        self.lines = [ln.strip() for ln in lines if ln.strip()]
        self.i = 0

    def peek(self):
        return self.lines[self.i] if self.i < len(self.lines) else None

    def take(self, expect=None):
        ln = self.peek()
        if ln is None:
            raise SkeletonError("unexpected end of code")
        if expect is not None and not re.fullmatch(expect, ln):
            raise SkeletonError("line %r does not match %r" % (ln, expect))
        self.i += 1
        return ln

    def expr(self, s):
        return _ExprParser(self.m, s).number()

    def cond(self, s):
        return _ExprParser(self.m, s).boolean()

    def block(self) -> List:
        out = []
        while self.peek() is not None and not self.peek().startswith("}") and not self.peek().startswith("i_"):
            out.append(self.stmt())
        return out

    def body(self):
        items = self.block()
        self.take(r"\}")
        return _seq(items)

    def stmt(self):
        ln = self.take()
        m = self.m
        if ln == "return;":
            return A.Stop()
        g = re.fullmatch(r"wait\((.+), (SC_\w+)\);", ln)
        if g and g.group(2) != "SC_ZERO_TIME":
            return A.Wait(float(self.expr(g.group(1)).value) / UNITS[g.group(2)])
        if ln.endswith(" wait(SC_ZERO_TIME);") and not ln.startswith("{"):
            pairs = [_split_top(x, "=") for x in _split_top(ln[:-len(" wait(SC_ZERO_TIME);")], ";") if x]
            vs = [self.m.rename.get(v, v) for v, _ in pairs]
            es = [self.expr(e) for _, e in pairs]
            return A.Assign(vs[0], es[0]) if len(vs) == 1 else A.ParAssign(tuple(vs), tuple(es))
        g = re.fullmatch(r"\{ double (.*?); (.*) \} wait\(SC_ZERO_TIME\);", ln)
        if g:
            tmps = dict(_split_top(t, "=") for t in _split_top(g.group(1)))
            sets = [_split_top(x, "=") for x in _split_top(g.group(2), ";") if x]
            return A.ParAssign(tuple(self.m.rename.get(v, v) for v, _ in sets),
                               tuple(self.expr(tmps[t]) for _, t in sets))
        g = re.fullmatch(r"if \((.*)\) \{", ln)
        if g and g.group(1) == "rand()%2":
            left = _seq(self.block())
            self.take(r"\} else \{")
            return A.IChoice(left, self.body())
        if g:
            return A.Guard(self.cond(g.group(1)), self.body())
        g = re.fullmatch(r"int (i_\d+) = 1;", ln)
        if g:
            i = g.group(1)
            n = int(re.fullmatch(r"while \(%s <= (\d+)\) \{" % i, self.take()).group(1))
            items = self.block()
            self.take(re.escape(i) + r"\+\+;")
            self.take(r"\}")
            return A.Repeat(_seq(items), n)
        g = re.fullmatch(r"sigref (IO(?:_d)?_\d+)\[\] = \{(.*)\};", ln)
        if g:
            m.arrays[g.group(1)] = re.findall(r"sigref\((\w+)\)", g.group(2))
            return None
        if re.fullmatch(r"int I_\d+\[\] = \{.*\};", ln):
            return None
        if ln == "// code for input statement":
            return self.io_listing(True)
        if ln == "// code for output statement":
            return self.io_listing(False)
        if ln == "// code for delayed continuous statement":
            return self.continuous()
        if ln == "// code for communication choice statement":
            return self.choice(False)
        if ln == "// code for communication interrupt statement":
            return self.choice(True)
        raise SkeletonError("unrecognised line %r" % ln)

    def io_listing(self, is_input):
        first = self.take(r"\w+_[rw]=1;")
        ch = first[:-len("_r=1;")]
        rest = [self.take() for _ in range(9)]
        if is_input:
            x, c2 = re.fullmatch(r"(\w+)=(\w+)\.read\(\);", rest[4]).groups()
            ev = A.Input(ch, self.m.rename.get(x, x))
            flag = ch + "_r"
        else:
            c2, e = re.fullmatch(r"(\w+)\.write\((.*)\);", rest[3]).groups()
            ev = A.Output(ch, self.expr(e))
            flag = ch + "_w"
        if c2 != ch:
            raise SkeletonError("listing mixes channels %s and %s" % (ch, c2))
        return A.Seq((A.Assign(flag, A.Const(1.0)), ev, A.Assign(flag, A.Const(0.0))))

    def bound(self, s):
        return repeat_count(self.m.consts["T"], self.m.h) if s == "T/h" else int(s)

    def update(self, ln):
        g = re.fullmatch(r"(\w+)=\1\+h\*(f_\w+\(.*\));", ln)
        h = A.Const(self.m.h)
        if g:
            x = self.m.rename.get(g.group(1), g.group(1))
            return A.Assign(x, A.BinOp("+", A.Var(x), A.BinOp("*", h, self.expr(g.group(2)))))
        g = re.fullmatch(r"\{ double (.*?); (.*) \}", ln)
        if not g:
            raise SkeletonError("unrecognised Euler update %r" % ln)
        tmps = dict(_split_top(t, "=") for t in _split_top(g.group(1)))
        vs, es = [], []
        for s in _split_top(g.group(2), ";"):
            if not s:
                continue
            x, t = re.fullmatch(r"(\w+)=\1\+h\*(\w+)", s).groups()
            x = self.m.rename.get(x, x)
            vs.append(x)
            es.append(A.BinOp("+", A.Var(x), A.BinOp("*", h, self.expr(tmps[t]))))
        return A.ParAssign(tuple(vs), tuple(es))

    def flow_loop(self):
        """for(...){ if(c){ wait h; update; wait(0); } } -> Repeat(Guard(c, ...), K)."""
        n = self.bound(re.fullmatch(r"for\(int i_\d+=0;i_\d+<(.+);i_\d+\+\+\)\{", self.take()).group(1))
        c = self.cond(re.fullmatch(r"if\((.*)\)\{", self.take()).group(1))
        self.take(r"wait\(h,SC_SEC\);")
        up = self.update(self.take())
        self.take(r"wait\(SC_ZERO_TIME\);")
        self.take(r"\}")
        self.take(r"\}")
        return c, A.Repeat(A.Guard(c, A.Seq((A.Wait(self.m.h), up))), n)

    def continuous(self):
        c, loop = self.flow_loop()
        self.take(r"if\(.*\)\{")
        self.take(r"return;")
        self.take(r"\}")
        return A.Seq((loop, A.Guard(c, A.Stop())))

    def _loop(self, what):
        self.take(r"for\(int (i_\d+)=0;\1<chan_num_\d+;\1\+\+\)\{")
        self.take(r"IO_\d+\[i_\d+\]=%s;" % what)
        self.take(r"\}")

    def _dispatch(self, var):
        out = []
        j = 0
        while self.peek() is not None and re.fullmatch(r"(else )?if\(%s==%d\)\{" % (var, j), self.peek()):
            self.take()
            items = self.block()
            self.take(r"\}")
            out.append(items)
            j += 1
        return out

    def _events(self, k):
        self.take(r"for\(int (i_\d+)=0;\1<chan_num_\d+;\1\+\+\)\{")
        self.take(r"if\(IO_\d+\[i_\d+\]==1&&IO_d_\d+\[i_\d+\]==1\)\{")
        evs = []
        j = 0
        while re.fullmatch(r"(else )?if\(i_\d+==%d\)\{" % j, self.peek() or ""):
            self.take()
            body = []
            while self.peek() != "}":
                body.append(self.take())
            self.take(r"\}")
            flag = self.m.arrays["IO_%d" % k][j]
            ch = flag[:-2]
            if flag.endswith("_r"):
                x = re.fullmatch(r"(\w+)=%s\.read\(\);" % ch, body[1]).group(1)
                evs.append(A.Input(ch, self.m.rename.get(x, x)))
            else:
                e = re.fullmatch(r"%s\.write\((.*)\);" % ch, body[0]).group(1)
                evs.append(A.Output(ch, self.expr(e)))
            j += 1
        self.take(r"k_\d+=i_\d+;")
        self.take(r"break;")
        self.take(r"\}")
        self.take(r"\}")
        return evs

    def choice(self, interrupt):
        k = int(re.fullmatch(r"int k_(\d+)=-1;", self.take()).group(1))
        self.take(r"int chan_num_%d=.*;" % k)
        flags = self.m.arrays["IO_%d" % k]
        self._loop("1")
        self.take(r"wait\(SC_ZERO_TIME\);")
        parts = [_flags(flags, 1)]
        if interrupt:
            c, loop = self.flow_loop()
            parts.append(loop)
            cond = self.take(r"if\(.*\)\{")[3:-2]
            if not cond.startswith("!(true)"):
                self._loop("0")
                self.take(r"wait\(SC_ZERO_TIME\);")
                self.take(r"\}")
                parts.append(A.Guard(self.cond(cond), _flags(flags, 0)))
            else:
                self._loop("0")
                self.take(r"wait\(SC_ZERO_TIME\);")
                self.take(r"\}")
        else:
            self.take(r"wait\(.*posedge_event\(\)\);")
        evs = self._events(k)
        self._loop("0")
        self.take(r"wait\(SC_ZERO_TIME\);")
        if interrupt:
            self.take(r"if\(k_%d>-1\)\{" % k)
        bodies = self._dispatch("k_%d" % k)
        if interrupt:
            self.take(r"\}")
        if len(bodies) != len(evs):
            raise SkeletonError("choice with %d channels but %d bodies" % (len(evs), len(bodies)))
        cc = A.CommChoice(tuple((ev, _seq([_flags(flags, 0)] + b)) for ev, b in zip(evs, bodies)))
        if not interrupt:
            parts.append(cc)
            return A.Seq(tuple(parts))
        ready = None
        for j in range(len(flags)):
            a = A.And(A.Cmp("==", A.Var(flags[j]), A.Const(1.0)),
                      A.Cmp("==", A.Var(self.m.arrays["IO_d_%d" % k][j]), A.Const(1.0)))
            ready = a if ready is None else A.Or(ready, a)
        parts.append(A.Guard(ready, cc))
        self.take(r"if\(.*\)\{")
        self.take(r"return;")
        self.take(r"\}")
        parts.append(A.Guard(c, A.Stop()))
        return A.Seq(tuple(parts))


def _flags(names, v):
    if len(names) == 1:
        return A.Assign(names[0], A.Const(float(v)))
    return A.ParAssign(tuple(names), tuple(A.Const(float(v)) for _ in names))


def _seq(items):
    items = [p for p in items if p is not None]
    if not items:
        return A.Skip()
    return items[0] if len(items) == 1 else A.Seq(tuple(items))


def _threads(header):
    out = []
    lines = header.split("\n")
    i = 0
    while i < len(lines):
        g = re.fullmatch(r"    void (\w+)\(\) \{", lines[i])
        if g:
            j = i + 1
            while lines[j] != "    }":
                j += 1
            out.append((g.group(1), lines[i + 1:j]))
            i = j
        i += 1
    return out


def _local_names(label: str, labels, members) -> Dict[str, str]:
    """Undo the emitter's renaming: component prefixes on clashing names, reserved-word suffixes."""
    ren = {}
    for v in members:
        base = v
        rest = v[len(label) + 1:]
        if v.startswith(label + "_") and rest and any(m != label and "%s_%s" % (m, rest) in members for m in labels):
            base = rest
        if base.endswith("_v") and base[:-2] in CPP_RESERVED:
            base = base[:-2]
        ren[v] = base
    return ren


def reparse(unit) -> A.Parallel:
    """Discrete process recovered from an EmitUnit (or header text)."""
    header = unit.header if hasattr(unit, "header") else unit
    mod = _Module(header)
    name = re.search(r"SC_MODULE\((\w+)\)", header).group(1)
    comps, labels = [], []
    threads = _threads(header)
    for label, lines in threads:
        mod.rename = _local_names(label, [t for t, _ in threads], set(mod.hvars))
        comps.append(_seq(_Reader(mod, lines).block()))
        labels.append(label)
    if name.endswith("_v") and name[:-2] in CPP_RESERVED:
        name = name[:-2]
    return A.Parallel(tuple(comps), name, tuple(labels))


def reparse_stmt(text: str, header: Optional[str] = None):
    """Process for a fragment produced by emit_stmt."""
    mod = _Module(header or "static constexpr double h = 0;")
    return _seq(_Reader(mod, text.split("\n")).block())
