"""SystemC emission for discretized processes."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import ast as A
from .discretize import repeat_count
from .neighborhood import normalize
from .printer import fmt_num

UNITS = {"SC_FS": 1e15, "SC_PS": 1e12, "SC_NS": 1e9, "SC_US": 1e6, "SC_MS": 1e3, "SC_SEC": 1.0}

CPP_RESERVED = {
    "auto", "bool", "break", "case", "char", "class", "const", "continue", "default", "delete", "do",
    "double", "else", "enum", "extern", "false", "float", "for", "goto", "if", "int", "long", "namespace",
    "new", "operator", "private", "protected", "public", "register", "return", "short", "signed",
    "sizeof", "static", "struct", "switch", "template", "this", "throw", "true", "try", "typedef",
    "union", "unsigned", "using", "virtual", "void", "volatile", "while",
    # names the generated module uses itself
    "T", "h", "e", "r", "N", "N_p", "S", "rand", "wait", "pow", "sqrt", "exp", "fabs", "main",
}


class UnsupportedNode(TypeError):
    pass


@dataclass
class EmitConfig:
    h: float
    T: float
    eps: float
    time_unit: str = "SC_MS"
    seed: int = 0
    r: float = 0.0

    def __post_init__(self):
        if self.time_unit not in UNITS:
            raise ValueError("unknown time unit %s (one of %s)" % (self.time_unit, ", ".join(UNITS)))


@dataclass
class EmitUnit:
    system: str
    header: str
    main: str
    helpers: str
    threads: Dict[str, str] = field(default_factory=dict)

    def files(self):
        return {self.system + ".h": self.header, "main.cpp": self.main, "helpers.h": self.helpers}

    def write(self, out):
        os.makedirs(out, exist_ok=True)
        paths = []
        for name, text in self.files().items():
            path = os.path.join(out, name)
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
            paths.append(path)
        return paths


# ------------------------------------------------------------- expressions

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _num(v: float, force_float=False) -> str:
    s = fmt_num(v)
    if force_float and "." not in s and "e" not in s and "inf" not in s and "nan" not in s:
        s += ".0"
    return s


def cname(v: str) -> str:
    return v + "_v" if v in CPP_RESERVED else v


class _Exprs:
    """Expression and predicate emission; collects helper definitions."""

    def __init__(self, cfg: EmitConfig, flags):
        self.cfg = cfg
        self.flags = set(flags)
        self.preds: Dict[tuple, int] = {}  # (base, odes) -> id
        self.fs: Dict[tuple, int] = {}  # odes -> id
        self.delayed: Dict[Tuple[str, float], str] = {}  # (member, delay) -> delayed member name
        self.local: Dict[str, str] = {}  # per-component renaming of clashing variables
        self.scope: Dict[tuple, Dict[str, str]] = {}  # renaming in force where a helper was first used

    def name(self, v):
        return self.local.get(v) or cname(v)

    # expressions
    def expr(self, e, ctx=0, rename=None) -> str:
        rename = rename or {}
        if isinstance(e, A.Const):
            s = _num(e.value, ctx == 9)
            return "(%s)" % s if e.value < 0 and ctx > 0 else s
        if isinstance(e, A.Var):
            return rename.get(e.name, self.name(e.name))
        if isinstance(e, A.Delayed):
            key = ("@" + e.name, e.delay)
            if key in rename:
                return rename[key]
            return "%s.before(%s)" % (self.name(e.name), _num(e.delay))
        if isinstance(e, A.Neg):
            return "-%s" % self.expr(e.arg, 3, rename) if not isinstance(e.arg, (A.BinOp,)) \
                else "-(%s)" % self.expr(e.arg, 0, rename)
        if isinstance(e, A.Call):
            fn = "fabs" if e.func == "abs" else e.func
            return "%s(%s)" % (fn, self.expr(e.arg, 0, rename))
        if isinstance(e, A.BinOp):
            if e.op == "^":
                return "pow(%s, %s)" % (self.expr(e.left, 0, rename), self.expr(e.right, 0, rename))
            p = _PREC[e.op]
            lhs = self.expr(e.left, p, rename)
            rctx = p + 1
            rhs = self.expr(e.right, 9 if e.op == "/" else rctx, rename)
            if e.op == "/" and isinstance(e.left, A.Const):
                lhs = _num(e.left.value, True) if e.left.value >= 0 else lhs
            s = "%s %s %s" % (lhs, e.op, rhs)
            return "(%s)" % s if p < ctx or (ctx == 9 and p <= 2) else s
        raise UnsupportedNode("expression %r" % (e,))

    # predicates
    def pred_id(self, base, odes=()):
        key = (base, tuple(odes))
        if key not in self.preds:
            self.preds[key] = len(self.preds) + 1
            self.scope[("B", self.preds[key])] = dict(self.local)
        return self.preds[key]

    def f_id(self, odes):
        key = tuple(odes)
        if key not in self.fs:
            self.fs[key] = len(self.fs) + 1
            self.scope[("f", self.fs[key])] = dict(self.local)
        return self.fs[key]

    def _eps(self, v):
        return "e" if abs(v - self.cfg.eps) < 1e-15 else _num(v)

    def flow_guard(self, g) -> Optional[str]:
        """``N(B_k,e)&&N_p(B_k,e)`` for a widen/shifted pair, else None."""
        if (isinstance(g, A.And) and isinstance(g.left, A.Nbhd) and isinstance(g.right, A.Nbhd)
                and g.left.tag == "widen" and g.right.tag == "shifted" and g.left.base == g.right.base
                and g.left.eps == g.right.eps):
            k = self.pred_id(g.right.base, g.right.odes)
            self.f_id(g.right.odes)
            e = self._eps(g.left.eps)
            return "N(B_%d,%s)&&N_p(B_%d,%s)" % (k, e, k, e)
        return None

    def boolean(self, b, ctx=0) -> str:
        if isinstance(b, A.BoolConst):
            return "true" if b.value else "false"
        fg = self.flow_guard(b)
        if fg is not None:
            return "(%s)" % fg if ctx > 1 else fg
        if isinstance(b, A.Cmp):
            s = "%s %s %s" % (self.expr(b.left), b.op, self.expr(b.right))
            return "(%s)" % s if ctx > 2 else s
        if isinstance(b, A.Not):
            return "!(%s)" % self.boolean(b.arg)
        if isinstance(b, A.And):
            s = "%s && %s" % (self.boolean(b.left, 2), self.boolean(b.right, 3))
            return "(%s)" % s if ctx > 2 else s
        if isinstance(b, A.Or):
            s = "%s || %s" % (self.boolean(b.left, 1), self.boolean(b.right, 2))
            return "(%s)" % s if ctx > 1 else s
        if isinstance(b, A.Nbhd):
            k = self.pred_id(b.base, b.odes if b.tag == "shifted" else ())
            fn = {"widen": "N", "shifted": "N_p", "shrink": "S"}[b.tag]
            if b.tag == "shifted":
                self.f_id(b.odes)
            return "%s(B_%d,%s)" % (fn, k, self._eps(b.eps))
        raise UnsupportedNode("boolean %r" % (b,))

    def delayed_member(self, var, delay, suffix="_r"):
        key = (self.name(var), round(delay, 12))
        if key not in self.delayed:
            base = self.name(var) + suffix
            taken = set(self.delayed.values())
            name = base
            while name in taken:
                name += "_"
            self.delayed[key] = name
        return self.delayed[key]


# -------------------------------------------------------------- statements


def _flat(items):
    out = []
    for p in items:
        if isinstance(p, A.Seq):
            out += _flat(p.items)
        else:
            out.append(p)
    return out


def _flag_of(ev):
    return ev.chan + ("_r" if isinstance(ev, A.Input) else "_w")


def _partner_of(ev):
    return ev.chan + ("_w" if isinstance(ev, A.Input) else "_r")


def _sets_flags(p, value):
    """Names when p assigns the constant ``value`` to one or more variables, else None."""
    if isinstance(p, A.Assign) and isinstance(p.expr, A.Const) and p.expr.value == value:
        return [p.var]
    if isinstance(p, A.ParAssign) and all(isinstance(x, A.Const) and x.value == value for x in p.exprs):
        return list(p.vars)
    return None


def _euler(p, h):
    """(vars, odes) when p is x := x + h*F (after ``wait h``), else None."""
    if isinstance(p, A.Assign):
        pairs = [(p.var, p.expr)]
    elif isinstance(p, A.ParAssign):
        pairs = list(zip(p.vars, p.exprs))
    else:
        return None
    odes = []
    for v, e in pairs:
        if not (isinstance(e, A.BinOp) and e.op == "+" and e.left == A.Var(v) and isinstance(e.right, A.BinOp)
                and e.right.op == "*" and isinstance(e.right.left, A.Const)
                and abs(e.right.left.value - h) < 1e-15):
            return None
        odes.append((v, _unshift(e.right.right, h)))
    return [v for v, _ in pairs], tuple(odes)


def _unshift(e, h):
    if isinstance(e, A.Delayed):
        return A.Delayed(e.name, round(e.delay - h, 12))
    if isinstance(e, A.Neg):
        return A.Neg(_unshift(e.arg, h))
    if isinstance(e, A.Call):
        return A.Call(e.func, _unshift(e.arg, h))
    if isinstance(e, A.BinOp):
        return A.BinOp(e.op, _unshift(e.left, h), _unshift(e.right, h))
    return e


def _flow_step(p):
    """Repeat(Guard(c, wait h; euler), K) -> (c, h, vars, odes, K)."""
    if not (isinstance(p, A.Repeat) and isinstance(p.body, A.Guard)):
        return None
    body = _flat([p.body.body])
    if len(body) != 2 or not isinstance(body[0], A.Wait):
        return None
    h = body[0].duration
    eu = _euler(body[1], h)
    if eu is None:
        return None
    return p.body.cond, h, eu[0], eu[1], p.count


def _idle(evs):
    out = None
    for ev in evs:
        a = A.And(A.Cmp("==", A.Var(_flag_of(ev)), A.Const(1.0)), A.Cmp("==", A.Var(_partner_of(ev)), A.Const(0.0)))
        out = a if out is None else A.And(out, a)
    return out


def _strip_reset(q, flags):
    items = _flat([q])
    if items and _sets_flags(items[0], 0) is not None and set(_sets_flags(items[0], 0)) == set(flags):
        items = items[1:]
    return items


class _Stmts:
    def __init__(self, ex: _Exprs, cfg: EmitConfig):
        self.ex = ex
        self.cfg = cfg
        self.counter = 0
        self.arrays: List[str] = []

    def fresh(self):
        self.counter += 1
        return self.counter

    def ind(self, lines, n=1):
        return ["    " * n + ln for ln in lines]

    def block(self, items) -> List[str]:
        items = _flat(items)
        out = []
        i = 0
        while i < len(items):
            n, lines = self.pattern(items, i)
            if n == 0:
                lines = self.stmt(items[i])
                n = 1
            out += lines
            i += n
        return out

    # Table 1
    def stmt(self, p) -> List[str]:
        ex = self.ex
        if isinstance(p, A.Skip):
            return []
        if isinstance(p, A.Stop):
            return ["return;"]
        if isinstance(p, A.Assign):
            return ["%s = %s; wait(SC_ZERO_TIME);" % (ex.name(p.var), ex.expr(p.expr))]
        if isinstance(p, A.ParAssign):
            if all(v in ex.flags for v in p.vars):
                return [" ".join("%s = %s;" % (v, ex.expr(e)) for v, e in zip(p.vars, p.exprs))
                        + " wait(SC_ZERO_TIME);"]
            k = self.fresh()
            tmps = ", ".join("t%d_%d = %s" % (k, j, ex.expr(e)) for j, e in enumerate(p.exprs))
            sets = " ".join("%s = t%d_%d;" % (self.ex.name(v), k, j) for j, v in enumerate(p.vars))
            return ["{ double %s; %s } wait(SC_ZERO_TIME);" % (tmps, sets)]
        if isinstance(p, A.Wait):
            return ["wait(%s, %s);" % (_num(p.duration * UNITS[self.cfg.time_unit]), self.cfg.time_unit)]
        if isinstance(p, A.Seq):
            return self.block(p.items)
        if isinstance(p, A.Guard):
            return ["if (%s) {" % ex.boolean(p.cond)] + self.ind(self.block([p.body])) + ["}"]
        if isinstance(p, A.IChoice):
            return (["if (rand()%2) {"] + self.ind(self.block([p.left])) + ["} else {"]
                    + self.ind(self.block([p.right])) + ["}"])
        if isinstance(p, A.Repeat):
            k = self.fresh()
            i = "i_%d" % k
            return (["int %s = 1;" % i, "while (%s <= %d) {" % (i, p.count)] + self.ind(self.block([p.body]))
                    + self.ind(["%s++;" % i]) + ["}"])
        if isinstance(p, (A.Input, A.Output, A.CommChoice)):
            raise UnsupportedNode("communication without readiness flags; discretize first")
        if isinstance(p, (A.Dde, A.DdeInterrupt)):
            raise UnsupportedNode("continuous statement; discretize first")
        raise UnsupportedNode("cannot emit %r" % (p,))

    # listing patterns
    def pattern(self, items, i) -> Tuple[int, List[str]]:
        p = items[i]
        nxt = items[i + 1] if i + 1 < len(items) else None
        nxt2 = items[i + 2] if i + 2 < len(items) else None
        set1 = _sets_flags(p, 1)
        if set1 and len(set1) == 1 and isinstance(nxt, (A.Input, A.Output)) and _flag_of(nxt) == set1[0] \
                and _sets_flags(nxt2, 0) == set1:
            return 3, self.io(nxt)
        if set1 and isinstance(nxt, A.CommChoice) and [_flag_of(ev) for ev, _ in nxt.branches] == set1:
            return 2, self.choice(nxt)
        if set1:
            got = self.interrupt(items, i, set1)
            if got:
                return got
        fs = _flow_step(p)
        if fs and isinstance(nxt, A.Guard) and isinstance(nxt.body, A.Stop) and nxt.cond == fs[0]:
            return 2, self.continuous(fs)
        return 0, []

    def io(self, ev) -> List[str]:
        ch = ev.chan
        if isinstance(ev, A.Input):
            return ["// code for input statement",
                    "%s_r=1;" % ch,
                    "wait(SC_ZERO_TIME);",
                    "if(!%s_w)" % ch,
                    "    wait(%s_w.posedge_event());" % ch,
                    "wait(%s_w_done);" % ch,
                    "%s=%s.read();" % (self.ex.name(ev.var), ch),
                    "wait(SC_ZERO_TIME);",
                    "%s_r_done.notify();" % ch,
                    "%s_r=0;" % ch,
                    "wait(SC_ZERO_TIME);"]
        return ["// code for output statement",
                "%s_w=1;" % ch,
                "wait(SC_ZERO_TIME);",
                "if(!%s_r)" % ch,
                "    wait(%s_r.posedge_event());" % ch,
                "%s.write(%s);" % (ch, self.ex.expr(ev.expr)),
                "wait(SC_ZERO_TIME);",
                "%s_w_done.notify();" % ch,
                "wait(%s_r_done);" % ch,
                "%s_w=0;" % ch,
                "wait(SC_ZERO_TIME);"]

    def comm_body(self, ev) -> List[str]:
        """The middle of the single-channel listings: the data transfer itself."""
        ch = ev.chan
        if isinstance(ev, A.Input):
            return ["wait(%s_w_done);" % ch, "%s=%s.read();" % (self.ex.name(ev.var), ch), "wait(SC_ZERO_TIME);",
                    "%s_r_done.notify();" % ch]
        return ["%s.write(%s);" % (ch, self.ex.expr(ev.expr)), "wait(SC_ZERO_TIME);",
                "%s_w_done.notify();" % ch, "wait(%s_r_done);" % ch]

    def update(self, vars_, odes) -> str:
        ex = self.ex
        k = ex.f_id(odes)
        args = self.f_args(vars_, odes, self.cfg.h)
        if len(vars_) == 1:
            x = self.ex.name(vars_[0])
            return "%s=%s+h*f_%d(%s);" % (x, x, k, ", ".join(args).replace(", ", ","))
        tmps = ", ".join("d%s_%d = f_%d_%s(%s)" % (self.ex.name(v), k, k, cname(v), ",".join(args)) for v in vars_)
        sets = " ".join("%s=%s+h*d%s_%d;" % (self.ex.name(v), self.ex.name(v), self.ex.name(v), k) for v in vars_)
        return "{ double %s; %s }" % (tmps, sets)

    def f_args(self, vars_, odes, extra_delay, suffix="_r"):
        """Call arguments of f_k: the state, then delayed members for every delayed state reference."""
        args = [self.ex.name(v) for v in vars_]
        for v, d in _delayed_state(odes):
            args.append(self.ex.delayed_member(v, d + extra_delay, suffix))
        return args

    def continuous(self, fs) -> List[str]:
        cond, h, vars_, odes, K = fs
        g = self.ex.boolean(cond)
        i = "i_%d" % self.fresh()
        bound = "T/h" if K == repeat_count(self.cfg.T, self.cfg.h) and abs(h - self.cfg.h) < 1e-15 else str(K)
        return ["// code for delayed continuous statement",
                "for(int %s=0;%s<%s;%s++){" % (i, i, bound, i),
                "    if(%s){" % g,
                "        wait(h,SC_SEC);",
                "        " + self.update(vars_, odes),
                "        wait(SC_ZERO_TIME);",
                "    }",
                "}",
                "if(%s){" % g,
                "    return;",
                "}"]

    def _arrays(self, k, evs):
        self.arrays.append(k)
        return ["sigref IO_%d[] = {%s};" % (k, ", ".join("sigref(%s)" % _flag_of(ev) for ev in evs)),
                "sigref IO_d_%d[] = {%s};" % (k, ", ".join("sigref(%s)" % _partner_of(ev) for ev in evs)),
                "int I_%d[] = {%s};" % (k, ", ".join(str(j) for j in range(len(evs))))]

    def _dispatch(self, var, bodies) -> List[str]:
        out = []
        for j, lines in enumerate(bodies):
            head = "if(%s==%d){" % (var, j) if j == 0 else "else if(%s==%d){" % (var, j)
            out += [head] + self.ind(lines) + ["}"]
        return out

    def _select(self, k, evs) -> List[str]:
        i, n = "i_%d" % k, "chan_num_%d" % k
        return (["for(int %s=0;%s<%s;%s++){" % (i, i, n, i),
                 "    if(IO_%d[%s]==1&&IO_d_%d[%s]==1){" % (k, i, k, i)]
                + self.ind(self._dispatch(i, [self.comm_body(ev) for ev in evs]), 2)
                + ["        k_%d=%s;" % (k, i),
                   "        break;",
                   "    }",
                   "}"])

    def _reset(self, k) -> List[str]:
        i, n = "i_%d" % k, "chan_num_%d" % k
        return ["for(int %s=0;%s<%s;%s++){" % (i, i, n, i), "    IO_%d[%s]=0;" % (k, i), "}"]

    def _set(self, k) -> List[str]:
        i, n = "i_%d" % k, "chan_num_%d" % k
        return ["for(int %s=0;%s<%s;%s++){" % (i, i, n, i), "    IO_%d[%s]=1;" % (k, i), "}"]

    def _posedges(self, k, m):
        terms = ["IO_d_%d[%d].posedge_event()" % (k, j) for j in range(m)]
        if m > 1:
            terms[-1] = "IO_d_%d[chan_num_%d-1].posedge_event()" % (k, k)
        return "|".join(terms)

    def choice(self, cc) -> List[str]:
        k = self.fresh()
        evs = [ev for ev, _ in cc.branches]
        flags = [_flag_of(ev) for ev in evs]
        bodies = [self.block(_strip_reset(q, flags)) for _, q in cc.branches]
        return (self._arrays(k, evs)
                + ["// code for communication choice statement",
                   "int k_%d=-1;" % k,
                   "int chan_num_%d=sizeof(I_%d)/sizeof(I_%d[0]);" % (k, k, k)]
                + self._set(k)
                + ["wait(SC_ZERO_TIME);",
                   "wait(%s);" % self._posedges(k, len(evs))]
                + self.ind(self._select(k, evs))
                + self._reset(k)
                + ["wait(SC_ZERO_TIME);"]
                + self._dispatch("k_%d" % k, bodies))

    def interrupt(self, items, i, flags):
        """flags:=1; Euler loop; [give up]; ready -> choice; stop."""
        rest = items[i + 1:i + 5]
        if not rest:
            return None
        fs = _flow_step(rest[0])
        if fs is None:
            return None
        j = 1
        if len(rest) > j and isinstance(rest[j], A.Guard) and _sets_flags(rest[j].body, 0) is not None \
                and not isinstance(rest[j].body, A.CommChoice):
            giveup = rest[j]
            j += 1
        else:
            giveup = None
        if not (len(rest) > j + 1 and isinstance(rest[j], A.Guard) and isinstance(rest[j].body, A.CommChoice)):
            return None
        cc = rest[j].body
        evs = [ev for ev, _ in cc.branches]
        if [_flag_of(ev) for ev in evs] != flags:
            return None
        idle = _idle(evs)
        cond = fs[0]
        if cond == idle:
            g = A.TRUE
        elif isinstance(cond, A.And) and cond.right == idle:
            g = cond.left
        else:
            return None
        stop = rest[j + 1]
        if not (isinstance(stop, A.Guard) and isinstance(stop.body, A.Stop) and stop.cond == cond):
            return None
        if giveup is not None and not isinstance(g, A.BoolConst) and giveup.cond != A.And(A.Not(g), idle):
            return None
        k = self.fresh()
        gs = self.ex.boolean(g)
        idle_s = "&&".join("IO_%d[%d]&&!IO_d_%d[%d]" % (k, m, k, m) for m in range(len(evs)))
        _, h, vars_, odes, K = fs
        bound = "T/h" if K == repeat_count(self.cfg.T, self.cfg.h) and abs(h - self.cfg.h) < 1e-15 else str(K)
        ii = "i_%d" % k
        bodies = [self.block(_strip_reset(q, flags)) for _, q in cc.branches]
        lines = (self._arrays(k, evs)
                 + ["// code for communication interrupt statement",
                    "int k_%d=-1;" % k,
                    "int chan_num_%d=sizeof(I_%d)/sizeof(I_%d[0]);" % (k, k, k)]
                 + self._set(k)
                 + ["wait(SC_ZERO_TIME);",
                    "for(int %s=0;%s<%s;%s++){" % (ii, ii, bound, ii),
                    "    if(%s&&%s){" % (gs, idle_s),
                    "        wait(h,SC_SEC);",
                    "        " + self.update(vars_, odes),
                    "        wait(SC_ZERO_TIME);",
                    "    }",
                    "}",
                    "if(!(%s)&&%s){" % (gs, idle_s)]
                 + self.ind(self._reset(k))
                 + ["    wait(SC_ZERO_TIME);",
                    "}"]
                 + self._select(k, evs)
                 + self._reset(k)
                 + ["wait(SC_ZERO_TIME);",
                    "if(k_%d>-1){" % k]
                 + self.ind(self._dispatch("k_%d" % k, bodies))
                 + ["}",
                    "if(%s&&%s){" % (gs, idle_s),
                    "    return;",
                    "}"])
        return 1 + j + 2, lines


def _delayed_state(odes):
    vars_ = [v for v, _ in odes]
    seen = []
    for _, f in odes:
        for d in A.delayed_refs(f):
            if d.name in vars_ and (d.name, d.delay) not in seen:
                seen.append((d.name, d.delay))
    return seen


# ------------------------------------------------------------------ module


def emit_stmt(s, cfg: Optional[EmitConfig] = None, flags=None) -> str:
    """Text for one discrete statement (listing templates where they apply)."""
    cfg = cfg or EmitConfig(h=0.025, T=10.0, eps=0.2, time_unit="SC_SEC")
    if flags is None:
        chans = sorted(A.channels(s)) if not isinstance(s, A.Parallel) else []
        flags = {c + "_r" for c in chans} | {c + "_w" for c in chans}
    st = _Stmts(_Exprs(cfg, flags), cfg)
    return "\n".join(st.block([s])) + "\n"


HELPERS = r"""#ifndef DHCSP_HELPERS_H
#define DHCSP_HELPERS_H

#include <systemc.h>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

// A double that remembers its past values, for delayed references.
class hvar {
public:
    explicit hvar(double v = 0.0) { hist.push_back(std::make_pair(0.0, v)); }
    operator double() const { return hist.back().second; }
    hvar& operator=(double v) {
        double t = sc_time_stamp().to_seconds();
        hist.push_back(std::make_pair(t, v));
        return *this;
    }
    // value at time now - d; before the first record the latest value at that time
    double before(double d) const {
        double s = sc_time_stamp().to_seconds() - d;
        if (s < hist.front().first) s = hist.front().first;
        double v = hist.front().second;
        for (size_t i = 0; i < hist.size() && hist[i].first <= s + 1e-12; ++i) v = hist[i].second;
        return v;
    }
private:
    std::vector<std::pair<double, double> > hist;
};

// Fixed-delay view of an hvar.
class delayed_ref {
public:
    delayed_ref(const hvar& v, double d) : var(&v), delay(d) {}
    operator double() const { return var->before(delay); }
private:
    const hvar* var;
    double delay;
};

// Array element standing for a readiness signal.
class sigref {
public:
    explicit sigref(sc_signal<bool>& s) : sig(&s) {}
    sigref& operator=(int v) { sig->write(v != 0); return *this; }
    operator bool() const { return sig->read(); }
    bool operator==(int v) const { return sig->read() == (v != 0); }
    const sc_event& posedge_event() const { return sig->posedge_event(); }
private:
    sc_signal<bool>* sig;
};

// Seedable replacement for rand() inside the module.
class choice_source {
public:
    explicit choice_source(uint64_t seed) : state(seed * 2862933555777941757ULL + 3037000493ULL) {}
    int next() {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<int>((state >> 33) & 0x7fffffff);
    }
private:
    uint64_t state;
};

#endif
"""


EPS = "\x00e"  # stands for the helper parameter e


def _helper_members(ex: _Exprs, cfg: EmitConfig) -> List[str]:
    out = []
    for odes, k in sorted(ex.fs.items(), key=lambda kv: kv[1]):
        ex.local = ex.scope[("f", k)]
        vars_ = [v for v, _ in odes]
        dstate = _delayed_state(odes)
        params = ["double %s" % cname(v) for v in vars_]
        rename = {v: cname(v) for v in vars_}
        for j, (v, d) in enumerate(dstate):
            pname = cname(v) + "_r" if sum(1 for w, _ in dstate if w == v) == 1 else "%s_r%d" % (cname(v), j)
            params.append("double %s" % pname)
            rename[("@" + v, d)] = pname
        sig = ", ".join(params)
        for v, f in odes:
            fn = "f_%d" % k if len(odes) == 1 else "f_%d_%s" % (k, cname(v))
            out += ["double %s(%s) {" % (fn, sig), "    return %s;" % ex.expr(f, 0, rename), "}"]
    if ex.preds:
        items = sorted(ex.preds.items(), key=lambda kv: kv[1])
        st = _Stmts(ex, cfg)
        sym = {EPS: "e"}
        for fn, sign in (("N", 1), ("S", -1), ("N_p", 1)):
            out += ["bool %s(int b, double e) {" % fn, "    switch (b) {"]
            for (base, odes), k in items:
                ex.local = ex.scope[("B", k)]
                moved = _move_sym(normalize(base), sign)
                if fn != "N_p":
                    out.append("    case %d: return %s;" % (k, _BoolWith(ex, sym).boolean(moved)))
                    continue
                if not odes:
                    continue
                kf = ex.f_id(odes)
                vars_ = [v for v, _ in odes]
                args = ",".join(st.f_args(vars_, odes, 0.0, "_r0"))
                succ = dict(sym)
                for v in vars_:
                    fn_v = "f_%d" % kf if len(vars_) == 1 else "f_%d_%s" % (kf, cname(v))
                    succ[v] = "(%s+h*%s(%s))" % (ex.name(v), fn_v, args)
                out.append("    case %d: return %s;" % (k, _BoolWith(ex, succ).boolean(moved)))
            out += ["    }", "    return false;", "}"]
    ex.local = {}
    return out


def _move_sym(b, sign):
    """Move atoms by the symbolic ``e`` (sign +1 widens, -1 shrinks)."""
    if isinstance(b, A.BoolConst):
        return b
    if isinstance(b, A.Cmp):
        grow = sign if b.op in ("<", "<=") else -sign
        op = "+" if grow > 0 else "-"
        return A.Cmp(b.op, b.left, A.BinOp(op, b.right, A.Var(EPS)))
    if isinstance(b, A.And):
        return A.And(_move_sym(b.left, sign), _move_sym(b.right, sign))
    if isinstance(b, A.Or):
        return A.Or(_move_sym(b.left, sign), _move_sym(b.right, sign))
    raise UnsupportedNode("neighbourhood of %r" % (b,))


class _BoolWith:
    def __init__(self, ex, rename):
        self.ex = ex
        self.rename = rename

    def boolean(self, b, ctx=0):
        ex = self.ex
        if isinstance(b, A.Cmp):
            s = "%s %s %s" % (ex.expr(b.left, 0, self.rename), b.op, ex.expr(b.right, 0, self.rename))
            return "(%s)" % s if ctx > 2 else s
        if isinstance(b, A.And):
            s = "%s && %s" % (self.boolean(b.left, 2), self.boolean(b.right, 3))
            return "(%s)" % s if ctx > 2 else s
        if isinstance(b, A.Or):
            s = "%s || %s" % (self.boolean(b.left, 1), self.boolean(b.right, 2))
            return "(%s)" % s if ctx > 1 else s
        return ex.boolean(b, ctx)


def emit_module(p, cfg: EmitConfig) -> EmitUnit:
    """Translation unit for a discretized top-level parallel composition."""
    if not isinstance(p, A.Parallel):
        p = A.Parallel((p,))
    for n in A.walk(p):
        if isinstance(n, (A.Dde, A.DdeInterrupt)):
            raise UnsupportedNode("continuous statement; discretize first")
    chans = sorted(A.channels(p))
    flags = {c + "_r" for c in chans} | {c + "_w" for c in chans}
    ex = _Exprs(cfg, flags)
    st = _Stmts(ex, cfg)
    owners: Dict[str, List[str]] = {}
    for i, comp in enumerate(p.components):
        for v in A.all_vars(comp) - flags:
            owners.setdefault(v, []).append(cname(p.label(i)))
    members = set()
    threads = {}
    for i, comp in enumerate(p.components):
        label = cname(p.label(i))
        ex.local = {v: "%s_%s" % (label, cname(v)) for v, ls in owners.items() if len(ls) > 1 and label in ls}
        members |= {ex.name(v) for v in A.all_vars(comp) - flags}
        threads[label] = st.block([comp])
    ex.local = {}
    helper_lines = _helper_members(ex, cfg)
    name = cname(p.name)
    guard = "DHCSP_%s_H" % name.upper()

    lines = ["#ifndef %s" % guard, "#define %s" % guard, "", "#include <systemc.h>", "#include \"helpers.h\"", "",
             "SC_MODULE(%s) {" % name]
    lines.append("    static constexpr double T = %s;" % _num(cfg.T, True))
    lines.append("    static constexpr double h = %s;" % _num(cfg.h, True))
    lines.append("    static constexpr double e = %s;" % _num(cfg.eps, True))
    lines.append("    static constexpr double r = %s;" % _num(cfg.r, True))
    for k in sorted(set(kv[1] for kv in ex.preds.items())):
        lines.append("    static const int B_%d = %d;" % (k, k))
    lines.append("")
    for c in chans:
        lines.append("    sc_signal<double> %s;" % c)
        lines.append("    sc_signal<bool> %s_r, %s_w;" % (c, c))
        lines.append("    sc_event %s_r_done, %s_w_done;" % (c, c))
    if chans:
        lines.append("")
    for v in sorted(members):
        lines.append("    hvar %s;" % v)
    for (v, d), m in sorted(ex.delayed.items(), key=lambda kv: kv[1]):
        lines.append("    delayed_ref %s;" % m)
    lines.append("    choice_source rng;")
    lines.append("")
    lines.append("    int rand() { return rng.next(); }")
    lines += ["    " + ln for ln in helper_lines]
    lines.append("")
    for label, body in threads.items():
        lines.append("    void %s() {" % label)
        lines += ["        " + ln for ln in body]
        lines.append("    }")
        lines.append("")
    inits = ["%s(%s, %s)" % (m, v, _num(d, True))
             for (v, d), m in sorted(ex.delayed.items(), key=lambda kv: kv[1])]
    inits.append("rng(%d)" % cfg.seed)
    lines.append("    SC_CTOR(%s) : %s {" % (name, ", ".join(inits)))
    for label in threads:
        lines.append("        SC_THREAD(%s);" % label)
    lines.append("    }")
    lines.append("};")
    lines.append("")
    lines.append("#endif")
    header = "\n".join(lines) + "\n"
    scale = UNITS[cfg.time_unit]
    main = "\n".join([
        "#include <systemc.h>",
        "#include \"%s.h\"" % name,
        "",
        "int sc_main(int argc, char* argv[]) {",
        "    %s top(\"top\");" % name,
        "    sc_start(%s, %s);" % (_num(cfg.T * scale), cfg.time_unit),
        "    return 0;",
        "}",
        "",
    ])
    return EmitUnit(name, header, main, HELPERS, {k: "\n".join(v) for k, v in threads.items()})
