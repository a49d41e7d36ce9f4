"""The discretization transform and robustness estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

from . import ast as A
from .engine import Machine, ProcState, RandomChooser, to_sec
from .exprs import eval_bool, evaluate
from .neighborhood import normalize, shifted, widen
from .printer import bool_str
from .reference import default_dt, integrate_dde

ONE = A.Const(1.0)
ZERO = A.Const(0.0)


def repeat_count(T: float, h: float) -> int:
    """ceil(T/h), tolerant of floating noise in exact multiples."""
    q = T / h
    k = int(round(q))
    if abs(q - k) <= 1e-9 * max(1.0, q):
        return max(k, 1)
    return max(int(math.ceil(q)), 1)


def _flag(ev):
    return ev.chan + ("_r" if isinstance(ev, A.Input) else "_w")


def _partner(ev):
    return ev.chan + ("_w" if isinstance(ev, A.Input) else "_r")


def _is(name, v):
    return A.Cmp("==", A.Var(name), A.Const(float(v)))


def _conj(items):
    items = [b for b in items if not (isinstance(b, A.BoolConst) and b.value)]
    if not items:
        return A.TRUE
    out = items[0]
    for b in items[1:]:
        out = A.And(out, b)
    return out


def _disj(items):
    out = items[0]
    for b in items[1:]:
        out = A.Or(out, b)
    return out


def _set_flags(names, v):
    names = list(names)
    if len(names) == 1:
        return A.Assign(names[0], A.Const(float(v)))
    return A.ParAssign(tuple(names), tuple(A.Const(float(v)) for _ in names))


def _shift_delays(e, dh):
    """Add ``dh`` to every delay in ``e``."""
    if isinstance(e, A.Delayed):
        return A.Delayed(e.name, e.delay + dh)
    if isinstance(e, A.Neg):
        return A.Neg(_shift_delays(e.arg, dh))
    if isinstance(e, A.Call):
        return A.Call(e.func, _shift_delays(e.arg, dh))
    if isinstance(e, A.BinOp):
        return A.BinOp(e.op, _shift_delays(e.left, dh), _shift_delays(e.right, dh))
    return e


def flow_guard(spec: A.DdeSpec, domain, h: float, eps: float):
    """N(B, eps) and N'(B, eps); collapses to ``true`` for trivial domains."""
    b = normalize(domain)
    if isinstance(b, A.BoolConst):
        return b
    return A.And(widen(b, eps), shifted(b, eps, h, spec.odes()))


def euler_update(spec: A.DdeSpec, h: float):
    """x := x + h*f(x, x_r), executed after ``wait h`` so delays grow by h."""
    exprs = tuple(A.BinOp("+", A.Var(x), A.BinOp("*", A.Const(h), _shift_delays(f, h)))
                  for x, f in spec.odes())
    if len(exprs) == 1:
        return A.Assign(spec.vars[0], exprs[0])
    return A.ParAssign(tuple(spec.vars), exprs)


class _Discretizer:
    def __init__(self, h, eps, T):
        if not h > 0 or not eps > 0 or not T > 0:
            raise ValueError("h, eps and T must be positive")
        self.h, self.eps, self.T = float(h), float(eps), float(T)
        self.K = repeat_count(self.T, self.h)

    def body(self, flags, q):
        reset = _set_flags(flags, 0)
        return A.seq(reset, self(q)) if q is not None else reset

    def __call__(self, p):
        if isinstance(p, (A.Skip, A.Stop, A.Assign, A.ParAssign, A.Wait)):
            return p
        if isinstance(p, A.Seq):
            return A.Seq(tuple(self(q) for q in p.items))
        if isinstance(p, A.Guard):
            return A.Guard(p.cond, self(p.body))
        if isinstance(p, A.IChoice):
            return A.IChoice(self(p.left), self(p.right))
        if isinstance(p, A.Repeat):
            return A.Repeat(self(p.body), p.count)
        if isinstance(p, A.Parallel):
            return A.Parallel(tuple(self(c) for c in p.components), p.name, p.labels)
        if isinstance(p, (A.Input, A.Output)):
            f = _flag(p)
            return A.Seq((A.Assign(f, ONE), p, A.Assign(f, ZERO)))
        if isinstance(p, A.CommChoice):
            flags = [_flag(ev) for ev, _ in p.branches]
            branches = tuple((ev, self.body(flags, q)) for ev, q in p.branches)
            return A.Seq((_set_flags(flags, 1), A.CommChoice(branches)))
        if isinstance(p, A.Dde):
            g = flow_guard(p.spec, p.domain, self.h, self.eps)
            step = A.Seq((A.Wait(self.h), euler_update(p.spec, self.h)))
            return A.Seq((A.Repeat(A.Guard(g, step), self.K), A.Guard(g, A.Stop())))
        if isinstance(p, A.DdeInterrupt):
            return self.interrupt(p)
        raise TypeError("cannot discretize %r" % (p,))

    def interrupt(self, p):
        evs = [ev for ev, _ in p.handlers]
        flags = [_flag(ev) for ev in evs]
        g = flow_guard(p.spec, p.domain, self.h, self.eps)
        idle = _conj([A.And(_is(_flag(ev), 1), _is(_partner(ev), 0)) for ev in evs])
        ready = _disj([A.And(_is(_flag(ev), 1), _is(_partner(ev), 1)) for ev in evs])
        step = A.Seq((A.Wait(self.h), euler_update(p.spec, self.h)))
        branches = tuple((ev, self.body(flags, q)) for ev, q in p.handlers)
        parts = [_set_flags(flags, 1), A.Repeat(A.Guard(_conj([g, idle]), step), self.K)]
        if not isinstance(g, A.BoolConst):  # with a trivial domain the flow never gives up
            parts.append(A.Guard(_conj([A.Not(g), idle]), _set_flags(flags, 0)))
        parts.append(A.Guard(ready, A.CommChoice(branches)))
        parts.append(A.Guard(_conj([g, idle]), A.Stop()))
        return A.Seq(tuple(parts))


def discretize(p, h: float, eps: float, T: float):
    """D_{h,eps}(p): replace every delay equation by guarded Euler steps.

    Communications get readiness flags ``<ch>_r`` / ``<ch>_w`` so that the
    discrete process can test whether its partner is waiting.
    """
    return _Discretizer(h, eps, T)(p)


# ------------------------------------------------------------- robustness


def continuous_vars(p) -> set:
    """Variables whose value depends on a flow, by data flow to a fixed point."""
    tainted = set()
    for n in A.dde_nodes(p):
        tainted |= set(n.spec.vars)
    sends = {}
    for n in A.walk(p):
        if isinstance(n, A.Output):
            sends.setdefault(n.chan, []).append(n.expr)
    while True:
        before = len(tainted)
        for n in A.walk(p):
            if isinstance(n, A.Assign) and A.expr_vars(n.expr) & tainted:
                tainted.add(n.var)
            elif isinstance(n, A.ParAssign):
                for v, e in zip(n.vars, n.exprs):
                    if A.expr_vars(e) & tainted:
                        tainted.add(v)
            elif isinstance(n, A.Input):
                if any(A.expr_vars(e) & tainted for e in sends.get(n.chan, [])):
                    tainted.add(n.var)
        if len(tainted) == before:
            return tainted


@dataclass
class Margin:
    time: float
    comp: int
    cond: str
    margin: float
    kind: str = "guard"  # guard | domain


@dataclass
class RobustnessReport:
    delta: float
    eps: float
    margins: List[Margin] = field(default_factory=list)
    exits: List[tuple] = field(default_factory=list)  # (time, comp, dwell)
    warnings: List[str] = field(default_factory=list)
    runs: int = 0

    @property
    def unconstrained(self):
        return math.isinf(self.eps)

    def worst(self) -> Optional[Margin]:
        return min(self.margins, key=lambda m: m.margin) if self.margins else None


def atom_margins(b, env, delayed=None):
    """|lhs - rhs| for every comparison atom of b."""
    out = []
    for a in A.atoms(normalize(b)):
        if isinstance(a, A.Cmp):
            out.append(abs(evaluate(a.left, env, delayed) - evaluate(a.right, env, delayed)))
    return out


class _Recorder:
    def __init__(self, machine, tainted, horizon):
        self.m = machine
        self.tainted = tainted
        self.horizon = horizon
        self.margins: List[Margin] = []
        self.exits: List[tuple] = []
        self.seen = set()

    def on_guard(self, st, i, cond, kind="guard"):
        if not (A.bool_vars(cond) & self.tainted):
            return
        ms = atom_margins(cond, st.env(), self.m._delayed(st, i))
        if ms:
            self.seen.add(cond)
            self.margins.append(Margin(to_sec(st.now), i, bool_str(cond), min(ms), kind))

    def on_exit(self, st, i, node):
        """Continue the flow past its exit; dwell is the last time it is back inside the domain."""
        hist = st.comps[i].hist
        t = hist.last_t
        names = hist.names
        r = node.spec.delay or 0.0
        idx = [names.index(v) for v in node.spec.vars]
        params = {v: float(hist.last_x[k]) for k, v in enumerate(names) if v not in node.spec.vars}

        def g(s):
            return hist.at(t + s)[idx]
        seg, _ = integrate_dde(node.spec, g if r > 0 else g(0.0), A.TRUE, self.horizon, self.m.dt, params)
        dwell = 0.0
        for k in range(1, len(seg.t)):
            env = dict(params)
            env.update({v: float(seg.x[k, j]) for j, v in enumerate(node.spec.vars)})
            if eval_bool(node.domain, env):
                dwell = float(seg.t[k])
        self.exits.append((t, i, dwell))


def estimate_robustness(p, init: Optional[ProcState] = None, T: float = 10.0, n_runs: int = 20,
                        dt_ref: Optional[float] = None, horizon: float = 1.0,
                        seed: int = 0) -> RobustnessReport:
    """Simulation estimate of (delta, eps) robustness.

    eps is the least distance of any guard over flow-dependent variables to
    its boundary, over all runs; delta is the longest time within
    ``horizon`` after a domain exit at which the continued trajectory is
    back inside the domain (0 for clean, transversal exits).
    """
    dt = dt_ref or default_dt()
    tainted = continuous_vars(p)
    margins, exits = [], []
    guards = {n.cond for n in A.walk(p) if isinstance(n, A.Guard) and A.bool_vars(n.cond) & tainted}
    seen = set()
    for k in range(n_runs):
        m = Machine(p, "source", dt=dt, init=init)
        rec = _Recorder(m, tainted, horizon)
        m.observer = rec
        m.run(T, RandomChooser(seed + k))
        margins += rec.margins
        exits += rec.exits
        seen |= rec.seen
    warnings = ["guard never evaluated: %s" % g for g in sorted(map(str, guards - seen))]
    eps = min((mg.margin for mg in margins), default=math.inf)
    delta = max((e[2] for e in exits if e[2] > 0), default=0.0)
    return RobustnessReport(delta, eps, margins, exits, warnings, n_runs)


def check_window(delta: float, h: float) -> Optional[str]:
    """Warning text when delta > 0 and h < delta < 2h fails."""
    if delta > 0 and not (h < delta < 2 * h):
        return "step %g outside the window delta/2 < h < delta for delta=%g" % (h, delta)
    return None

