"""Small-step execution of dHCSP processes.

One machine serves three clients: the dense reference interpreter
(``mode="source"``), the delta-cycle interpreter for discretized processes
(``mode="discrete"``) and the transition-system builder, which drives the
same steps but enumerates internal choices instead of sampling them.

Time is kept as integer ticks (picoseconds) so that repeated waits line up
exactly; flows are integrated in seconds.
"""

from __future__ import annotations

import functools
import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import ast as A
from .exprs import DomainError, compile_pred, compile_rhs, eval_bool, evaluate
from .history import History
from .kernels import STATUS_DOMAIN, STATUS_EXIT, STATUS_FULL, get_kernels
from .neighborhood import materialize
from .validate import flag_names

TICKS = 10**12


def to_ticks(t: float) -> int:
    return int(round(float(t) * TICKS))


def to_sec(k: int) -> float:
    return k / TICKS


class DeadlockDetected(RuntimeError):
    pass


class StateBudgetExceeded(RuntimeError):
    pass


# component status
RUN, DELTA, WAIT, COMM, FLOW, DONE, STOP = "run", "delta", "wait", "comm", "flow", "done", "stop"


@dataclass(frozen=True)
class Event:
    time: float
    kind: str  # tau | comm | delay
    chan: str = ""
    value: float = 0.0
    comp: int = -1

    @property
    def label(self):
        if self.kind == "comm":
            return "%s.%s" % (self.chan, _fmt(self.value))
        if self.kind == "delay":
            return "delay %s" % _fmt(self.value)
        return "tau"


def _fmt(v):
    return ("%.10g" % v)


@dataclass
class Comp:
    cont: Tuple = ()
    status: str = RUN
    wake: int = 0
    offers: Tuple = ()  # ((event, body or None), ...)
    flow: object = None  # active Dde / DdeInterrupt
    hist: Optional[History] = None
    flow_t0: int = 0

    def copy(self):
        return Comp(self.cont, self.status, self.wake, self.offers, self.flow,
                    self.hist.clone() if self.hist is not None else None, self.flow_t0)


@dataclass
class MState:
    now: int
    comps: List[Comp]
    vals: Dict[str, float]
    signals: Dict[str, float] = field(default_factory=dict)
    pending: Dict[str, float] = field(default_factory=dict)
    events: List[Event] = field(default_factory=list)
    taus: int = 0
    flows: List[tuple] = field(default_factory=list)  # (comp, node, t0, t1, values at exit)

    def clone(self, keep_events=False):
        return MState(self.now, [c.copy() for c in self.comps], dict(self.vals), dict(self.signals),
                      dict(self.pending), list(self.events) if keep_events else [], self.taus,
                      list(self.flows) if keep_events else [])

    def env(self):
        if not self.signals:
            return self.vals
        e = dict(self.signals)
        e.update(self.vals)
        return e


@dataclass(frozen=True)
class ProcState:
    """Initial state: a valuation at time ``now`` with constant pre-history."""

    vals: Dict[str, float] = field(default_factory=dict)
    now: float = 0.0


class RandomChooser:
    def __init__(self, seed=0):
        self.rng = random.Random(seed)

    def choose(self, n):
        return self.rng.randrange(n)


class PrefixChooser:
    """Replays a fixed prefix of choices, then picks 0 and records arities."""

    def __init__(self, prefix=()):
        self.prefix = tuple(prefix)
        self.made: List[int] = []
        self.arity: List[int] = []

    def choose(self, n):
        i = len(self.made)
        c = self.prefix[i] if i < len(self.prefix) else 0
        self.made.append(c)
        self.arity.append(n)
        return c


class Machine:
    def __init__(self, p, mode: str = "source", dt: float = 1e-4, init: Optional[ProcState] = None,
                 sample_dt: Optional[float] = None):
        if mode not in ("source", "discrete"):
            raise ValueError("mode must be 'source' or 'discrete'")
        self.p = p
        self.mode = mode
        self.discrete = mode == "discrete"
        self.comps_src = A.components(p)
        self.dt = float(dt)
        init = init or ProcState()
        self.init = init
        chans = []
        for n in A.walk(p):
            if isinstance(n, (A.Input, A.Output)) and n.chan not in chans:
                chans.append(n.chan)
        self.chan_order = {c: i for i, c in enumerate(chans)}
        self.flags = flag_names(chans) if self.discrete else set()
        self.comp_vars = []
        for c in self.comps_src:
            vs = sorted(A.all_vars(c) - self.flags)
            self.comp_vars.append(vs)
        self.var_comp = {v: i for i, vs in enumerate(self.comp_vars) for v in vs}
        self.user_vars = sorted(self.var_comp)
        self._flow_cache = {}
        self.observer = None  # optional: on_guard(st, i, cond), on_exit(st, i, node)
        if self.discrete:
            for n in A.walk(p):
                if isinstance(n, (A.Dde, A.DdeInterrupt)):
                    raise ValueError("continuous statement in a discrete process")

    # ---------------------------------------------------------------- state
    def initial_state(self) -> MState:
        vals = {v: float(self.init.vals.get(v, 0.0)) for v in self.user_vars}
        t0 = to_ticks(self.init.now)
        comps = []
        for i, c in enumerate(self.comps_src):
            vs = self.comp_vars[i]
            h = History(vs, [vals[v] for v in vs], to_sec(t0))
            comps.append(Comp(cont=(c,), status=RUN, hist=h))
        signals = {f: 0.0 for f in sorted(self.flags)}
        return MState(t0, comps, vals, signals)

    def key(self, st: MState):
        comps = tuple((c.cont, c.status, c.wake if c.status == WAIT else 0, c.offers) for c in st.comps)
        return (st.now, comps, tuple(st.vals[v] for v in self.user_vars),
                tuple(st.signals[f] for f in sorted(self.flags)))

    def terminated(self, st):
        return all(c.status == DONE for c in st.comps)

    def stable(self, st):
        return not any(c.status in (RUN, DELTA) for c in st.comps)

    # --------------------------------------------------------------- values
    def _delayed(self, st, i):
        hist = st.comps[i].hist
        now = to_sec(st.now)

        def look(name, delay):
            if name not in hist.index:
                raise DomainError("delayed reference to foreign variable %s" % name)
            return hist.value_at(name, now - delay)
        return look

    def ev(self, st, i, e):
        return evaluate(e, st.env(), self._delayed(st, i))

    def evb(self, st, i, b):
        b = _strip_nbhd(b)
        return eval_bool(b, st.env(), self._delayed(st, i))

    def _write(self, st, i, updates):
        user = {}
        for v, x in updates.items():
            if v in self.flags:
                if self.discrete:
                    st.pending[v] = x
                else:
                    st.signals[v] = x
            else:
                user[v] = x
        if user:
            st.vals.update(user)
            st.comps[i].hist.set(to_sec(st.now), user)

    def _tau(self, st, i):
        st.taus += 1
        st.events.append(Event(to_sec(st.now), "tau", comp=i))

    # ----------------------------------------------------------- small step
    def step_comp(self, st, i, chooser) -> bool:
        """Execute one construct of component i; return False when it blocks."""
        c = st.comps[i]
        if c.status != RUN:
            return False
        if not c.cont:
            c.status = DONE
            return False
        head, rest = c.cont[0], c.cont[1:]
        if isinstance(head, A.Seq):
            c.cont = tuple(head.items) + rest
        elif isinstance(head, A.Skip):
            c.cont = rest
            self._tau(st, i)
        elif isinstance(head, A.Stop):
            c.status = STOP
            return False
        elif isinstance(head, A.Assign):
            self._write(st, i, {head.var: self.ev(st, i, head.expr)})
            c.cont = rest
            self._tau(st, i)
            if self.discrete:
                c.status = DELTA
                return False
        elif isinstance(head, A.ParAssign):
            vals = [self.ev(st, i, e) for e in head.exprs]
            self._write(st, i, dict(zip(head.vars, vals)))
            c.cont = rest
            self._tau(st, i)
            if self.discrete:
                c.status = DELTA
                return False
        elif isinstance(head, A.Wait):
            d = to_ticks(head.duration)
            c.cont = rest
            if d <= 0:
                self._tau(st, i)
            else:
                c.status = WAIT
                c.wake = st.now + d
                return False
        elif isinstance(head, A.Guard):
            if self.observer is not None:
                self.observer.on_guard(st, i, head.cond)
            if self.evb(st, i, head.cond):
                c.cont = (head.body,) + rest
            else:
                c.cont = rest
                self._tau(st, i)
        elif isinstance(head, A.IChoice):
            k = chooser.choose(2)
            c.cont = ((head.left, head.right)[k],) + rest
            self._tau(st, i)
        elif isinstance(head, A.Repeat):
            if head.count > 1:
                c.cont = (head.body, A.Repeat(head.body, head.count - 1)) + rest
            else:
                c.cont = (head.body,) + rest
        elif isinstance(head, (A.Input, A.Output)):
            c.status = COMM
            c.offers = ((head, None),)
            c.cont = rest
            return False
        elif isinstance(head, A.CommChoice):
            c.status = COMM
            c.offers = tuple(head.branches)
            c.cont = rest
            return False
        elif isinstance(head, (A.Dde, A.DdeInterrupt)):
            if self.observer is not None:
                self.observer.on_guard(st, i, head.domain, "domain")
            if not self.evb(st, i, head.domain):
                c.cont = rest
                self._tau(st, i)
            else:
                c.status = FLOW
                c.flow = head
                c.cont = rest
                c.offers = tuple(head.handlers) if isinstance(head, A.DdeInterrupt) else ()
                c.hist.start_flow(to_sec(st.now))
                c.flow_t0 = st.now
                return False
        else:
            raise TypeError("cannot execute %r" % (head,))
        return True

    def settle(self, st, chooser, budget=10**7):
        """Run all components until none can make a timeless internal step."""
        while True:
            for i in range(len(st.comps)):
                n = 0
                while self.step_comp(st, i, chooser):
                    n += 1
                    if n > budget:
                        raise RuntimeError("component %d does not block (unbounded instant)" % i)
            if self.discrete:
                if st.pending:
                    st.signals.update(st.pending)
                    st.pending.clear()
                woke = False
                for c in st.comps:
                    if c.status == DELTA:
                        c.status = RUN
                        woke = True
                if woke:
                    continue
            return

    # -------------------------------------------------------- communication
    def enabled_comms(self, st):
        """Matching (chan, reader, writer, reader-offer, writer-offer), lowest channel first."""
        readers, writers = {}, {}
        for i, c in enumerate(st.comps):
            if c.status not in (COMM, FLOW):
                continue
            for k, (ev, _) in enumerate(c.offers):
                d = readers if isinstance(ev, A.Input) else writers
                d.setdefault(ev.chan, (i, k))
        out = []
        for ch in sorted(readers, key=lambda x: self.chan_order.get(x, 0)):
            if ch in writers and readers[ch][0] != writers[ch][0]:
                out.append((ch,) + readers[ch][:1] + writers[ch][:1] + (readers[ch][1], writers[ch][1]))
        return out

    def _log_flow(self, st, i):
        c = st.comps[i]
        st.flows.append((i, c.flow, to_sec(c.flow_t0), to_sec(st.now), dict(st.vals)))

    def _leave(self, st, i, body):
        c = st.comps[i]
        if c.status == FLOW:
            self._log_flow(st, i)
            c.hist.end_flow()
            self._sync_vals(st, i)
        c.status = RUN
        c.flow = None
        c.offers = ()
        if body is not None:
            c.cont = (body,) + c.cont

    def fire(self, st, comm):
        ch, ri, wi, rk, wk = comm
        r_ev, r_body = st.comps[ri].offers[rk]
        w_ev, w_body = st.comps[wi].offers[wk]
        value = self.ev(st, wi, w_ev.expr)
        st.events.append(Event(to_sec(st.now), "comm", ch, value))
        self._leave(st, wi, w_body)
        self._leave(st, ri, r_body)
        self._write(st, ri, {r_ev.var: value})
        return value

    # ----------------------------------------------------------------- time
    def _flow_fns(self, i, node):
        key = (i, node)
        got = self._flow_cache.get(key)
        if got is None:
            names = self.comp_vars[i]
            index = {v: k for k, v in enumerate(names)}
            by_slot = {index[v]: e for v, e in zip(node.spec.vars, node.spec.rhs)}
            rhs = compile_rhs(by_slot, len(names), index)
            dom_trivial = isinstance(node.domain, A.BoolConst) and node.domain.value
            if dom_trivial:
                dom = compile_pred(A.TRUE, index)
            else:
                dom = compile_pred(node.domain, index)
            delay = node.spec.delay or 0.0
            got = (rhs, dom, not dom_trivial, delay, index)
            self._flow_cache[key] = got
        return got

    def _sync_vals(self, st, i):
        h = st.comps[i].hist
        x = h.last_x
        for v, k in h.index.items():
            st.vals[v] = float(x[k])

    def _integrate(self, st, i, t_end: float):
        """Integrate component i's flow to t_end; return exit time or None."""
        c = st.comps[i]
        rhs, dom, use_dom, delay, index = self._flow_fns(i, c.flow)
        dt = self.dt
        if delay > 0 and dt > delay:
            dt = delay
        h = c.hist
        t0 = h.last_t
        steps = int(math.ceil((t_end - t0) / dt - 1e-9)) + 2
        h.reserve(steps)
        _, _, rk4 = get_kernels()
        n, status = rk4(rhs, dom, use_dom, delay, dt, t_end, h.t, h.x, h.dx, h.n)
        h.n = n
        if status == STATUS_DOMAIN:
            raise DomainError("flow right-hand side undefined", h.last_t)
        if status == STATUS_FULL:
            raise RuntimeError("history capacity exhausted")
        if status == STATUS_EXIT:
            return self._locate_exit(st, i, c.flow, index)
        return None

    def _locate_exit(self, st, i, node, index):
        """Bisect between the last two knots for the boundary crossing (1e-9 s)."""
        h = st.comps[i].hist
        lo, hi = float(h.t[h.n - 2]), float(h.t[h.n - 1])
        names = h.names

        def inside(t):
            x = h.at(t)
            env = dict(st.vals)
            env.update({v: float(x[k]) for k, v in enumerate(names)})
            return eval_bool(node.domain, env)
        while hi - lo > 1e-9:
            mid = 0.5 * (lo + hi)
            if inside(mid):
                lo = mid
            else:
                hi = mid
        h.truncate(hi)
        return hi

    def advance(self, st, limit: int):
        """Let time pass up to ``limit`` ticks or the next event; return the delay in ticks.

        Returns 0 when nothing can happen any more (all components finished
        or idling in ``stop``).
        """
        t_next = limit
        live = False
        for c in st.comps:
            if c.status == WAIT:
                t_next = min(t_next, c.wake)
                live = True
            elif c.status == FLOW:
                live = True
        if not live:
            if any(c.status == COMM for c in st.comps):
                raise DeadlockDetected("all components blocked at t=%g" % to_sec(st.now))
            if all(c.status == DONE for c in st.comps):
                return 0
            # only stop/done components: idle to the limit
            d = limit - st.now
            st.now = limit
            return d
        flows = [i for i, c in enumerate(st.comps) if c.status == FLOW]
        exits = {}
        end_s = to_sec(t_next)
        for i in flows:
            te = self._integrate(st, i, end_s)
            if te is not None:
                exits[i] = te
        leaving = []
        if exits:
            te = min(exits.values())
            tk = max(to_ticks(te), st.now)
            t_next = min(t_next, tk)
            for i in flows:
                st.comps[i].hist.truncate(te)
            leaving = [i for i, t in exits.items() if to_ticks(t) <= t_next]
        for i in flows:
            if st.comps[i].status == FLOW:
                self._sync_vals(st, i)
        d = t_next - st.now
        st.now = t_next
        for i in leaving:
            if self.observer is not None:
                self.observer.on_exit(st, i, st.comps[i].flow)
            self._leave(st, i, None)
            self._tau(st, i)
        for c in st.comps:
            if c.status == WAIT and c.wake <= st.now:
                c.status = RUN
        return d

    # ------------------------------------------------------------- driving
    def instant(self, st, chooser):
        """Settle and fire communications until the current instant is quiescent."""
        self.settle(st, chooser)
        while True:
            cs = self.enabled_comms(st)
            if not cs:
                return
            self.fire(st, cs[0])
            self.settle(st, chooser)

    def run(self, T: float, chooser=None, st: Optional[MState] = None):
        chooser = chooser or RandomChooser(0)
        st = st or self.initial_state()
        limit = to_ticks(T)
        while True:
            self.instant(st, chooser)
            if st.now >= limit or self.terminated(st):
                break
            d = self.advance(st, limit)
            if d == 0:
                break
            st.events.append(Event(to_sec(st.now - d), "delay", value=to_sec(d)))
        for i, c in enumerate(st.comps):
            if c.status == FLOW:
                self._log_flow(st, i)
            c.hist.hold_to(to_sec(min(st.now, limit)))
        return st


@functools.lru_cache(maxsize=4096)
def _strip_nbhd(b):
    """Replace tagged neighbourhoods by their plain boolean form."""
    if isinstance(b, A.Nbhd):
        return materialize(b)
    if isinstance(b, A.And):
        return A.And(_strip_nbhd(b.left), _strip_nbhd(b.right))
    if isinstance(b, A.Or):
        return A.Or(_strip_nbhd(b.left), _strip_nbhd(b.right))
    if isinstance(b, A.Not):
        return A.Not(_strip_nbhd(b.arg))
    return b
