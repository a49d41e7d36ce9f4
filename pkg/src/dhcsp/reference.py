"""Dense reference semantics: DDE integration and the source interpreter."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from . import ast as A
from .engine import Event, Machine, ProcState, RandomChooser
from .exprs import DomainError, compile_pred, compile_rhs, eval_bool
from .history import History
from .kernels import STATUS_DOMAIN, STATUS_EXIT, STATUS_FULL, get_kernels

DEFAULT_DT = 1e-4


def default_dt(h: Optional[float] = None) -> float:
    return h / 100.0 if h else DEFAULT_DT


# ------------------------------------------------------------------ results


@dataclass
class DomainExit:
    t: float


@dataclass
class TimeOut:
    t: float


@dataclass
class DenseSegment:
    """Piecewise cubic solution; callable at any time in its range."""

    names: tuple
    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray

    def __call__(self, s):
        h_at, h_sample, _ = get_kernels()
        if np.ndim(s) == 0:
            out = np.empty(len(self.names))
            h_at(self.t, self.x, self.dx, len(self.t), float(s), out)
            return out
        ts = np.ascontiguousarray(s, dtype=float)
        out = np.empty((len(ts), len(self.names)))
        h_sample(self.t, self.x, self.dx, len(self.t), ts, out)
        return out

    @property
    def end(self):
        return self.x[-1]


def integrate_dde(spec: A.DdeSpec, init_history: Union[float, Sequence[float], Callable],
                  domain: A.BoolExpr = A.TRUE, t_max: float = 1.0, dt: float = DEFAULT_DT,
                  params: Optional[dict] = None):
    """Integrate ``spec`` from time 0 with the given history on [-r, 0].

    ``init_history`` is a constant (scalar or per-variable vector) or a
    function of time returning the state.  Returns (segment, exit) where
    exit is DomainExit(t_f) or TimeOut(t_max); the segment covers [0, t_f].
    """
    params = dict(params or {})
    names = tuple(spec.vars) + tuple(sorted(params))
    index = {v: i for i, v in enumerate(names)}
    nstate = len(spec.vars)
    r = spec.delay or 0.0
    pv = [params[p] for p in sorted(params)]

    if callable(init_history):
        g = init_history
    else:
        c = np.broadcast_to(np.asarray(init_history, float), (nstate,)).copy()

        def g(s):
            return c
    x0 = np.concatenate([np.atleast_1d(np.asarray(g(0.0), float)), pv])

    if r > 0 and dt > r:
        dt = r
    if callable(init_history) and r > 0:
        ts = np.linspace(-r, 0.0, max(2, int(round(r / dt)) + 1))
        xs = np.array([np.concatenate([np.atleast_1d(np.asarray(g(s), float)), pv]) for s in ts])
        dxs = np.gradient(xs, ts, axis=0)
        hist = History(names, xs[0], ts[0], cap=len(ts) + 16)
        hist.dx[0] = dxs[0]
        for k in range(1, len(ts)):
            hist.append(ts[k], xs[k], dxs[k])
        hist.x[hist.n - 1] = x0
    else:
        hist = History(names, x0, 0.0)
    hist.append(0.0, x0)  # flow start knot
    start = hist.n - 1

    rhs = compile_rhs({i: e for i, e in enumerate(spec.rhs)}, len(names), index)
    trivial = isinstance(domain, A.BoolConst) and domain.value
    dom = compile_pred(A.TRUE if trivial else domain, index)
    if not trivial and not eval_bool(domain, {v: float(x0[i]) for v, i in index.items()}):
        seg = DenseSegment(names[:nstate], hist.t[start:hist.n].copy(), hist.x[start:hist.n, :nstate].copy(),
                           hist.dx[start:hist.n, :nstate].copy())
        return seg, DomainExit(0.0)
    hist.reserve(int(np.ceil(t_max / dt)) + 4)
    _, _, rk4 = get_kernels()
    n, status = rk4(rhs, dom, not trivial, r, dt, float(t_max), hist.t, hist.x, hist.dx, hist.n)
    hist.n = n
    if status == STATUS_DOMAIN:
        raise DomainError("right-hand side undefined", float(hist.t[n - 1]))
    if status == STATUS_FULL:
        raise RuntimeError("history capacity exhausted")
    exit_info = TimeOut(float(t_max))
    if status == STATUS_EXIT:
        lo, hi = float(hist.t[n - 2]), float(hist.t[n - 1])
        while hi - lo > 1e-9:
            mid = 0.5 * (lo + hi)
            x = hist.at(mid)
            if eval_bool(domain, {v: float(x[i]) for v, i in index.items()}):
                lo = mid
            else:
                hi = mid
        hist.truncate(hi)
        exit_info = DomainExit(hi)
    seg = DenseSegment(names[:nstate], hist.t[start:hist.n].copy(), hist.x[start:hist.n, :nstate].copy(),
                       hist.dx[start:hist.n, :nstate].copy())
    return seg, exit_info


# -------------------------------------------------------------------- trace


@dataclass
class Trace:
    """Sampled flow plus event log."""

    names: List[str]
    t: np.ndarray
    values: np.ndarray
    events: List[Event] = field(default_factory=list)
    flows: List[tuple] = field(default_factory=list)

    def column(self, name):
        return self.values[:, self.names.index(name)]

    def value(self, name, t):
        """Value of ``name`` at time ``t`` (nearest sample at or before t)."""
        k = int(np.searchsorted(self.t, t + 1e-12, side="right")) - 1
        return float(self.values[max(k, 0), self.names.index(name)])

    def comm_events(self):
        return [e for e in self.events if e.kind == "comm"]

    def to_csv(self, fh=None):
        out = fh or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t"] + list(self.names))
        for k in range(len(self.t)):
            w.writerow(["%.10g" % self.t[k]] + ["%.10g" % v for v in self.values[k]])
        return out.getvalue() if fh is None else None

    def events_csv(self, fh=None):
        out = fh or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t", "label"])
        for e in self.events:
            w.writerow(["%.10g" % e.time, e.label])
        return out.getvalue() if fh is None else None


def sample_grid(T: float, dt: float, t0: float = 0.0) -> np.ndarray:
    n = int(round((T - t0) / dt))
    ts = t0 + dt * np.arange(n + 1)
    ts[-1] = T
    return ts


def trace_from_state(machine: Machine, st, T: float, dt: float) -> Trace:
    ts = sample_grid(T, dt, machine.init.now)
    cols, names = [], []
    for c in st.comps:
        if c.hist.nv == 0:
            continue
        cols.append(c.hist.sample(ts))
        names += list(c.hist.names)
    values = np.hstack(cols) if cols else np.zeros((len(ts), 0))
    order = np.argsort(names, kind="stable")
    names = [names[k] for k in order]
    return Trace(names, ts, values[:, order], list(st.events), list(st.flows))


def run_reference(p, init: Optional[ProcState] = None, T: float = 10.0, seed: int = 0,
                  dt_ref: Optional[float] = None, h: Optional[float] = None) -> Trace:
    """Execute a source process under the dense semantics up to time T."""
    dt = dt_ref or default_dt(h)
    m = Machine(p, "source", dt=dt, init=init)
    st = m.run(T, RandomChooser(seed))
    return trace_from_state(m, st, T, dt)
