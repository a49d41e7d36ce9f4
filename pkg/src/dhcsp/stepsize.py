"""Validated Euler simulation and the step-size search for delay equations."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import ast as A
from .exprs import DomainError, compile_rhs, evaluate
from .interval import NoConvergence, SlopeKernel, SlopeProblem, min_error_slope

DEFAULT_SIGMA = 1e-9
DEFAULT_MAX_HALVINGS = 40
DEFAULT_MAX_STEPS = 10**6  # longest validated run tried before giving up


class MaxHalvings(RuntimeError):
    def __init__(self, h, step=None, time=None, why=""):
        self.h = h
        self.step = step
        self.time = time
        super().__init__("no valid step size down to h=%g (last failure at step %s, t=%s)%s"
                         % (h, step, time, "; " + why if why else ""))


def _budget(h, T_d, max_steps, last):
    if T_d / h > max_steps:
        raise MaxHalvings(2 * h, last, None, "a smaller step needs more than %d Euler steps" % max_steps)


@dataclass
class StepConfig:
    eps_bar: float
    T_d: float
    sigma: float = DEFAULT_SIGMA
    max_halvings: int = DEFAULT_MAX_HALVINGS

    def __post_init__(self):
        if not self.eps_bar > 0:
            raise ValueError("eps_bar must be positive")
        if not self.T_d > 0:
            raise ValueError("T_d must be positive")


@dataclass
class ScheduleSegment:
    """One stretch of the schedule; ``index`` None means the state is held."""

    index: Optional[int]
    t0: float
    t1: float
    params: Dict[str, float] = field(default_factory=dict)


@dataclass
class SimLists:
    """Euler states with their local error bounds.

    Entry 0 stands for the whole constant pre-history (time -h), entry 1 is
    time 0.  ``e[k]`` and ``g_lo[k]``/``g_hi[k]`` belong to the step k -> k+1,
    so those lists are one shorter than ``t``; the pre-history step has
    slope exactly zero.
    """

    t: List[float]
    y: List[np.ndarray]
    d: List[float]
    e: List[float]
    m: int
    h: float
    g_lo: List[np.ndarray] = field(default_factory=list)
    g_hi: List[np.ndarray] = field(default_factory=list)
    names: tuple = ()
    fail_step: Optional[int] = None

    @classmethod
    def initial(cls, x0, h, m, d0=0.0, names=()):
        x0 = np.atleast_1d(np.asarray(x0, float)).copy()
        z = np.zeros_like(x0)
        return cls([-h, 0.0], [x0, x0.copy()], [float(d0), float(d0)], [0.0], m, h, [z], [z.copy()],
                   tuple(names))

    def __len__(self):
        return len(self.t)

    @property
    def t_end(self):
        return self.t[-1]

    def arrays(self):
        return np.asarray(self.t), np.vstack(self.y), np.asarray(self.d)

    def to_csv(self, fh=None):
        out = fh or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        names = self.names or tuple("y%d" % i for i in range(len(self.y[0])))
        bound = "d" if "d" not in names else "d_bound"
        w.writerow(["t"] + list(names) + [bound])
        for k in range(len(self.t)):
            w.writerow(["%.10g" % self.t[k]] + ["%.12g" % v for v in self.y[k]] + ["%.12g" % self.d[k]])
        return out.getvalue() if fh is None else None


# ------------------------------------------------------------------ pieces


def euler_step(y_n, y_nm, f: A.DdeSpec, h: float, params: Optional[dict] = None):
    """y_n + h * f(y_n, y_{n-m})."""
    if not h > 0:
        raise ValueError("h must be positive")
    y_n = np.atleast_1d(np.asarray(y_n, float))
    y_nm = np.atleast_1d(np.asarray(y_nm, float))
    env = dict(params or {})
    env.update({v: float(y_n[i]) for i, v in enumerate(f.vars)})
    past = {v: float(y_nm[i]) for i, v in enumerate(f.vars)}
    slope = np.array([evaluate(e, env, lambda name, _d: past[name]) for e in f.rhs])
    return y_n + h * slope


def hull_width(y_n, d_n, y_n1, d_n1) -> float:
    """Diameter (max over dimensions) of the hull of two error boxes."""
    y_n = np.atleast_1d(np.asarray(y_n, float))
    y_n1 = np.atleast_1d(np.asarray(y_n1, float))
    hi = np.maximum(y_n + d_n, y_n1 + d_n1)
    lo = np.minimum(y_n - d_n, y_n1 - d_n1)
    return float(np.max(hi - lo))


def delay_offset(r: float, h: float) -> int:
    m = r / h
    mi = int(round(m))
    if mi < 1 or abs(m - mi) > 1e-9 * max(1.0, m):
        raise ValueError("delay %g is not a positive multiple of the step %g" % (r, h))
    return mi


class _Dynamics:
    """Compiled point and interval versions of one right-hand side."""

    _cache: Dict[tuple, "_Dynamics"] = {}

    def __init__(self, f: A.DdeSpec, params):
        self.f = f
        self.kernel = SlopeKernel(f, params)
        idx = self.kernel.index
        self.nx = len(idx)
        self.rhs = compile_rhs({i: e for i, e in enumerate(f.rhs)}, self.nx, idx)
        self.x = np.zeros(self.nx)
        pv = [params[p] for p in sorted(params)]
        self.x[len(f.vars):] = pv
        self.xr = np.zeros(self.nx)
        self.out = np.zeros(self.nx)

    @classmethod
    def get(cls, f, params=None):
        params = dict(params or {})
        key = (f, tuple(sorted(params.items())))
        dyn = cls._cache.get(key)
        if dyn is None:
            dyn = cls._cache[key] = cls(f, params)
        return dyn

    def slope(self, y, yr):
        n = len(self.f.vars)
        self.x[:n] = y
        self.xr[:n] = yr
        self.rhs(self.x, self.xr, self.out)
        s = self.out[:n].copy()
        if not np.all(np.isfinite(s)):
            raise DomainError("right-hand side undefined at an Euler point")
        return s


# -------------------------------------------------------------- algorithms


def check_stepsize(f: Optional[A.DdeSpec], r: float, h: float, eps_bar: float, span, lists: SimLists,
                   sigma: float = DEFAULT_SIGMA, params: Optional[dict] = None):
    """Extend ``lists`` over ``span`` with step h; (valid, lists).

    ``f`` None is a hold stretch: the state and its error bound stay put.
    The lists are extended in place; on failure ``lists.fail_step`` is set
    and the failing step is not appended.
    """
    _T1, T2 = span
    m = lists.m
    dyn = _Dynamics.get(f, params) if f is not None else None
    n = len(lists.t) - 1
    while lists.t[n] < T2 - 1e-9 * h:
        t1 = (n) * h  # entry k sits at time (k-1)*h
        y_n, d_n = lists.y[n], lists.d[n]
        if dyn is None:
            y1, d1, e_n = y_n.copy(), d_n, 0.0
            glo = ghi = np.zeros_like(y_n)
        else:
            j = max(n - m, 0)
            y_nm = lists.y[j]
            try:
                s = dyn.slope(y_n, y_nm)
                y1 = y_n + h * s
                glo, ghi = dyn.kernel.point(y_n, y_nm)
                sp = SlopeProblem(dyn.kernel, y_n, y_nm, y_nm, d_n, lists.d[j], lists.e[j], h,
                                  sigma=sigma, g_box=(lists.g_lo[j], lists.g_hi[j]))
                e_n = min_error_slope(sp)
            except (NoConvergence, DomainError):
                lists.fail_step = n
                return False, lists
            d1 = d_n + h * e_n
        if hull_width(y_n, d_n, y1, d1) > eps_bar:
            lists.fail_step = n
            return False, lists
        lists.t.append(t1)
        lists.y.append(y1)
        lists.d.append(d1)
        lists.e.append(e_n)
        lists.g_lo.append(glo)
        lists.g_hi.append(ghi)
        n += 1
    return True, lists


def _start_h(r, h0):
    return r if r else h0


def _m_for(r, h):
    return delay_offset(r, h) if r else 1


def com_stepsize_one(f: A.DdeSpec, x0, r: float, eps_bar: float, T_d: float, sigma: float = DEFAULT_SIGMA,
                     max_halvings: int = DEFAULT_MAX_HALVINGS, d0: float = 0.0, params=None,
                     h_start: Optional[float] = None, h0: float = 0.1, return_lists: bool = False,
                     max_steps: int = DEFAULT_MAX_STEPS):
    """Largest h in {r / 2^k} whose validated run stays within eps_bar on [0, T_d]."""
    h = h_start or _start_h(r, h0)
    base = _start_h(r, h0)
    last = None
    while True:
        _budget(h, T_d, max_steps, last)
        lists = SimLists.initial(x0, h, _m_for(r, h), d0, names=tuple(f.vars))
        ok, lists = check_stepsize(f, r, h, eps_bar, (0.0, T_d), lists, sigma, params)
        if ok:
            return (h, lists) if return_lists else h
        last = lists.fail_step
        if h <= base / 2 ** max_halvings * (1 + 1e-12):
            raise MaxHalvings(h, last, (last - 1) * h if last is not None else None)
        h = h / 2


def com_stepsize_multi(fs: Sequence[Optional[A.DdeSpec]], schedule: Sequence[ScheduleSegment], x0, r: float,
                       eps_bar: float, T_d: float, sigma: float = DEFAULT_SIGMA,
                       max_halvings: int = DEFAULT_MAX_HALVINGS, d0: float = 0.0, h0: float = 0.1,
                       return_lists: bool = False, max_steps: int = DEFAULT_MAX_STEPS):
    """Common step size for a schedule of delay equations sharing one delay r.

    Every failure halves h and restarts the whole schedule from time 0.
    """
    check_schedule(schedule, T_d)
    base = _start_h(r, h0)
    h = base
    first = schedule[0]
    if first.index is None:
        raise ValueError("the schedule must start with a flow")
    names = tuple(fs[first.index].vars)
    while True:
        _budget(h, T_d, max_steps, None)
        h, lists = com_stepsize_one(fs[first.index], x0, r, eps_bar, first.t1, sigma,
                                    max_halvings, d0, first.params, h_start=h, h0=h0, return_lists=True,
                                    max_steps=max_steps)
        ok = True
        for seg in schedule[1:]:
            f = fs[seg.index] if seg.index is not None else None
            ok, lists = check_stepsize(f, r, h, eps_bar, (seg.t0, seg.t1), lists, sigma, seg.params)
            if not ok:
                break
        if ok:
            lists.names = names
            return (h, lists) if return_lists else h
        if h <= base / 2 ** max_halvings * (1 + 1e-12):
            raise MaxHalvings(h, lists.fail_step)
        h = h / 2


def check_schedule(schedule: Sequence[ScheduleSegment], T_d: float, tol: float = 1e-9):
    if not schedule:
        raise ValueError("empty schedule")
    if abs(schedule[0].t0) > tol:
        raise ValueError("schedule must start at 0")
    for a, b in zip(schedule, schedule[1:]):
        if abs(a.t1 - b.t0) > tol:
            raise ValueError("schedule segments must be contiguous (%g vs %g)" % (a.t1, b.t0))
    for s in schedule:
        if s.t1 < s.t0 - tol:
            raise ValueError("segment with negative length")
    if abs(schedule[-1].t1 - T_d) > tol:
        raise ValueError("schedule must end at T_d=%g" % T_d)


# ---------------------------------------------------------------- process


@dataclass
class FlowTask:
    """The flows of one parallel component, ready for the multi-DDE search."""

    comp: int
    fs: List[A.DdeSpec]
    schedule: List[ScheduleSegment]
    x0: np.ndarray
    r: float


def flow_tasks(trace, T: float) -> List[FlowTask]:
    """Group the reference run's flows per component into schedules on [0, T]."""
    by_comp: Dict[int, list] = {}
    for comp, node, t0, t1, vals in trace.flows:
        by_comp.setdefault(comp, []).append((node, t0, t1, vals))
    tasks = []
    for comp in sorted(by_comp):
        flows = sorted(by_comp[comp], key=lambda x: x[1])
        fs: List[A.DdeSpec] = []
        schedule: List[ScheduleSegment] = []
        specs = {f[0].spec for f in flows}
        svars = {v for s in specs for v in s.vars}
        if any(set(s.vars) != set(flows[0][0].spec.vars) for s in specs):
            raise ValueError("component %d: flows over different variables" % comp)
        delays = {s.delay for s in specs if s.delay}
        if len(delays) > 1:
            raise ValueError("component %d: flows with different delays %s" % (comp, sorted(delays)))
        r = delays.pop() if delays else 0.0
        first = flows[0]
        x0 = np.array([trace.value(v, first[1]) for v in first[0].spec.vars])
        t = 0.0
        if first[1] > 1e-12:
            raise ValueError("component %d: first flow starts at t=%g, expected 0" % (comp, first[1]))
        for node, t0, t1, vals in flows:
            if t0 > t + 1e-9:
                schedule.append(ScheduleSegment(None, t, t0))
            if node.spec not in fs:
                fs.append(node.spec)
            read = set().union(*(A.expr_vars(e) for e in node.spec.rhs)) - svars
            params = {v: float(vals[v]) for v in sorted(read)}
            schedule.append(ScheduleSegment(fs.index(node.spec), max(t0, t), t1, params))
            t = max(t, t1)
        if t < T - 1e-9:
            schedule.append(ScheduleSegment(None, t, T))
        schedule = [s for s in schedule if s.t1 - s.t0 > 1e-12 or s is schedule[0]]
        tasks.append(FlowTask(comp, fs, schedule, x0, r))
    return tasks


@dataclass
class StepsizeReport:
    h: float
    eps_bar: float
    tasks: List[FlowTask]
    lists: List[SimLists]


def stepsize_for_trace(trace, eps_bar: float, T: float, sigma: float = DEFAULT_SIGMA,
                       max_halvings: int = DEFAULT_MAX_HALVINGS, h0: float = 0.1,
                       max_steps: int = DEFAULT_MAX_STEPS) -> StepsizeReport:
    """Common h for all components, then their validated runs at that h."""
    tasks = flow_tasks(trace, T)
    if not tasks:
        return StepsizeReport(h0, eps_bar, [], [])
    h = math.inf
    for tk in tasks:
        h = min(h, com_stepsize_multi(tk.fs, tk.schedule, tk.x0, tk.r, eps_bar, T, sigma, max_halvings,
                                              h0=h0, max_steps=max_steps))
    lists = []
    for tk in tasks:
        m = _m_for(tk.r, h)
        sl = SimLists.initial(tk.x0, h, m, names=tuple(tk.fs[0].vars))
        for seg in tk.schedule:
            f = tk.fs[seg.index] if seg.index is not None else None
            ok, sl = check_stepsize(f, tk.r, h, eps_bar, (seg.t0, seg.t1), sl, sigma, seg.params)
            if not ok:  # only possible when another component forced a smaller h
                raise MaxHalvings(h, sl.fail_step)
        lists.append(sl)
    return StepsizeReport(h, eps_bar, tasks, lists)


def tube_violations(lists: SimLists, trace, tol: float = 1e-12):
    """Sampled reference points outside the hull of consecutive error boxes."""
    ts, ys, ds = lists.arrays()
    cols = np.column_stack([trace.column(v) for v in lists.names])
    bad = []
    for k in range(1, len(ts) - 1):
        a, b = ts[k], ts[k + 1]
        sel = (trace.t >= a) & (trace.t <= b)
        if not np.any(sel):
            continue
        lo = np.minimum(ys[k] - ds[k], ys[k + 1] - ds[k + 1]) - tol
        hi = np.maximum(ys[k] + ds[k], ys[k + 1] + ds[k + 1]) + tol
        x = cols[sel]
        out = np.any((x < lo) | (x > hi), axis=1)
        for t in trace.t[sel][out]:
            bad.append((float(t), k))
    return bad
