"""Discrete interpreter, transition systems, and approximate bisimulation."""

from __future__ import annotations

import csv
import io
import math
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import ast as A
from .engine import (TICKS, DeadlockDetected, Machine, PrefixChooser, ProcState, RandomChooser,
                     StateBudgetExceeded, to_sec, to_ticks)
from .reference import Trace, default_dt, sample_grid, trace_from_state

DEFAULT_BUDGET = 10**6
TICK = "✓"  # termination action


def run_discrete(p, init: Optional[ProcState] = None, T: float = 10.0, seed: int = 0,
                 sample_dt: float = 1e-3) -> Trace:
    """Delta-cycle execution of a discrete process, sampled every ``sample_dt``."""
    m = Machine(p, "discrete", init=init)
    st = m.run(T, RandomChooser(seed))
    return trace_from_state(m, st, T, sample_dt)


# --------------------------------------------------------- transition system


@dataclass
class Edge:
    kind: str  # act | dur | tau (only out of the raw initial node)
    dst: int
    label: str = ""
    value: float = 0.0
    dur: float = 0.0
    flow_t: Optional[np.ndarray] = None  # sample times relative to the source node
    flow_x: Optional[np.ndarray] = None  # rows aligned with flow_t, columns = ts.names


@dataclass
class TransitionSystem:
    names: List[str]
    now: List[float] = field(default_factory=list)
    vals: List[np.ndarray] = field(default_factory=list)
    edges: List[List[Edge]] = field(default_factory=list)
    initial: List[int] = field(default_factory=list)
    horizon: List[bool] = field(default_factory=list)
    deadlock: List[bool] = field(default_factory=list)
    T: float = 0.0
    step: float = 0.0

    def add_node(self, now, vals, horizon):
        self.now.append(now)
        self.vals.append(vals)
        self.edges.append([])
        self.horizon.append(horizon)
        self.deadlock.append(False)
        return len(self.now) - 1

    def __len__(self):
        return len(self.now)

    @property
    def n_edges(self):
        return sum(len(es) for es in self.edges)

    def nodes_csv(self, fh=None):
        out = fh or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["id", "now", "initial", "horizon"] + list(self.names))
        init = set(self.initial)
        for i in range(len(self)):
            w.writerow([i, "%.10g" % self.now[i], int(i in init), int(self.horizon[i])]
                       + ["%.10g" % v for v in self.vals[i]])
        return out.getvalue() if fh is None else None

    def edges_csv(self, fh=None):
        out = fh or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["src", "dst", "kind", "label", "value", "duration"])
        for i, es in enumerate(self.edges):
            for e in es:
                w.writerow([i, e.dst, e.kind, e.label, "%.10g" % e.value, "%.10g" % e.dur])
        return out.getvalue() if fh is None else None

    def dump(self, directory, prefix="ts"):
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, prefix + "_nodes.csv"), "w", newline="") as fh:
            self.nodes_csv(fh)
        with open(os.path.join(directory, prefix + "_edges.csv"), "w", newline="") as fh:
            self.edges_csv(fh)


def _variants(base, machine, run):
    """Apply ``run(state, chooser)`` to copies of base for every internal-choice resolution."""
    out = []
    stack = [()]
    while stack:
        prefix = stack.pop()
        ch = PrefixChooser(prefix)
        st = base.clone()
        run(st, ch)
        out.append(st)
        for k in range(len(prefix), len(ch.made)):
            for c in range(1, ch.arity[k]):
                stack.append(tuple(ch.made[:k]) + (c,))
    return out


def default_mode(p):
    return "source" if A.dde_nodes(p) else "discrete"


def build_ts(p, init: Optional[ProcState] = None, step: float = 0.1, T: float = 1.0, mode: Optional[str] = None,
             dt_ref: Optional[float] = None, budget: int = DEFAULT_BUDGET) -> TransitionSystem:
    """Reachable tau-compressed transition system up to time T.

    Observable moves are communications (labelled by channel, carrying the
    value), termination, and time steps of at most ``step``.  Internal
    choices branch.  Flows are sampled every ``dt_ref`` along time steps.
    """
    mode = mode or default_mode(p)
    dt = dt_ref or default_dt(step)
    m = Machine(p, mode, dt=dt, init=init)
    names = list(m.user_vars)
    ts = TransitionSystem(names, T=T, step=step)
    limit_T = to_ticks(T)
    stepk = to_ticks(step)
    index: Dict[tuple, int] = {}
    work = deque()

    def valuation(st):
        return np.array([st.vals[v] for v in names], dtype=float)

    def intern(st):
        key = m.key(st)
        nid = index.get(key)
        if nid is None:
            if len(ts) >= budget:
                raise StateBudgetExceeded("more than %d nodes" % budget)
            nid = ts.add_node(to_sec(st.now), valuation(st), st.now >= limit_T)
            index[key] = nid
            work.append((nid, st))
        return nid

    raw = m.initial_state()
    settled = _variants(raw, m, lambda s, ch: m.settle(s, ch))
    if len(settled) == 1 and settled[0].taus == 0 and m.key(settled[0]) == m.key(raw):
        ts.initial.append(intern(settled[0]))
    else:
        # the initial statement runs internal steps first: keep the raw state as
        # the single initial node, with one tau edge per resolution
        root = ts.add_node(to_sec(raw.now), valuation(raw), False)
        ts.initial.append(root)
        for st in settled:
            ts.edges[root].append(Edge("tau", intern(st), "tau"))

    while work:
        nid, st = work.popleft()
        if ts.horizon[nid]:
            continue
        comms = m.enabled_comms(st)
        if comms:
            for c in comms:
                base = st.clone()
                value = m.fire(base, c)
                for s2 in _variants(base, m, lambda s, ch: m.settle(s, ch)):
                    ts.edges[nid].append(Edge("act", intern(s2), c[0], value))
            continue
        if m.terminated(st):
            ts.edges[nid].append(Edge("act", nid, TICK))
            continue
        base = st.clone()
        t0 = base.now
        try:
            d = m.advance(base, min(t0 + stepk, limit_T))
        except DeadlockDetected:
            ts.deadlock[nid] = True
            continue
        if d <= 0:
            continue
        grid = np.array([to_sec(t0), to_sec(base.now)])
        if mode == "source":
            grid = sample_grid(to_sec(base.now), dt, to_sec(t0))
        flow = _sample(base, names, grid)
        for s2 in _variants(base, m, lambda s, ch: m.settle(s, ch)):
            ts.edges[nid].append(Edge("dur", intern(s2), dur=d / TICKS, flow_t=grid - grid[0], flow_x=flow))
    return ts


def _sample(st, names, grid):
    cols = {}
    for c in st.comps:
        if c.hist.nv:
            x = c.hist.sample(grid)
            for k, v in enumerate(c.hist.names):
                cols[v] = x[:, k]
    return np.column_stack([cols[v] for v in names]) if names else np.zeros((len(grid), 0))


# ------------------------------------------------------------ bisimulation


def _shared(ts1, ts2):
    common = [v for v in ts1.names if v in set(ts2.names)]
    return common, [ts1.names.index(v) for v in common], [ts2.names.index(v) for v in common]


def flow_distance(e1: Edge, e2: Edge, i1, i2) -> float:
    """Largest distance of two time steps' flows over [0, max(t, t')] with clamping."""
    t1, t2 = e1.dur, e2.dur
    grid = np.union1d(e1.flow_t, e2.flow_t)
    grid = grid[grid <= max(t1, t2) + 1e-12]
    a = np.column_stack([np.interp(np.minimum(grid, t1), e1.flow_t, e1.flow_x[:, j]) for j in i1]) \
        if i1 else np.zeros((len(grid), 0))
    b = np.column_stack([np.interp(np.minimum(grid, t2), e2.flow_t, e2.flow_x[:, j]) for j in i2]) \
        if i2 else np.zeros((len(grid), 0))
    if a.shape[1] == 0:
        return 0.0
    return float(np.max(np.sqrt(np.sum((a - b) ** 2, axis=1))))


@dataclass
class BisimResult:
    accepted: bool
    relation: set
    max_deviation: float
    counterexample: List[dict] = field(default_factory=list)
    pairs_considered: int = 0
    h: float = 0.0
    eps: float = 0.0
    ts1: Optional[TransitionSystem] = None
    ts2: Optional[TransitionSystem] = None

    def counterexample_csv(self, fh=None):
        out = fh or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t", "label"])
        for row in self.counterexample:
            w.writerow(["%.10g" % row["t"], row["label"]])
        return out.getvalue() if fh is None else None


class _Game:
    """Obligations of every candidate pair, precomputed once."""

    def __init__(self, ts1, ts2, h, eps):
        self.ts = (ts1, ts2)
        self.h, self.eps = h, eps
        _, self.i1, self.i2 = _shared(ts1, ts2)
        self.flow_cache = {}

    def dist(self, a, b):
        x = self.ts[0].vals[a][self.i1] - self.ts[1].vals[b][self.i2]
        return float(np.sqrt(np.dot(x, x)))

    def close(self, a, b):
        return self.dist(a, b) <= self.eps

    def _flow_ok(self, e1, e2):
        key = (id(e1), id(e2))
        got = self.flow_cache.get(key)
        if got is None:
            got = self.flow_cache[key] = flow_distance(e1, e2, self.i1, self.i2)
        return got <= self.eps, got

    def _act_match(self, e, f):
        if e.label != f.label:
            return False
        return e.label == TICK or abs(e.value - f.value) <= self.eps

    def obligations(self, a, b):
        """List of (description, options); each option is a tuple of pairs, all of which must survive."""
        ts1, ts2 = self.ts
        if ts1.horizon[a] or ts2.horizon[b]:
            return []
        obs = []
        for side in (0, 1):
            x, y = (a, b) if side == 0 else (b, a)
            tx, ty = self.ts[side], self.ts[1 - side]

            def pair(p, q):
                return (p, q) if side == 0 else (q, p)
            for e in tx.edges[x]:
                opts = []
                if e.kind == "tau":
                    for pr in [pair(e.dst, y)] + [pair(e.dst, f.dst) for f in ty.edges[y] if f.kind == "tau"]:
                        if self.close(*pr):
                            opts.append((pr,))
                    desc = "tau"
                elif e.kind == "act":
                    for f in ty.edges[y]:
                        if f.kind == "act" and self._act_match(e, f):
                            pr = pair(e.dst, f.dst)
                            if self.close(*pr):
                                opts.append((pr,))
                    for g in ty.edges[y]:
                        if g.kind != "dur" or not 0 < g.dur <= self.h + 1e-12:
                            continue
                        mid = pair(x, g.dst)
                        if not self.close(*mid):
                            continue
                        for f in ty.edges[g.dst]:
                            if f.kind == "act" and self._act_match(e, f):
                                pr = pair(e.dst, f.dst)
                                if self.close(*pr):
                                    opts.append((mid, pr))
                    desc = _describe(e)
                else:
                    for f in ty.edges[y]:
                        if f.kind != "dur" or abs(e.dur - f.dur) > self.h + 1e-12:
                            continue
                        ok, _ = self._flow_ok(e, f) if side == 0 else self._flow_ok(f, e)
                        pr = pair(e.dst, f.dst)
                        if ok and self.close(*pr):
                            opts.append((pr,))
                    desc = _describe(e)
                obs.append(((side, tx.now[x], desc), opts))
        return obs


def max_bisim(ts1: TransitionSystem, ts2: TransitionSystem, h: float, eps: float) -> BisimResult:
    """Greatest (h, eps)-approximate bisimulation among pairs reachable from the initial ones."""
    game = _Game(ts1, ts2, h, eps)
    start = [(a, b) for a in ts1.initial for b in ts2.initial if game.close(a, b)]
    obl: Dict[tuple, list] = {}
    users: Dict[tuple, set] = {}
    queue = deque(start)
    while queue:
        p = queue.popleft()
        if p in obl:
            continue
        obl[p] = game.obligations(*p)
        for _, opts in obl[p]:
            for opt in opts:
                for q in opt:
                    users.setdefault(q, set()).add(p)
                    if q not in obl:
                        queue.append(q)
    R = set(obl)
    reason: Dict[tuple, tuple] = {}

    def failing(p):
        for desc, opts in obl[p]:
            if not any(all(q in R for q in opt) for opt in opts):
                return desc
        return None

    work = deque(R)
    while work:
        p = work.popleft()
        if p not in R:
            continue
        why = failing(p)
        if why is not None:
            R.discard(p)
            reason[p] = why
            for u in users.get(p, ()):
                if u in R:
                    work.append(u)
    acc1 = all(any((a, b) in R for b in ts2.initial) for a in ts1.initial)
    acc2 = all(any((a, b) in R for a in ts1.initial) for b in ts2.initial)
    accepted = bool(ts1.initial and ts2.initial and acc1 and acc2)
    res = BisimResult(accepted, R, 0.0, [], len(obl), h, eps, ts1, ts2)
    res.max_deviation = _deviation(game, R, obl, start)
    if not accepted:
        res.counterexample = _counterexample(game, R, obl, reason)
    return res


def _deviation(game, R, obl, start):
    """Largest state or flow distance along the witnesses of the surviving initial pairs."""
    seen = set()
    stack = [p for p in start if p in R]
    worst = 0.0
    while stack:
        p = stack.pop()
        if p in seen:
            continue
        seen.add(p)
        worst = max(worst, game.dist(*p))
        a, b = p
        for e in game.ts[0].edges[a]:
            if e.kind != "dur":
                continue
            for f in game.ts[1].edges[b]:
                if f.kind == "dur" and (e.dst, f.dst) in R and abs(e.dur - f.dur) <= game.h + 1e-12:
                    worst = max(worst, game._flow_ok(e, f)[1])
        for _, opts in obl[p]:
            for opt in opts:
                if all(q in R for q in opt):
                    stack.extend(opt)
                    break
    return worst


def _counterexample(game, R, obl, reason):
    ts1, ts2 = game.ts
    rows = []
    bad1 = [a for a in ts1.initial if not any((a, b) in R for b in ts2.initial)]
    bad2 = [b for b in ts2.initial if not any((a, b) in R for a in ts1.initial)]
    if bad1:
        a = bad1[0]
        cands = list(ts2.initial)
    else:
        b = bad2[0]
        cands = list(ts1.initial)
        a = None
    # pick the closest partner as the pair to explain
    if a is not None:
        b = min(cands, key=lambda q: game.dist(a, q))
    else:
        a = min(cands, key=lambda q: game.dist(q, b))
    p = (a, b)
    seen = set()
    while p not in seen:
        seen.add(p)
        d = game.dist(*p)
        t = ts1.now[p[0]]
        if d > game.eps:
            rows.append({"t": t, "label": "state distance %.6g > %g" % (d, game.eps), "pair": p})
            break
        why = reason.get(p)
        if why is None:
            break
        side, tt, desc = why
        rows.append({"t": tt, "label": "unmatched %s on side %d" % (desc, side + 1), "pair": p})
        nxt = None
        for dsc, opts in obl.get(p, []):
            if dsc == why:
                for opt in opts:
                    for q in opt:
                        if q not in R:
                            nxt = q
                            break
                    if nxt:
                        break
        if nxt is None:
            gap = _closest_gap(game, p, side, desc)
            if gap is not None:
                rows.append({"t": gap[0], "label": "state distance %.6g > %g" % (gap[1], game.eps),
                             "pair": gap[2]})
            break
        p = nxt
    return rows


def _describe(e):
    if e.kind == "tau":
        return "tau"
    if e.kind == "dur":
        return "delay %.6g" % e.dur
    return "%s%s" % (e.label, "" if e.label == TICK else ".%.6g" % e.value)


def _closest_gap(game, p, side, desc):
    """For an edge with no candidate partner: the nearest successor pair of the same kind."""
    x, y = p if side == 0 else (p[1], p[0])
    tx, ty = game.ts[side], game.ts[1 - side]
    best = None
    for e in tx.edges[x]:
        if _describe(e) != desc:
            continue
        for f in ty.edges[y]:
            if f.kind != e.kind or (e.kind == "act" and f.label != e.label):
                continue
            pr = (e.dst, f.dst) if side == 0 else (f.dst, e.dst)
            d = game.dist(*pr)
            if best is None or d < best[1]:
                best = (game.ts[0].now[pr[0]], d, pr)
    return best


def verify_relation(ts1, ts2, R, h, eps) -> List[Tuple[tuple, str]]:
    """Independent check of both transfer conditions for every pair of R.

    Recomputes distances and matches from the raw edges (no shared
    obligation tables); returns the violations found.
    """
    common = [v for v in ts1.names if v in ts2.names]
    j1 = [ts1.names.index(v) for v in common]
    j2 = [ts2.names.index(v) for v in common]

    def d(a, b):
        return math.sqrt(sum((ts1.vals[a][x] - ts2.vals[b][y]) ** 2 for x, y in zip(j1, j2)))

    def flows_close(e, f):
        # compare on a fine common grid, clamping each flow at its own end
        hi = max(e.dur, f.dur)
        n = max(len(e.flow_t), len(f.flow_t)) * 2
        worst = 0.0
        for s in np.linspace(0.0, hi, n):
            s1, s2 = min(s, e.dur), min(s, f.dur)
            acc = 0.0
            for x, y in zip(j1, j2):
                u = np.interp(s1, e.flow_t, e.flow_x[:, x])
                w = np.interp(s2, f.flow_t, f.flow_x[:, y])
                acc += (u - w) ** 2
            worst = max(worst, math.sqrt(acc))
        return worst <= eps + 1e-9

    def label_ok(e, f):
        return e.label == f.label and (e.label == TICK or abs(e.value - f.value) <= eps)

    def transfer(tx, ty, x, y, rel):
        for e in tx.edges[x]:
            if e.kind == "tau":
                ok = rel(e.dst, y) or any(f.kind == "tau" and rel(e.dst, f.dst) for f in ty.edges[y])
            elif e.kind == "act":
                ok = any(f.kind == "act" and label_ok(e, f) and rel(e.dst, f.dst) for f in ty.edges[y])
                if not ok:
                    ok = any(g.kind == "dur" and 0 < g.dur <= h + 1e-12 and rel(x, g.dst)
                             and any(f.kind == "act" and label_ok(e, f) and rel(e.dst, f.dst)
                                     for f in ty.edges[g.dst])
                             for g in ty.edges[y])
            else:
                ok = any(f.kind == "dur" and abs(e.dur - f.dur) <= h + 1e-12 and rel(e.dst, f.dst)
                         and flows_close(e, f) for f in ty.edges[y])
            if not ok:
                return "unmatched %s %s" % (e.kind, e.label or e.dur)
        return None

    bad = []
    for a, b in R:
        if d(a, b) > eps + 1e-12:
            bad.append(((a, b), "distance"))
            continue
        if ts1.horizon[a] or ts2.horizon[b]:
            continue
        why = transfer(ts1, ts2, a, b, lambda p, q: (p, q) in R)
        if why is None:
            why = transfer(ts2, ts1, b, a, lambda q, p: (p, q) in R)
        if why is not None:
            bad.append(((a, b), why))
    return bad


def check_approx_bisim(src, dis, h: float, eps: float, T: float, init: Optional[ProcState] = None,
                       init_dis: Optional[ProcState] = None, dt_ref: Optional[float] = None,
                       budget: int = DEFAULT_BUDGET, src_mode: Optional[str] = None,
                       dis_mode: Optional[str] = None) -> BisimResult:
    """Build both transition systems with time step h and decide S1 ~(h, eps) S2 on [0, T]."""
    ts1 = build_ts(src, init, h, T, mode=src_mode, dt_ref=dt_ref, budget=budget)
    ts2 = build_ts(dis, init_dis if init_dis is not None else init, h, T, mode=dis_mode, dt_ref=dt_ref,
                   budget=budget)
    if not _shared(ts1, ts2)[0] and (ts1.names or ts2.names):
        raise ValueError("the processes share no variables")
    return max_bisim(ts1, ts2, h, eps)
