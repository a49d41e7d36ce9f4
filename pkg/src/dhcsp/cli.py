"""Command-line driver.

Exit codes: 0 success, 1 a stage rejected (diagnostics, bisimulation
failure), 2 bad input (usage, config, parse errors), 3 numerical failure
(no valid step size, state budget exhausted, deadlock).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import ast as A
from .bisim import check_approx_bisim, run_discrete
from .codegen import EmitConfig, UnsupportedNode, emit_module
from .config import ConfigError, RunConfig, load_config
from .discretize import discretize
from .engine import DeadlockDetected, StateBudgetExceeded
from .parser import ParseError, parse
from .printer import pretty
from .reference import default_dt, run_reference
from .stepsize import MaxHalvings, stepsize_for_trace
from .validate import validate

OK, REJECTED, BAD_INPUT, NUMERIC = 0, 1, 2, 3


class Stop(Exception):
    def __init__(self, code, msg=""):
        super().__init__(msg)
        self.code = code


def _say(msg, err=False):
    print(msg, file=sys.stderr if err else sys.stdout)


def load_source(cfg: RunConfig, discrete=False):
    if not cfg.source:
        raise Stop(BAD_INPUT, "no source file given")
    try:
        with open(cfg.source) as fh:
            text = fh.read()
    except OSError as exc:
        raise Stop(BAD_INPUT, "cannot read %s: %s" % (cfg.source, exc.strerror))
    try:
        p = parse(text)
    except ParseError as exc:
        raise Stop(BAD_INPUT, "%s:%s" % (cfg.source, exc))
    diags = validate(p, discrete=discrete)
    if diags:
        raise Stop(REJECTED, "\n".join("%s:%s" % (cfg.source, d) for d in diags))
    return p


def _out(cfg, name):
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def find_stepsize(cfg: RunConfig, p):
    if not A.dde_nodes(p):
        raise Stop(BAD_INPUT, "the source has no delay or ordinary differential equation")
    trace = run_reference(p, T=cfg.time_bound, seed=cfg.seed, dt_ref=cfg.dt_ref)
    return stepsize_for_trace(trace, cfg.eps_bar, cfg.time_bound, cfg.sigma)


def step_of(cfg, p):
    if cfg.h is not None:
        return cfg.h
    if not A.dde_nodes(p):
        return cfg.time_bound
    return find_stepsize(cfg, p).h


# ---------------------------------------------------------------- commands


def cmd_check(cfg: RunConfig, args) -> int:
    p = load_source(cfg, discrete=args.discrete)
    comps = A.components(p)
    _say("%s: ok (%d component%s, %d channel%s, %d continuous statement%s)" % (
        cfg.source, len(comps), "" if len(comps) == 1 else "s", len(A.channels(p)),
        "" if len(A.channels(p)) == 1 else "s", len(A.dde_nodes(p)), "" if len(A.dde_nodes(p)) == 1 else "s"))
    return OK


def cmd_stepsize(cfg: RunConfig, args) -> int:
    p = load_source(cfg)
    t0 = time.perf_counter()
    rep = find_stepsize(cfg, p)
    _say("h = %g" % rep.h)
    _say("eps_dde = %g" % rep.eps_bar)
    _say("seconds = %.2f" % (time.perf_counter() - t0))
    for k, sl in enumerate(rep.lists):
        path = _out(cfg, "envelope_%d.csv" % rep.tasks[k].comp)
        with open(path, "w", newline="") as fh:
            sl.to_csv(fh)
        _say("wrote %s" % path)
    return OK


def cmd_discretize(cfg: RunConfig, args) -> int:
    p = load_source(cfg)
    h = step_of(cfg, p)
    d = discretize(p, h, cfg.eps, cfg.time_bound)
    text = "# h = %s, eps = %s, T = %s\n%s\n" % (h, cfg.eps, cfg.time_bound, pretty(d))
    if args.out is not None:
        path = _out(cfg, "%s.discrete.dhcsp" % _name(p))
        with open(path, "w") as fh:
            fh.write(text)
        _say("wrote %s" % path)
    else:
        sys.stdout.write(text)
    return OK


def _name(p):
    return p.name if isinstance(p, A.Parallel) else "S"


def cmd_simulate(cfg: RunConfig, args) -> int:
    p = load_source(cfg)
    h = step_of(cfg, p)
    dt = cfg.dt_ref or default_dt(h)
    ref = run_reference(p, T=cfg.time_bound, seed=cfg.seed, dt_ref=dt)
    dis = run_discrete(discretize(p, h, cfg.eps, cfg.time_bound), T=cfg.time_bound, seed=cfg.seed, sample_dt=dt)
    names = [v for v in ref.names if v in dis.names]
    path = _out(cfg, "simulate.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [c for v in names for c in (v + "_ref", v + "_dis", v + "_dis_lo", v + "_dis_hi")])
        for k, t in enumerate(ref.t):
            row = ["%.10g" % t]
            for v in names:
                a = ref.values[k, ref.names.index(v)]
                b = dis.value(v, t)
                row += ["%.10g" % x for x in (a, b, b - cfg.eps, b + cfg.eps)]
            w.writerow(row)
    for tag, tr in (("reference", ref), ("discrete", dis)):
        with open(_out(cfg, "%s_events.csv" % tag), "w", newline="") as fh:
            tr.events_csv(fh)
    dev = max((float(np.max(np.abs(ref.column(v) - np.array([dis.value(v, t) for t in ref.t])))) for v in names),
              default=0.0)
    _say("h = %g" % h)
    _say("max deviation = %.6g" % dev)
    _say("wrote %s" % path)
    return OK


def cmd_bisim(cfg: RunConfig, args) -> int:
    p = load_source(cfg)
    h = step_of(cfg, p)
    d = discretize(p, h, cfg.eps, cfg.time_bound)
    res = check_approx_bisim(p, d, h, cfg.eps, cfg.time_bound, dt_ref=cfg.dt_ref, budget=cfg.state_budget)
    _report_bisim(cfg, res, args.dump_ts)
    return OK if res.accepted else REJECTED


def _report_bisim(cfg, res, dump):
    _say("h = %g" % res.h)
    _say("verdict = %s" % ("accepted" if res.accepted else "rejected"))
    _say("max deviation = %.6g" % res.max_deviation)
    _say("states = %d / %d" % (len(res.ts1), len(res.ts2)))
    for row in res.counterexample:
        _say("counterexample t=%g: %s" % (row["t"], row["label"]))
    if res.counterexample:
        with open(_out(cfg, "counterexample.csv"), "w", newline="") as fh:
            res.counterexample_csv(fh)
    if dump:
        res.ts1.dump(cfg.out, "source")
        res.ts2.dump(cfg.out, "discrete")


def _emit(cfg, d, h, r):
    unit = emit_module(d, EmitConfig(h=h, T=cfg.time_bound, eps=cfg.eps, time_unit=cfg.time_unit,
                                     seed=cfg.seed, r=r))
    return unit.write(cfg.out)


def _delay(p):
    ds = {n.spec.delay for n in A.dde_nodes(p) if n.spec.delay}
    return max(ds) if ds else 0.0


def cmd_emit(cfg: RunConfig, args) -> int:
    if args.emit_discrete:
        d = load_source(cfg, discrete=True)
        if cfg.h is None:
            raise Stop(BAD_INPUT, "--emit-discrete needs --h")
        h, r = cfg.h, 0.0
    else:
        p = load_source(cfg)
        h = step_of(cfg, p)
        d, r = discretize(p, h, cfg.eps, cfg.time_bound), _delay(p)
    for path in _emit(cfg, d, h, r):
        _say("wrote %s" % path)
    return OK


def cmd_pipeline(cfg: RunConfig, args) -> int:
    p = load_source(cfg)
    t0 = time.perf_counter()
    h = step_of(cfg, p)
    d = discretize(p, h, cfg.eps, cfg.time_bound)
    res = check_approx_bisim(p, d, h, cfg.eps, cfg.time_bound, dt_ref=cfg.dt_ref, budget=cfg.state_budget)
    _report_bisim(cfg, res, args.dump_ts)
    files = _emit(cfg, d, h, _delay(p)) if res.accepted else []
    path = _out(cfg, "report.txt")
    with open(path, "w") as fh:
        fh.write("system = %s\n" % _name(p))
        fh.write("eps = %s\n" % cfg.eps)
        fh.write("eps_dde = %s\n" % cfg.eps_bar)
        fh.write("time_bound = %s\n" % cfg.time_bound)
        fh.write("h = %s\n" % h)
        fh.write("verdict = %s\n" % ("accepted" if res.accepted else "rejected"))
        fh.write("max_deviation = %.6g\n" % res.max_deviation)
        for f in files:
            fh.write("file = %s\n" % os.path.basename(f))
    for f in files:
        _say("wrote %s" % f)
    _say("wrote %s (%.1f s)" % (path, time.perf_counter() - t0))
    return OK if res.accepted else REJECTED


COMMANDS = {
    "check": (cmd_check, "parse and validate a model"),
    "stepsize": (cmd_stepsize, "compute the validated Euler step size"),
    "discretize": (cmd_discretize, "print the discretized model"),
    "simulate": (cmd_simulate, "write reference and discrete traces as CSV"),
    "bisim": (cmd_bisim, "check approximate bisimilarity of a model and its discretization"),
    "emit": (cmd_emit, "write SystemC code"),
    "pipeline": (cmd_pipeline, "step size, discretization, bisimulation check and code emission"),
}


def build_parser():
    ap = argparse.ArgumentParser(prog="dhcsp", description="dHCSP discretization and SystemC code generation.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("input", help="a .dhcsp model or a key=value configuration file (.cfg)")
        sp.add_argument("--config", help="configuration file; flags override its values")
        sp.add_argument("--eps", type=float, help="global precision")
        sp.add_argument("--eps-dde", type=float, help="precision for the step-size search (default eps/2)")
        sp.add_argument("--time-bound", type=float, help="time bound T in seconds")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--dt-ref", type=float, help="reference integration step")
        sp.add_argument("--sigma", type=float, help="step-size search tolerance")
        sp.add_argument("--time-unit", choices=sorted(["SC_FS", "SC_PS", "SC_NS", "SC_US", "SC_MS", "SC_SEC"]))
        sp.add_argument("--state-budget", type=int, help="transition-system size limit")
        sp.add_argument("--h", type=float, help="use this step instead of searching for one")
        sp.add_argument("--dump-ts", action="store_true", help="write both transition systems as CSV")
        sp.add_argument("--emit-discrete", action="store_true", help="the input is already discrete")
        sp.add_argument("--discrete", action="store_true", help="validate as a discrete model")
    return ap


def config_from_args(args) -> RunConfig:
    cfg_path = args.config
    source = args.input
    if source.endswith((".cfg", ".conf")):
        cfg_path, source = source, None
    return load_config(cfg_path, source=source, eps=args.eps, eps_dde=args.eps_dde, time_bound=args.time_bound,
                       seed=args.seed, out=args.out, dt_ref=args.dt_ref, sigma=args.sigma,
                       time_unit=args.time_unit, state_budget=args.state_budget, h=args.h)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command][0](cfg, args)
    except Stop as exc:
        if str(exc):
            _say(str(exc), err=True)
        return exc.code
    except (ConfigError, OSError, UnsupportedNode) as exc:
        _say("error: %s" % exc, err=True)
        return BAD_INPUT
    except (MaxHalvings, StateBudgetExceeded, DeadlockDetected) as exc:
        _say("error: %s" % exc, err=True)
        return NUMERIC


if __name__ == "__main__":
    sys.exit(main())
