"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run standalone with ``python3 tests/test_acceptance.py`` or under pytest.
"""
import math
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from dhcsp.bisim import check_approx_bisim, run_discrete, verify_relation  # noqa: E402
from dhcsp.discretize import discretize, estimate_robustness  # noqa: E402
from dhcsp.parser import parse  # noqa: E402
from dhcsp.reference import run_reference  # noqa: E402
from dhcsp.stepsize import stepsize_for_trace, tube_violations  # noqa: E402

from conftest import MODELS, WT  # noqa: E402

DT_REF = 1e-4
_cache = {}
LINES = []  # shown in the pytest terminal summary


def report(n, ok, detail):
    line = "criterion %d: %s  %s" % (n, "PASS" if ok else "FAIL", detail)
    LINES.append(line)
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()
    return ok


def watertank():
    if "p" not in _cache:
        with open(os.path.join(MODELS, "watertank.dhcsp")) as fh:
            _cache["src"] = fh.read()
        _cache["p"] = parse(_cache["src"])
    return _cache["p"]


def stepsize_run():
    """Reference trace plus the validated step size at the default eps_bar."""
    if "rep" not in _cache:
        p = watertank()
        t0 = time.perf_counter()
        tr = run_reference(p, T=WT["T"], dt_ref=DT_REF)
        rep = stepsize_for_trace(tr, WT["eps"] / 2, WT["T"])
        _cache.update(trace=tr, rep=rep, secs=time.perf_counter() - t0)
    return _cache["trace"], _cache["rep"], _cache["secs"]


# 1: step size in the expected lattice, in time

def criterion_1():
    _, rep, secs = stepsize_run()
    ok = any(math.isclose(rep.h, h) for h in (0.025, 0.0125)) and secs < 120.0
    return report(1, ok, "h = %g, %.1f s" % (rep.h, secs))


# 2: reference trajectory inside the Euler error tube

def criterion_2():
    tr, rep, _ = stepsize_run()
    bad = [v for sl in rep.lists for v in tube_violations(sl, tr)]
    ok = bool(rep.lists) and not bad
    return report(2, ok, "%d violations over %d samples" % (len(bad), len(tr.t)))


# 3: discretized trajectory within eps of the reference

def criterion_3():
    tr, rep, _ = stepsize_run()
    p, h = watertank(), rep.h
    dis = run_discrete(discretize(p, h, WT["eps"], WT["T"]), T=WT["T"], sample_dt=DT_REF)
    dev = float(np.max(np.abs(tr.column("d") - np.array([dis.value("d", t) for t in tr.t]))))
    return report(3, dev <= WT["eps"], "max |d_ref - d_dis| = %.4g at h = %g" % (dev, h))


# 4: robustness estimate

def criterion_4():
    r = estimate_robustness(watertank(), T=WT["T"], n_runs=20, dt_ref=DT_REF)
    ok = r.delta == 0.0 and 0.19 <= r.eps <= 0.24
    return report(4, ok, "delta = %g, eps = %.4g over %d runs" % (r.delta, r.eps, r.runs))


# 5: bisimulation verdicts on the case study

def criterion_5():
    p, h, eps, T = watertank(), 0.025, WT["eps"], WT["T"]
    good = check_approx_bisim(p, discretize(p, h, eps, T), h, eps, T, dt_ref=DT_REF)
    bumped = parse(_cache["src"].replace("d := %g;" % WT["d0"], "d := %g;" % (WT["d0"] + 0.5)))
    assert bumped != p
    bad = check_approx_bisim(p, discretize(bumped, h, eps, T), h, eps, T, dt_ref=DT_REF)
    cex_t = bad.counterexample[0]["t"] if bad.counterexample else None
    ok = good.accepted and not bad.accepted and cex_t == 0.0
    return report(5, ok, "nominal %s (dev %.4g), perturbed %s (counterexample at t = %s)" % (
        "accepted" if good.accepted else "rejected", good.max_deviation,
        "accepted" if bad.accepted else "rejected", cex_t))


# 6: golden listings

def criterion_6():
    import test_codegen as tc
    checks = [tc.test_golden_input, tc.test_golden_output, tc.test_golden_continuous,
              lambda: [tc.test_golden_choice(k) for k in (1, 2, 3)],
              lambda: [tc.test_golden_interrupt(k) for k in (1, 2, 3)]]
    names = ["input", "output", "continuous", "choice", "interrupt"]
    failed = _run(zip(names, checks))
    return report(6, not failed, "%d/5 listings match%s" % (5 - len(failed), _why(failed)))


# 7: property suites

def criterion_7():
    import test_bisim as tb
    import test_interval as ti
    import test_stepsize as ts
    import test_syntax as tx
    suites = [("round-trip", tx.test_round_trip_systems), ("enclosure", ti.test_enclosure),
              ("decay tube", ts.test_decay_tube_contains_exact_solution),
              ("reflexive", tb.test_reflexive), ("eps-monotone", tb.test_eps_monotone),
              ("d-monotone", ts.test_d_monotone_and_width_bounded)]
    failed = _run(suites)
    return report(7, not failed, "%d/%d suites green%s" % (len(suites) - len(failed), len(suites), _why(failed)))


# 8: termination and re-verification on small pairs

def corpus():
    decay = parse("x := 1; <x' = -x & true>")
    delayed = parse("x := 1; <x' = -x@0.1 & x > 0.5>; y := x")
    pairs = [
        ("skip", "skip"),
        ("x := 0; wait 1", "x := 0.1; wait 1"),
        ("x := 0; wait 1", "x := 0.5; wait 1"),
        ("wait 1; x := 1", "wait 1; x := 1.15"),
        ("x := 1; wait 0.5; x := 2", "x := 1; wait 0.5; x := 2"),
        ("x := 0 |~| x := 1", "x := 0"),
        ("x := 0 |~| x := 1", "x := 0.05 |~| x := 1.05"),
        ("(x := x + 1; wait 0.2)*{4}", "(x := x + 1; wait 0.2)*{4}"),
        ("(x := x + 1; wait 0.2)*{4}", "(x := x + 1.01; wait 0.2)*{4}"),
        ("x := 1; x > 0 -> y := 1", "x := 1; x > 0 -> y := 1.1"),
        ("wait 1", "wait 1.05"),
        ("system S { a!1 || x := 0; a?x }", "system S { a!1.1 || x := 0; a?x }"),
        ("system S { a!1; wait 1 || x := 0; a?x; wait 1 }", "system S { wait 0.5; a!1 || x := 0; a?x }"),
        ("system S { [a?x -> (skip), b?x -> (wait 1)] || x := 0; a!2 }",
         "system S { [a?x -> (skip), b?x -> (wait 1)] || x := 0; a!2.1 }"),
        ("x := 2; stop", "x := 2; wait 3"),
    ]
    out = [(parse(a), parse(b), 0.1, 0.2, 1.0) for a, b in pairs]
    for h in (0.1, 0.05, 0.025):
        out.append((decay, discretize(decay, h, 0.2, 1.0), h, 0.2, 1.0))
    out.append((delayed, discretize(delayed, 0.025, 0.2, 1.0), 0.025, 0.2, 1.0))
    out.append((decay, discretize(decay, 0.05, 0.01, 1.0), 0.05, 0.01, 1.0))
    return out


def criterion_8(budget=20000, per_pair=30.0):
    pairs = corpus()
    bad, verdicts = [], []
    for i, (p, q, h, eps, T) in enumerate(pairs):
        t0 = time.perf_counter()
        try:
            res = check_approx_bisim(p, q, h, eps, T, budget=budget, dt_ref=DT_REF)
        except Exception as exc:  # noqa: BLE001
            bad.append("pair %d: %s" % (i, type(exc).__name__))
            continue
        if time.perf_counter() - t0 > per_pair:
            bad.append("pair %d: slow" % i)
        if verify_relation(res.ts1, res.ts2, res.relation, h, eps):
            bad.append("pair %d: relation fails re-check" % i)
        verdicts.append(res.accepted)
    ok = len(pairs) == 20 and not bad
    return report(8, ok, "%d pairs, %d accepted, %d rejected%s" % (
        len(pairs), sum(verdicts), len(verdicts) - sum(verdicts), _why(bad)))


def _run(checks):
    failed = []
    for name, fn in checks:
        try:
            fn()
        except Exception as exc:  # noqa: BLE001
            failed.append("%s (%s)" % (name, type(exc).__name__))
    return failed


def _why(failed):
    return "; failed: " + ", ".join(failed) if failed else ""


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("n", range(1, 9))
def test_criterion(n):
    assert CRITERIA[n - 1]()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    sys.exit(0 if all(results) else 1)
