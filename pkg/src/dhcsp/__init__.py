"""Delayed hybrid CSP: parsing, validated discretization, bisimulation checking and SystemC emission."""

from .ast import Parallel
from .bisim import BisimResult, build_ts, check_approx_bisim, max_bisim, run_discrete, verify_relation
from .codegen import EmitConfig, EmitUnit, UnsupportedNode, emit_module, emit_stmt
from .config import RunConfig, load_config
from .discretize import RobustnessReport, discretize, estimate_robustness
from .parser import ParseError, parse
from .printer import pretty
from .reference import Trace, integrate_dde, run_reference
from .stepsize import MaxHalvings, SimLists, com_stepsize_multi, com_stepsize_one, stepsize_for_trace
from .validate import validate

__all__ = [
    "Parallel", "BisimResult", "build_ts", "check_approx_bisim", "max_bisim", "run_discrete", "verify_relation",
    "EmitConfig", "EmitUnit", "UnsupportedNode", "emit_module", "emit_stmt", "RunConfig", "load_config",
    "RobustnessReport", "discretize", "estimate_robustness", "ParseError", "parse", "pretty", "Trace",
    "integrate_dde", "run_reference", "MaxHalvings", "SimLists", "com_stepsize_multi", "com_stepsize_one",
    "stepsize_for_trace", "validate",
]
