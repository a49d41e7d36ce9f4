"""Interval arithmetic with outward rounding and the error-slope optimizer.

The scalar helpers ``i_*`` operate on (lo, hi) pairs of floats and return a
new pair.  A result of (nan, nan) marks an operation that is undefined on
part of its input box; the public entry points turn it into DomainError.
The same helpers are used by the tree-walking evaluator and by generated
code, which numba compiles when JIT is enabled.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import _jit
from . import ast as A
from .exprs import DomainError

NAN = math.nan
INF = math.inf


def _dn(x):
    return np.nextafter(x, -INF)


def _up(x):
    return np.nextafter(x, INF)


def i_add(al, ah, bl, bh):
    return _dn(al + bl), _up(ah + bh)


def i_sub(al, ah, bl, bh):
    return _dn(al - bh), _up(ah - bl)


def i_neg(al, ah):
    return -ah, -al


def i_mul(al, ah, bl, bh):
    p1 = al * bl
    p2 = al * bh
    p3 = ah * bl
    p4 = ah * bh
    return _dn(min(min(p1, p2), min(p3, p4))), _up(max(max(p1, p2), max(p3, p4)))


def i_div(al, ah, bl, bh):
    if not (bl > 0.0 or bh < 0.0):  # also catches nan
        return NAN, NAN
    return i_mul(al, ah, _dn(1.0 / bh), _up(1.0 / bl))


def i_sqrt(al, ah):
    if not al >= 0.0:
        return NAN, NAN
    return max(0.0, _dn(math.sqrt(al))), _up(math.sqrt(ah))


def i_exp(al, ah):
    if al > 709.0:
        lo = 1.7976931348623157e308
    else:
        lo = 0.0 if al < -700.0 else _dn(_dn(math.exp(al)))
    hi = INF if ah > 709.0 else _up(_up(math.exp(ah)))
    return max(0.0, lo), hi


def i_abs(al, ah):
    if al >= 0.0:
        return al, ah
    if ah <= 0.0:
        return -ah, -al
    return 0.0, max(-al, ah)


def _pw(x, n):
    # x ** n without OverflowError; plain floats raise where numba returns inf
    ax = abs(x)
    if ax > 0.0:
        g = n * math.log(ax)
        if g > 710.0:
            if x < 0.0 and n % 2 == 1:
                return -INF
            return INF
        if g > 709.0:
            return np.power(np.float64(x), np.float64(n))
    return x ** n


def _pad_pow(lo, hi):
    # libm pow is not correctly rounded; pad by a few ulps relative
    if abs(lo) < INF:
        lo = _dn(lo - abs(lo) * 4e-16)
    if abs(hi) < INF:
        hi = _up(hi + abs(hi) * 4e-16)
    return lo, hi


def i_pow(al, ah, bl, bh):
    if bl != bh:
        return NAN, NAN
    n = bl
    if not abs(n) < INF:
        return NAN, NAN
    if n == math.floor(n):
        k = int(n)
        if k == 0:
            return 1.0, 1.0
        if k < 0:
            pl, ph = i_pow(al, ah, -n, -n)
            return i_div(1.0, 1.0, pl, ph)
        if k % 2 == 1 or al >= 0.0:
            return _pad_pow(_pw(al, k), _pw(ah, k))
        if ah <= 0.0:
            return _pad_pow(_pw(ah, k), _pw(al, k))
        return 0.0, _pad_pow(0.0, max(_pw(al, k), _pw(ah, k)))[1]
    if al < 0.0:
        return NAN, NAN
    if n > 0:
        return _pad_pow(_pw(al, n), _pw(ah, n))
    if al == 0.0:
        return NAN, NAN
    return _pad_pow(_pw(ah, n), _pw(al, n))


# ------------------------------------------------------------------ data types


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError("empty interval [%r, %r]" % (self.lo, self.hi))

    @classmethod
    def point(cls, v):
        return cls(float(v), float(v))

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def mid(self):
        return 0.5 * (self.lo + self.hi)

    def inflate(self, eps):
        return Interval(self.lo - eps, self.hi + eps)

    def contains(self, v):
        return self.lo <= v <= self.hi

    def __iter__(self):
        yield self.lo
        yield self.hi


@dataclass
class IntervalBox:
    """Axis-aligned box; ``N(x, d)`` is ``IntervalBox.ball(x, d)``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError("malformed box")

    @classmethod
    def ball(cls, center, radius):
        c = np.atleast_1d(np.asarray(center, dtype=float))
        return cls(c - radius, c + radius)

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def mid(self):
        return 0.5 * (self.lo + self.hi)

    def inflate(self, eps):
        return IntervalBox(self.lo - eps, self.hi + eps)

    def __getitem__(self, i):
        return Interval(float(self.lo[i]), float(self.hi[i]))

    def __len__(self):
        return len(self.lo)


def _as_pair(v):
    if isinstance(v, Interval):
        return v.lo, v.hi
    if isinstance(v, IntervalBox):
        if len(v) != 1:
            raise ValueError("scalar variable bound to a %d-dimensional box" % len(v))
        return float(v.lo[0]), float(v.hi[0])
    if isinstance(v, tuple):
        return float(v[0]), float(v[1])
    return float(v), float(v)


def _eval(e, env, denv):
    if isinstance(e, A.Const):
        return e.value, e.value
    if isinstance(e, A.Var):
        return _as_pair(env[e.name])
    if isinstance(e, A.Delayed):
        if denv is None or e.name not in denv:
            raise DomainError("no interval for delayed reference %s@%g" % (e.name, e.delay))
        return _as_pair(denv[e.name])
    if isinstance(e, A.Neg):
        return i_neg(*_eval(e.arg, env, denv))
    if isinstance(e, A.Call):
        a = _eval(e.arg, env, denv)
        fn = {"sqrt": i_sqrt, "exp": i_exp, "abs": i_abs}[e.func]
        return fn(*a)
    if isinstance(e, A.BinOp):
        a = _eval(e.left, env, denv)
        b = _eval(e.right, env, denv)
        fn = {"+": i_add, "-": i_sub, "*": i_mul, "/": i_div, "^": i_pow}[e.op]
        return fn(a[0], a[1], b[0], b[1])
    raise TypeError("not an expression: %r" % (e,))


def eval_interval(e, env, delayed_env=None) -> Interval:
    """Outer enclosure of ``{e(v) : v in env}``.

    ``env`` maps names to Interval, (lo, hi) tuples, 1-D boxes or floats;
    ``delayed_env`` does the same for delayed references.
    """
    with np.errstate(all="ignore"):  # overflow to inf is part of the arithmetic
        lo, hi = _eval(e, env, delayed_env)
    if math.isnan(lo) or math.isnan(hi):
        raise DomainError("expression undefined on part of the box")
    return Interval(float(lo), float(hi))


# --------------------------------------------------------------- slope kernel


class NoConvergence(ArithmeticError):
    pass


def _interval_source(e, index, rindex, out):
    """Append lines computing ``e`` over boxes; return the (lo, hi) names."""
    k = len(out)
    name = "v%d" % k
    if isinstance(e, A.Const):
        out.append("%s = (%r, %r)" % (name, e.value, e.value))
        return name
    if isinstance(e, A.Var):
        i = index[e.name]
        out.append("%s = (xlo[%d], xhi[%d])" % (name, i, i))
        return name
    if isinstance(e, A.Delayed):
        i = rindex[e.name]
        out.append("%s = (rlo[%d], rhi[%d])" % (name, i, i))
        return name
    if isinstance(e, (A.Neg, A.Call)):
        a = _interval_source(e.arg, index, rindex, out)
        fn = "i_neg" if isinstance(e, A.Neg) else "i_" + e.func
        out.append("%s = %s(%s[0], %s[1])" % ("v%d" % len(out), fn, a, a))
        return "v%d" % (len(out) - 1)
    if isinstance(e, A.BinOp):
        a = _interval_source(e.left, index, rindex, out)
        b = _interval_source(e.right, index, rindex, out)
        fn = {"+": "i_add", "-": "i_sub", "*": "i_mul", "/": "i_div", "^": "i_pow"}[e.op]
        out.append("%s = %s(%s[0], %s[1], %s[0], %s[1])" % ("v%d" % len(out), fn, a, a, b, b))
        return "v%d" % (len(out) - 1)
    raise TypeError("not an expression: %r" % (e,))


def _slope_sup_py(ifn, y, d, yr, dr, fc, fr, gc, gr, h, nstate, f0lo, f0hi,
                  xlo, xhi, rlo, rhi, olo, ohi):
    """Upper bound of ||f(x + t*fh, xr + t*g) - f0|| over the boxes (nan on domain error)."""
    for i in range(nstate):
        a0, a1 = y[i] - d, y[i] + d
        a0, a1 = _dn(a0), _up(a1)
        s0, s1 = i_mul(0.0, h, _dn(fc[i] - fr), _up(fc[i] + fr))
        xlo[i], xhi[i] = i_add(a0, a1, s0, s1)
        b0, b1 = _dn(yr[i] - dr), _up(yr[i] + dr)
        s0, s1 = i_mul(0.0, h, _dn(gc[i] - gr), _up(gc[i] + gr))
        rlo[i], rhi[i] = i_add(b0, b1, s0, s1)
    ifn(xlo, xhi, rlo, rhi, olo, ohi)
    acc = 0.0
    for i in range(nstate):
        lo, hi = i_sub(olo[i], ohi[i], f0lo[i], f0hi[i])
        if lo != lo or hi != hi:
            return NAN
        m = max(abs(lo), abs(hi))
        acc = _up(acc + _up(m * m))
    return _up(math.sqrt(acc))


_KERNEL_NS = {}


def _kernel_namespace():
    key = _jit.jit_enabled()
    ns = _KERNEL_NS.get(key)
    if ns is None:
        ns = {"math": math, "np": np, "NAN": NAN, "INF": INF}
        for nm in ("_dn", "_up"):
            ns[nm] = globals()[nm]
        # helpers reference each other through module globals, so compile
        # them by re-executing their source inside the namespace
        import inspect
        for nm in ("_dn", "_up", "i_add", "i_sub", "i_neg", "i_mul", "i_div", "i_sqrt", "i_exp",
                   "i_abs", "_pw", "_pad_pow", "i_pow", "_slope_sup_py"):
            src = inspect.getsource(globals()[nm])
            exec(src, ns)
            ns[nm] = _jit.maybe_njit(ns[nm])
        _KERNEL_NS[key] = ns
    return ns


class SlopeKernel:
    """Compiled interval extension of a DDE right-hand side.

    ``state`` lists the DDE variables in order; ``params`` are other variables
    read by the right-hand side, held constant during the flow.
    """

    def __init__(self, spec: A.DdeSpec, params: Optional[Dict[str, float]] = None):
        self.spec = spec
        self.state = list(spec.vars)
        self.params = dict(params or {})
        self.index = {v: i for i, v in enumerate(self.state)}
        for j, p in enumerate(sorted(self.params)):
            self.index[p] = len(self.state) + j
        rindex = {v: i for i, v in enumerate(self.state)}
        lines = ["def _ifn(xlo, xhi, rlo, rhi, olo, ohi):"]
        for k, e in enumerate(spec.rhs):
            body = []
            res = _interval_source(e, self.index, rindex, body)
            lines += ["    " + re.sub(r"\bv(\d+)\b", r"c%d_v\1" % k, ln) for ln in body]
            res = "c%d_%s" % (k, res)
            lines.append("    olo[%d] = %s[0]" % (k, res))
            lines.append("    ohi[%d] = %s[1]" % (k, res))
        src = "\n".join(lines) + "\n"
        self.ns = _kernel_namespace()
        loc = dict(self.ns)
        exec(compile(src, "<dhcsp:interval>", "exec"), loc)
        self.ifn = _jit.maybe_njit(loc["_ifn"])
        self.sup_fn = self.ns["_slope_sup_py"]
        n = len(self.state)
        nx = len(self.index)
        self.nstate = n
        self._xlo = np.empty(nx)
        self._xhi = np.empty(nx)
        pv = np.array([self.params[p] for p in sorted(self.params)], dtype=float)
        self._xlo[n:] = pv
        self._xhi[n:] = pv
        self._rlo = np.empty(n)
        self._rhi = np.empty(n)
        self._olo = np.empty(n)
        self._ohi = np.empty(n)

    def enclose(self, xlo, xhi, rlo, rhi):
        """Interval image of the rhs over the given state/delayed boxes."""
        n = self.nstate
        self._xlo[:n] = xlo
        self._xhi[:n] = xhi
        self.ifn(self._xlo, self._xhi, np.asarray(rlo, float), np.asarray(rhi, float), self._olo, self._ohi)
        if np.any(np.isnan(self._olo)) or np.any(np.isnan(self._ohi)):
            raise DomainError("right-hand side undefined on part of the box")
        return self._olo.copy(), self._ohi.copy()

    def point(self, x, xr):
        x = np.asarray(x, float)
        xr = np.asarray(xr, float)
        return self.enclose(x, x, xr, xr)

    def sup(self, y, d, yr, dr, fc, fr, gc, gr, h, f0lo, f0hi):
        v = self.sup_fn(self.ifn, y, float(d), yr, float(dr), fc, float(fr), gc, float(gr), float(h),
                        self.nstate, f0lo, f0hi, self._xlo, self._xhi, self._rlo, self._rhi,
                        self._olo, self._ohi)
        if v != v:
            raise DomainError("right-hand side undefined inside the error boxes")
        return float(v)


@dataclass
class SlopeProblem:
    """Inputs of one error-slope minimisation (one Euler step)."""

    kernel: SlopeKernel
    y_n: np.ndarray
    y_nm: np.ndarray
    y_n2m: np.ndarray
    d_n: float
    d_nm: float
    e_nm: float
    h: float
    sigma: float = 1e-9
    g_zero: bool = False  # delayed slope is exactly zero (constant pre-history)
    g_box: Optional[tuple] = None  # (lo, hi) enclosure of the recorded delayed slope
    max_iter: int = 100
    cap: float = 1e12
    _f0: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        if self.d_n < 0 or self.d_nm < 0 or self.e_nm < 0:
            raise ValueError("radii must be non-negative")
        if self.h <= 0 or self.sigma <= 0:
            raise ValueError("h and sigma must be positive")


def min_error_slope(sp: SlopeProblem) -> float:
    """Least verified e with sup ||f(x+t f, xr+t g) - f(y_n, y_nm)|| <= e - sigma.

    Fixed-point iteration from the radius-0 bound; the returned value is
    re-checked so that the inequality holds for the interval enclosure.
    """
    k = sp.kernel
    y = np.asarray(sp.y_n, float)
    yr = np.asarray(sp.y_nm, float)
    f0lo, f0hi = k.point(y, yr)
    fc = 0.5 * (f0lo + f0hi)
    if sp.g_zero:
        gc = np.zeros_like(fc)
        gr = 0.0
    elif sp.g_box is not None:
        glo, ghi = (np.asarray(a, float) for a in sp.g_box)
        gc = 0.5 * (glo + ghi)
        gr = sp.e_nm + float(np.max(ghi - glo))
    else:
        glo, ghi = k.point(yr, np.asarray(sp.y_n2m, float))
        gc = 0.5 * (glo + ghi)
        gr = sp.e_nm + float(np.max(ghi - glo))
    fr_pad = float(np.max(f0hi - f0lo))

    def step(e):
        return sp.sigma + k.sup(y, sp.d_n, yr, sp.d_nm, fc, e + fr_pad, gc, gr, sp.h, f0lo, f0hi)

    e = step(0.0)
    for _ in range(sp.max_iter):
        if not math.isfinite(e) or e > sp.cap:
            break
        nxt = step(e)
        if nxt <= e:
            return e
        if nxt <= e * (1 + 1e-6):
            e = nxt * (1 + 2e-6)
            continue
        e = nxt
    raise NoConvergence("error slope iteration did not converge (last e=%g)" % e)
