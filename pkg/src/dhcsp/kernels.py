"""Hot loops: Hermite history lookup and fixed-step RK4 for delay equations.

History is stored as knots (t, x, dx) sorted by time.  Several knots may
share a time stamp; a lookup at that time returns the last one, which makes
the stored function right-continuous at jumps.  Lookups before the first
knot read the latest state at the first knot's time (constant pre-history).
"""

import numpy as np

from . import _jit

STATUS_TIMEOUT = 0
STATUS_EXIT = 1
STATUS_DOMAIN = 2
STATUS_FULL = 3


def hermite_at(ht, hx, hdx, n, s, out):
    if s < ht[0]:
        s = ht[0]
    k = np.searchsorted(ht[:n], s, side="right") - 1
    nv = hx.shape[1]
    if k < 0:
        for j in range(nv):
            out[j] = hx[0, j]
        return
    if k >= n - 1:
        for j in range(nv):
            out[j] = hx[n - 1, j]
        return
    t0 = ht[k]
    hh = ht[k + 1] - t0
    u = (s - t0) / hh
    u2 = u * u
    u3 = u2 * u
    h00 = 2.0 * u3 - 3.0 * u2 + 1.0
    h10 = u3 - 2.0 * u2 + u
    h01 = -2.0 * u3 + 3.0 * u2
    h11 = u3 - u2
    for j in range(nv):
        out[j] = (h00 * hx[k, j] + h10 * hh * hdx[k, j]
                  + h01 * hx[k + 1, j] + h11 * hh * hdx[k + 1, j])


def hermite_sample(ht, hx, hdx, n, ts, out):
    """Evaluate the history at every time in ``ts`` (rows of ``out``)."""
    for i in range(ts.shape[0]):
        hermite_at(ht, hx, hdx, n, ts[i], out[i])


def rk4_delay(rhs, dom, use_dom, delay, dt, t_end, ht, hx, hdx, n):
    """Advance the history from its last knot to ``t_end``.

    The last knot is the flow's starting point; its derivative is filled in
    here.  Returns (n, status) with status one of the STATUS_* codes.  On a
    domain exit the last stored knot is the first one where ``dom`` is false.
    """
    cap = ht.shape[0]
    nv = hx.shape[1]
    x = hx[n - 1].copy()
    t = ht[n - 1]
    xr = np.empty(nv)
    k1 = np.empty(nv)
    k2 = np.empty(nv)
    k3 = np.empty(nv)
    k4 = np.empty(nv)
    tmp = np.empty(nv)
    hermite_at(ht, hx, hdx, n, t - delay, xr)
    rhs(x, xr, k1)
    for j in range(nv):
        if not np.isfinite(k1[j]):
            return n, STATUS_DOMAIN
        hdx[n - 1, j] = k1[j]
    while True:
        rem = t_end - t
        if rem <= 1e-13:
            return n, STATUS_TIMEOUT
        if n >= cap:
            return n, STATUS_FULL
        hs = dt if dt < rem else rem
        hermite_at(ht, hx, hdx, n, t + 0.5 * hs - delay, xr)
        for j in range(nv):
            tmp[j] = x[j] + 0.5 * hs * k1[j]
        rhs(tmp, xr, k2)
        for j in range(nv):
            tmp[j] = x[j] + 0.5 * hs * k2[j]
        rhs(tmp, xr, k3)
        hermite_at(ht, hx, hdx, n, t + hs - delay, xr)
        for j in range(nv):
            tmp[j] = x[j] + hs * k3[j]
        rhs(tmp, xr, k4)
        for j in range(nv):
            x[j] = x[j] + hs / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        t = t_end if rem - hs <= 1e-13 else t + hs
        hermite_at(ht, hx, hdx, n, t - delay, xr)
        rhs(x, xr, k1)
        ok = True
        for j in range(nv):
            if not (np.isfinite(x[j]) and np.isfinite(k1[j])):
                ok = False
        if not ok:
            return n, STATUS_DOMAIN
        ht[n] = t
        for j in range(nv):
            hx[n, j] = x[j]
            hdx[n, j] = k1[j]
        n += 1
        if use_dom and not dom(x):
            return n, STATUS_EXIT


_KERNELS = {}


def get_kernels():
    """(hermite_at, hermite_sample, rk4_delay), compiled when JIT is on."""
    key = _jit.jit_enabled()
    ks = _KERNELS.get(key)
    if ks is None:
        if key:
            import numba
            h_at = numba.njit(hermite_at)
            ns = {"np": np, "hermite_at": h_at, "STATUS_TIMEOUT": STATUS_TIMEOUT,
                  "STATUS_EXIT": STATUS_EXIT, "STATUS_DOMAIN": STATUS_DOMAIN, "STATUS_FULL": STATUS_FULL}
            import inspect
            for nm in ("hermite_sample", "rk4_delay"):
                exec(inspect.getsource(globals()[nm]), ns)
            ks = (h_at, numba.njit(ns["hermite_sample"]), numba.njit(ns["rk4_delay"]))
        else:
            ks = (hermite_at, hermite_sample, rk4_delay)
        _KERNELS[key] = ks
    return ks
