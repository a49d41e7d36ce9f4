"""Dense per-component history of variable values (the rho/H machinery)."""

from __future__ import annotations

import numpy as np

from .kernels import get_kernels


class History:
    """Knots (t, x, dx) over a fixed list of variables.

    Between two knots the value is the cubic Hermite interpolant; a variable
    that is merely held gets zero derivatives so it stays constant.  Jumps
    are two knots with the same time stamp.
    """

    def __init__(self, names, x0, t0: float = 0.0, cap: int = 256):
        self.names = tuple(names)
        self.index = {n: i for i, n in enumerate(self.names)}
        nv = len(self.names)
        self.t = np.empty(cap)
        self.x = np.empty((cap, nv))
        self.dx = np.zeros((cap, nv))
        self.n = 0
        self.append(t0, np.asarray(x0, float))

    @property
    def nv(self):
        return len(self.names)

    def reserve(self, extra: int):
        need = self.n + extra
        cap = self.t.shape[0]
        if need <= cap:
            return
        new = max(need, 2 * cap)
        for attr in ("t", "x", "dx"):
            old = getattr(self, attr)
            arr = np.zeros((new,) + old.shape[1:])
            arr[: self.n] = old[: self.n]
            setattr(self, attr, arr)

    def append(self, t, x, dx=None):
        self.reserve(1)
        self.t[self.n] = t
        self.x[self.n] = x
        self.dx[self.n] = 0.0 if dx is None else dx
        self.n += 1

    @property
    def last_t(self):
        return float(self.t[self.n - 1])

    @property
    def last_x(self):
        return self.x[self.n - 1].copy()

    def hold_to(self, t):
        """Close a hold period: constant value up to time t."""
        if t > self.last_t:
            self.append(t, self.x[self.n - 1])

    def set(self, t, updates: dict):
        """Record new values for some variables at time t."""
        self.hold_to(t)
        x = self.last_x
        for name, v in updates.items():
            x[self.index[name]] = v
        self.append(t, x)

    def start_flow(self, t):
        """Append a fresh knot at t whose derivative the integrator fills in."""
        self.hold_to(t)
        self.append(t, self.x[self.n - 1])

    def end_flow(self):
        """Start a hold period after a flow (derivative zero from here on)."""
        self.append(self.last_t, self.x[self.n - 1])

    def truncate(self, t):
        """Drop knots after time t and close the flow at its interpolated value."""
        k = int(np.searchsorted(self.t[: self.n], t, side="right"))
        if k >= self.n:
            return
        xt, dxt = self.at_with_slope(t)
        self.n = k
        self.append(t, xt, dxt)

    def at_with_slope(self, s):
        """Value and derivative of the interpolant at s (s inside the stored range)."""
        n = self.n
        k = int(np.searchsorted(self.t[:n], s, side="right")) - 1
        if k < 0 or k >= n - 1:
            k = min(max(k, 0), n - 1)
            return self.x[k].copy(), self.dx[k].copy()
        t0, hh = self.t[k], self.t[k + 1] - self.t[k]
        u = (s - t0) / hh
        x0, x1, d0, d1 = self.x[k], self.x[k + 1], self.dx[k], self.dx[k + 1]
        val = ((2 * u**3 - 3 * u**2 + 1) * x0 + (u**3 - 2 * u**2 + u) * hh * d0
               + (-2 * u**3 + 3 * u**2) * x1 + (u**3 - u**2) * hh * d1)
        der = ((6 * u**2 - 6 * u) * x0 / hh + (3 * u**2 - 4 * u + 1) * d0
               + (-6 * u**2 + 6 * u) * x1 / hh + (3 * u**2 - 2 * u) * d1)
        return val, der

    def at(self, s) -> np.ndarray:
        h_at, _, _ = get_kernels()
        out = np.empty(self.nv)
        h_at(self.t, self.x, self.dx, self.n, float(s), out)
        return out

    def value_at(self, name, s) -> float:
        return float(self.at(s)[self.index[name]])

    def sample(self, ts) -> np.ndarray:
        _, h_sample, _ = get_kernels()
        ts = np.ascontiguousarray(ts, dtype=float)
        out = np.empty((ts.shape[0], self.nv))
        h_sample(self.t, self.x, self.dx, self.n, ts, out)
        return out

    def clone(self) -> "History":
        h = History.__new__(History)
        h.names = self.names
        h.index = self.index
        h.t = self.t.copy()
        h.x = self.x.copy()
        h.dx = self.dx.copy()
        h.n = self.n
        return h
