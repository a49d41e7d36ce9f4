"""Switch between numba-compiled kernels and the plain Python fallback.

Set ``DHCSP_NO_JIT=1`` in the environment to run everything in pure Python.
The flag is read at import time; ``enable_jit`` / ``disable_jit`` change it
for subsequent kernel lookups.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

ENABLE_JIT = numba is not None and os.environ.get("DHCSP_NO_JIT", "0").lower() not in ("1", "true", "yes")

_compiled = {}


def enable_jit():
    global ENABLE_JIT
    ENABLE_JIT = numba is not None


def disable_jit():
    global ENABLE_JIT
    ENABLE_JIT = False


def jit_enabled():
    return ENABLE_JIT


def maybe_njit(fn):
    """Return the compiled version of ``fn`` when JIT is on, else ``fn`` itself.

    Compiled dispatchers are memoised per function object so repeated
    lookups do not trigger recompilation.
    """
    if not ENABLE_JIT:
        return fn
    disp = _compiled.get(fn)
    if disp is None:
        disp = numba.njit(fn, error_model="numpy")
        _compiled[fn] = disp
    return disp
