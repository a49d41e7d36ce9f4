import os
import subprocess
import sys

import numpy as np
import pytest

from dhcsp import _jit
from dhcsp import ast as A
from dhcsp.interval import SlopeKernel, SlopeProblem, min_error_slope
from dhcsp.kernels import get_kernels
from dhcsp.parser import parse_expr
from dhcsp.reference import integrate_dde

pytestmark = pytest.mark.skipif(_jit.numba is None, reason="numba not installed")

OPEN = A.DdeSpec(("d",), (parse_expr("2.0 - 3.14 * 0.18 ^ 2 * sqrt(9.8 * (d + d@0.1))"),))


@pytest.fixture
def both_modes():
    was = _jit.jit_enabled()

    def run(fn):
        out = []
        for on in (True, False):
            _jit.enable_jit() if on else _jit.disable_jit()
            out.append(fn())
        return out
    yield run
    _jit.enable_jit() if was else _jit.disable_jit()


def test_kernel_selection(both_modes):
    fast, slow = both_modes(get_kernels)
    assert slow[2].__module__ == "dhcsp.kernels" and not hasattr(slow[2], "py_func")
    assert hasattr(fast[2], "py_func")


def test_integration_agrees(both_modes):
    a, b = both_modes(lambda: integrate_dde(OPEN, 4.5, t_max=1.0, dt=1e-3)[0])
    assert np.array_equal(a.t, b.t)
    assert np.allclose(a.x, b.x, rtol=0, atol=1e-12)


def test_slope_agrees(both_modes):
    def slope():
        k = SlopeKernel(OPEN)
        y = np.array([4.6])
        return min_error_slope(SlopeProblem(k, y, y, y, 0.01, 0.005, 0.2, 0.025))
    a, b = both_modes(slope)
    assert a == pytest.approx(b, rel=1e-12)


def test_env_flag():
    code = "from dhcsp import _jit; print(_jit.jit_enabled())"
    env = dict(os.environ, DHCSP_NO_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
