import numpy as np
import pytest

from vortexdamp.grid import ModeField, make_grid
from vortexdamp.vortex import build_gaussian_vortex


@pytest.fixture(scope="session")
def vortex():
    return build_gaussian_vortex(2 * np.pi, 1.0)


@pytest.fixture(scope="session")
def grid():
    return make_grid(1e-4, 40.0, 2048)


def bump(grid, k, center=1.0, width=0.5, amp=1.0):
    r = grid.nodes
    return ModeField(k, amp * (r / center) ** abs(k) * np.exp(-(((r**2 - center**2) / (2 * center * width)) ** 2)),
                     grid)


def rel_l2(a, b, grid=None):
    g = grid or a.grid
    ref = np.sqrt(g.integrate(np.abs(b.values) ** 2))
    return float(np.sqrt(g.integrate(np.abs(a.values - b.values) ** 2)) / ref)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


def record(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
