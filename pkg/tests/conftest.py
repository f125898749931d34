import importlib

import numpy as np
import pytest

from pcfortho import _backend, _kernels_py
from pcfortho.core import ObservationWindow, PointPattern

try:
    _compiled = importlib.import_module("pcfortho._kernels")
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled


@pytest.fixture(params=sorted(BACKENDS))
def backend(request, monkeypatch):
    """Run the test once per available pair-kernel backend."""
    monkeypatch.setattr(_backend, "kernels", BACKENDS[request.param])
    return request.param


@pytest.fixture
def unit_square():
    return ObservationWindow((0.0, 0.0), (1.0, 1.0))


def uniform_pattern(n, seed=0, window=None):
    window = window or ObservationWindow((0.0, 0.0), (1.0, 1.0))
    rng = np.random.default_rng(seed)
    pts = rng.uniform(window.lower, window.upper, size=(n, window.d))
    return PointPattern(pts, window)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
