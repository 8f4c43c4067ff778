import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays


def agent_vectors(min_k=1, max_k=12, scale=1e3):
    elems = st.floats(-scale, scale, allow_nan=False, allow_infinity=False)
    return st.integers(min_k, max_k).flatmap(lambda k: arrays(np.float64, (k, 3), elements=elems))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
