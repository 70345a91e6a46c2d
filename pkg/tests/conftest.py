import numpy as np
import pytest


def naive_rdft(frame):
    """O(L^2) DFT, non-negative half. Independent of numpy.fft."""
    frame = np.asarray(frame, dtype=np.float64)
    n = len(frame)
    m = np.arange(n)
    k = np.arange(n // 2 + 1)
    return np.exp(-2j * np.pi * np.outer(k, m) / n) @ frame


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: int(k)):
        ok, detail = results[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
