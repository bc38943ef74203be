import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.geomspace(1.0, cond, n)
    return (Q * w) @ Q.T


_CRITERIA = []


@pytest.fixture
def criterion():
    """Yields a dict for details; records one PASS/FAIL line for the summary."""
    import contextlib
    import time

    @contextlib.contextmanager
    def track(num, title):
        info = {"detail": ""}
        t0 = time.perf_counter()
        ok = False
        try:
            yield info
            ok = True
        finally:
            _CRITERIA.append((num, title, ok, time.perf_counter() - t0, info["detail"]))
    return track


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, secs, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {num} {'PASS' if ok else 'FAIL'} "
                                    f"({secs:.1f}s) {title}: {detail}")
