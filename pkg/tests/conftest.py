import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_netpbm(path, magic, width, height, samples):
    path.write_bytes(b"%s\n%d %d\n255\n" % (magic, width, height) + bytes(samples))
    return path


_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion.

    Call the returned function with the criterion id, the verdict and a short
    measurement; the line is printed now and again in the terminal summary.
    """
    def record(cid: str, ok: bool, detail: str):
        line = f"{cid} {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[cid] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE, key=lambda c: int(c[1:])):
        terminalreporter.write_line(_ACCEPTANCE[cid])
