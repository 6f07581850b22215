import warnings

import pytest

from nusurrogate.dataset import synthesize_dataset


@pytest.fixture(scope="session")
def na87():
    return synthesize_dataset(87, noise=0.03, seed=0)


@pytest.fixture(scope="session")
def na_clean():
    return synthesize_dataset(60, noise=0.0, seed=1)


@pytest.fixture(autouse=True)
def _quiet_solver_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="SMO stopped")
        yield


_ACCEPTANCE = []


@pytest.fixture
def verdict(request, capsys):
    """Record one acceptance line: ``verdict(n, ok, detail)``."""

    def record(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
