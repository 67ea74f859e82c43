import sys
from functools import lru_cache
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from efpe.game import make_game  # noqa: E402
from efpe.sequence_form import sequence_form  # noqa: E402

settings.register_profile("efpe", deadline=None)
settings.load_profile("efpe")


@lru_cache(maxsize=None)
def problem(name: str):
    return sequence_form(make_game(name))


@pytest.fixture(scope="session")
def kuhn():
    return problem("kuhn")


@pytest.fixture(scope="session")
def leduc3():
    return problem("leduc3")


@pytest.fixture(scope="session")
def pennies():
    return problem("matching_pennies")


@pytest.fixture(scope="session")
def fig1():
    return problem("fig1")


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, ok, detail)``."""

    def record(n: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
