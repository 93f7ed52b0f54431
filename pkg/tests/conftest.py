import time

import pytest

from ddosguard.evaluation import high_rate_family, low_rate_family, mixed_families, simulate_suite

# criterion label -> (passed, detail); filled in by the acceptance tests
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(label: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[label] = (passed, detail)
    print(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")


def _timed_suite(families):
    start = time.perf_counter()
    runs = simulate_suite(families)
    return runs, time.perf_counter() - start


@pytest.fixture(scope="session")
def high_rate_suite():
    return _timed_suite([high_rate_family(20)])


@pytest.fixture(scope="session")
def low_rate_suite():
    return _timed_suite([low_rate_family(20)])


@pytest.fixture(scope="session")
def mixed_suite():
    return _timed_suite(mixed_families(40))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
