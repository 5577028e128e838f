import numpy as np
import pytest

from ritypology import dataset as ds
from ritypology import hcluster as hc


@pytest.fixture(scope="session")
def records():
    return ds.bundled_institutions()


@pytest.fixture(scope="session")
def attributes(records):
    return ds.encode_attributes(records)


@pytest.fixture(scope="session")
def counts():
    return ds.bundled_counts()


@pytest.fixture(scope="session")
def registry():
    return ds.default_registry()


@pytest.fixture(scope="session")
def reference5(records):
    return hc.domain_partition(records, 5)


@pytest.fixture(scope="session")
def reference2(records):
    return hc.domain_partition(records, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the test still asserts the outcome itself."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number: int, ok: bool, detail: str) -> bool:
        lines.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
        print(lines[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
