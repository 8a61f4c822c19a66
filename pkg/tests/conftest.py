import functools

import numpy as np
import pytest

from pmclab.mesh import generate_disk_mesh


@functools.lru_cache(maxsize=None)
def cached_mesh(level):
    return generate_disk_mesh(level)


@pytest.fixture(scope="session")
def mesh():
    return cached_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    acc = sys.modules.get("test_acceptance")
    verdicts = getattr(acc, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(verdicts, key=int):
        ok, detail = verdicts[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
