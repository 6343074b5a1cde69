import json
from pathlib import Path

import numpy as np
import pytest

from flockfp.model import ModelParams
from flockfp.phase import find_D_star, require_r_of_D

ORACLE = json.loads((Path(__file__).parent / "data" / "oracle_values.json").read_text())


@pytest.fixture(scope="session")
def oracle():
    return ORACLE


def polarized(d, rel=0.8, alpha=4.0):
    """Parameters at rel * D* together with r(D)."""
    p = ModelParams(d, alpha, rel * find_D_star(d, alpha))
    return p, require_r_of_D(p)


@pytest.fixture(scope="session")
def pol1():
    return polarized(1)


@pytest.fixture(scope="session")
def pol2():
    return polarized(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion and fail the test on FAIL."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(number: int, ok: bool, detail: str):
        line = f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
