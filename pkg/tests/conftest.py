from functools import lru_cache

import numpy as np
import pytest

from stfosls.mesh import refined_mesh
from stfosls.spaces import FESpaces
from stfosls.system import FoslsSystem


@lru_cache(maxsize=None)
def cached_spaces(domain, level, bc="slip", bubbles=True):
    return FESpaces(refined_mesh(domain, level), bc, bubbles)


@lru_cache(maxsize=None)
def cached_system(domain, level, bc="slip", div_norm="h1", nu=1.0):
    return FoslsSystem(cached_spaces(domain, level, bc), nu, div_norm)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    crit = props.get("criterion")
    if crit is None or not (report.when == "call" or report.failed):
        return
    ACCEPTANCE.setdefault(crit, []).append((report.passed, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts if d)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")
