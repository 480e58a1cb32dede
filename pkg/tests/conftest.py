from __future__ import annotations

import functools
import sys

import gmpy2
import pytest

from skewcd.skewproduct import Potential
from skewcd.sopfamily import build_sop

PREC = 256


def pytest_configure(config):
    config.addinivalue_line("markers", "property: randomized invariant checks (hypothesis)")
    config.addinivalue_line("markers", "slow: long-running numerical checks")


@pytest.fixture(autouse=True)
def _mp_context():
    # ad-hoc test arithmetic must not fall back to the 53-bit default context
    ctx = gmpy2.get_context()
    old = ctx.precision
    ctx.precision = PREC
    yield
    ctx.precision = old


GAUSS = {1: Potential((0, 1)), 4: Potential((0, 2))}
QUARTIC = Potential((0, 0, 0, 1))


@functools.lru_cache(maxsize=None)
def family(beta: int, kind: str, n_max: int, normalization: str | None = None):
    V = GAUSS[beta] if kind == "gauss" else QUARTIC
    norm = normalization or ("paper-gaussian" if kind == "gauss" else "monic")
    return build_sop(V, beta, n_max, norm, PREC)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
