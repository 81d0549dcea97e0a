import numpy as np
import pytest
from hypothesis import settings

from autokrylov.sparse import CsrMatrix, SymCsrMatrix, from_coo

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_csr(rng, n, density=0.1, empty_rows=0.0, diag_shift=0.0) -> CsrMatrix:
    """Random square CRS matrix; ``empty_rows`` is the fraction of rows left empty."""
    nnz = max(1, int(density * n * n))
    rows = rng.integers(0, n, nnz)
    cols = rng.integers(0, n, nnz)
    if empty_rows:
        dead = rng.random(n) < empty_rows
        keep = ~dead[rows]
        rows, cols = rows[keep], cols[keep]
    vals = rng.standard_normal(len(rows))
    if diag_shift:
        d = np.arange(n)
        rows = np.concatenate([rows, d])
        cols = np.concatenate([cols, d])
        vals = np.concatenate([vals, np.full(n, diag_shift)])
    return from_coo(n, rows, cols, vals)


def random_sym(rng, n, density=0.1) -> SymCsrMatrix:
    a = random_csr(rng, n, density).to_dense()
    return SymCsrMatrix.from_dense(np.triu(a) + np.triu(a, 1).T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ------------------------------------------------ acceptance criterion summary

_criteria = []


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        if call.excinfo is None:
            status, why = "PASS", ""
        elif call.excinfo.errisinstance(pytest.skip.Exception):
            status, why = "SKIP", str(call.excinfo.value)
        else:
            status, why = "FAIL", call.excinfo.exconly().splitlines()[0][:160]
        _criteria.append((mark.args[0], mark.args[1], status, why))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, why in sorted(_criteria, key=lambda c: str(c[0])):
        line = f"[{status}] criterion {number}: {title}"
        terminalreporter.write_line(line + (f" ({why})" if why else ""))
