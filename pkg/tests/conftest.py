import numpy as np
import pytest

from noisysplit.tensor import SeededRng


@pytest.fixture
def rng():
    return SeededRng(1234)


def naive_matmul(a, b):
    n, p = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for k in range(p):
            for j in range(m):
                out[i, j] += a[i, k] * b[k, j]
    return out


# criterion number -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num}. {title}: {detail}")
