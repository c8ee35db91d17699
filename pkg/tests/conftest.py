"""Shared fixtures and the acceptance summary printer."""

from __future__ import annotations

import numpy as np
import pytest

from ncclt import processes as pr
from ncclt import observables as ob

# criterion number -> (title, outcome) filled by test_acceptance.py via the fixture
_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def acceptance_record():
    def record(number: int, title: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE[number] = (title, ("PASS" if passed else "FAIL") + (f" ({detail})" if detail else ""))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} ({title}): {outcome}")


@pytest.fixture(scope="session")
def two_state_chain():
    """p = q = 1/4 symmetric chain with a +-1 embedding; second eigenvalue 1/2."""
    return pr.build_doeblin_chain([[0.75, 0.25], [0.25, 0.75]], embedding=[-1.0, 1.0])


@pytest.fixture(scope="session")
def reference_chain():
    """The two-state instance used by the rate experiments: stationary law
    (2/3, 1/3), second eigenvalue -0.35, zero-mean embedding (-1, 2)."""
    return pr.build_doeblin_chain([[0.55, 0.45], [0.9, 0.1]], embedding=[-1.0, 2.0])


@pytest.fixture(scope="session")
def rademacher_iid():
    return pr.build_iid([0.5, 0.5], embedding=[-1.0, 1.0])


@pytest.fixture(scope="session")
def uniform3_iid():
    return pr.build_iid([1 / 3, 1 / 3, 1 / 3], embedding=[-1.0, 0.0, 1.0])


@pytest.fixture(scope="session")
def q1():
    return ob.linear_index_family(1)


@pytest.fixture(scope="session")
def q2():
    return ob.linear_index_family(2)


def brute_force_neighborhood(q_table: np.ndarray, n: int, l: int) -> set[int]:
    """Oracle: scan every m and compare all q-image pairs directly."""
    N = q_table.shape[1]
    out = set()
    for m in range(1, N + 1):
        d = min(
            abs(int(a) - int(b)) for a in q_table[:, n - 1] for b in q_table[:, m - 1]
        )
        if d <= l:
            out.add(m)
    return out


def brute_force_set_distance(A, B) -> int:
    return min(abs(int(a) - int(b)) for a in A for b in B)
