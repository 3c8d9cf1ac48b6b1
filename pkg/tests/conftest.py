from pathlib import Path

import numpy as np
import pytest

from tnormloss import load_constraints
from tnormloss.matrix_io import read_matrix

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def ex31():
    cs = load_constraints((DATA / "ex31.cnf").read_text(), (DATA / "ex31.labels").read_text())
    p = read_matrix(DATA / "ex31.csv").astype(np.float32)
    return cs, p


def expected_goal(kind: str) -> np.ndarray:
    return read_matrix(DATA / f"ex31_goal_{kind}.csv")


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
