"""Shared fixtures: small hand-built grids with known flows.

Also collects acceptance-criterion verdicts (see test_acceptance.py) and
prints one pass/fail line per criterion at the end of the run.
"""

import pytest

from gridcascade import Bus, Line, PowerGrid

ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one acceptance-criterion verdict; printed in the summary."""

    def _record(index: int, label: str, passed: bool, detail: str = "") -> None:
        ACCEPTANCE_RESULTS.append((index, label, bool(passed), detail))
        assert passed, f"criterion {index} ({label}) failed: {detail}"

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for index, label, passed, detail in sorted(ACCEPTANCE_RESULTS):
        verdict = "PASS" if passed else "FAIL"
        line = f"criterion {index:2d} {verdict}  {label}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


def make_grid(name, buses, lines):
    """buses: (id, gen, load) rows; lines: (id, from, to, b, cap) rows."""
    return PowerGrid(
        name=name,
        buses=tuple(Bus(*row) for row in buses),
        lines=tuple(Line(*row) for row in lines),
    )


@pytest.fixture
def triangle():
    """Three buses, unit susceptances, 1 MW from bus 0 to bus 1.

    Intact flows: 2/3 on the direct line, 1/3 around the far side.
    """
    return make_grid(
        "triangle",
        buses=[(0, 1.0, 0.0), (1, 0.0, 1.0), (2, 0.0, 0.0)],
        lines=[
            (0, 0, 1, 1.0, 0.7),
            (1, 1, 2, 1.0, 0.7),
            (2, 0, 2, 1.0, 0.7),
        ],
    )


@pytest.fixture
def chain4():
    """Four buses in a path; every line is a bridge carrying the full MW."""
    return make_grid(
        "chain4",
        buses=[(0, 1.0, 0.0), (1, 0.0, 0.0), (2, 0.0, 0.0), (3, 0.0, 1.0)],
        lines=[
            (0, 0, 1, 1.0, 1.5),
            (1, 1, 2, 2.0, 1.5),
            (2, 2, 3, 0.5, 1.5),
        ],
    )


@pytest.fixture
def star3():
    """Hub bus 0 with three leaves; all line pairs meet at the hub."""
    return make_grid(
        "star3",
        buses=[(0, 3.0, 0.0), (1, 0.0, 1.0), (2, 0.0, 1.0), (3, 0.0, 1.0)],
        lines=[
            (0, 0, 1, 1.0, 2.0),
            (1, 0, 2, 1.0, 2.0),
            (2, 0, 3, 1.0, 2.0),
        ],
    )


@pytest.fixture
def single_line():
    return make_grid(
        "single-line",
        buses=[(0, 1.0, 0.0), (1, 0.0, 1.0)],
        lines=[(0, 0, 1, 1.0, 2.0)],
    )


@pytest.fixture
def bridged_triangles():
    """Two triangles joined by one bridge line; 2 MW crosses the bridge."""
    return make_grid(
        "bridged-triangles",
        buses=[
            (0, 2.0, 0.0),
            (1, 0.0, 0.0),
            (2, 0.0, 0.0),
            (3, 0.0, 0.0),
            (4, 0.0, 0.0),
            (5, 0.0, 2.0),
        ],
        lines=[
            (0, 0, 1, 1.0, 5.0),
            (1, 1, 2, 1.0, 5.0),
            (2, 0, 2, 1.0, 5.0),
            (3, 2, 3, 1.0, 5.0),
            (4, 3, 4, 1.0, 5.0),
            (5, 4, 5, 1.0, 5.0),
            (6, 3, 5, 1.0, 5.0),
        ],
    )
