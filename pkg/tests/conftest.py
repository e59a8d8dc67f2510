import numpy as np
import pytest

from dynpanel.panel_data import PanelDataset

REPORT: list[str] = []


@pytest.fixture
def report():
    """Collects one summary line per acceptance criterion."""
    return REPORT.append


def pytest_terminal_summary(terminalreporter):
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)


def make_panel(y, x):
    return PanelDataset(np.asarray(y, dtype=np.int8), np.asarray(x, dtype=float))
