import numpy as np
import pytest

from pmiris.manifest import SampleRecord


def annulus(shape, center, r_in, r_out):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    d = np.hypot(xx - center[0], yy - center[1])
    return (d <= r_out) & (d > r_in)


def records(spec):
    """``spec`` rows: (sample_id, subject, eye, hours, session)."""
    return [SampleRecord(sid, sub, eye, float(h), int(s), f"{sid}.png") for sid, sub, eye, h, s in spec]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
