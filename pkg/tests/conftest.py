import numpy as np
import pytest

from voxeval.data import FrameEmbeddings


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_fe(utt_id, frames, mask=None, rate=25.0):
    return FrameEmbeddings(utt_id, np.asarray(frames, dtype=np.float32), mask, rate)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
