import numpy as np
import pytest

from swingseq.dataset import SwingAnnotation

# (criterion, status, detail) lines printed after the run; status is PASS, FAIL or INFO
ACCEPTANCE_RESULTS: list[tuple[str, str, str]] = []


def make_annotation(sample_id="s0", source="v0", num_frames=120, events=None, **kw):
    events = events if events is not None else [10, 20, 30, 45, 52, 60, 70, 90]
    kw.setdefault("bbox", (0.1, 0.1, 0.6, 0.8))
    return SwingAnnotation(sample_id=sample_id, source_video_id=source, num_frames=num_frames,
                           event_frames=list(events), **kw)


@pytest.fixture
def annotation():
    return make_annotation()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{status}] {name}: {detail}")
