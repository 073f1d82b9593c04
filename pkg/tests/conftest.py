import numpy as np
import pytest

ACCEPTANCE_LINES = []


class InvariantMonitor:
    """Per-frame checks hooked into Pipeline; collects violations instead of raising."""

    def __init__(self, nn_budget=100):
        self.nn_budget = nn_budget
        self.last_frame = None
        self.frames = 0
        self.violations = []

    def __call__(self, pipe, out):
        self.frames += 1
        f = out.frame
        if self.last_frame is not None and f <= self.last_frame:
            self.violations.append((f, "frame order"))
        self.last_frame = f
        labels = [e.identity.label for e in out.entries if e.identity.is_known]
        if len(labels) != len(set(labels)):
            self.violations.append((f, f"duplicate labels {sorted(labels)}"))
        for t in pipe.tracker.tracks:
            if len(t.appearance_gallery) > self.nn_budget:
                self.violations.append((f, f"gallery {len(t.appearance_gallery)} on track {t.track_id}"))
            if t.kstate is not None:
                p = t.kstate.cov
                if not np.array_equal(p, p.T):
                    self.violations.append((f, f"asymmetric covariance on track {t.track_id}"))
                elif np.linalg.eigvalsh(p).min() < -1e-9 * max(1.0, np.abs(p).max()):
                    self.violations.append((f, f"covariance not PSD on track {t.track_id}"))


def record(number, ok, detail):
    line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
