import numpy as np
import pytest


def smooth_images(seed, batch=2, channels=3, size=8):
    """Low-frequency images in (0.1, 0.9): bilinear-sampling gradients stay well conditioned."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    out = np.empty((batch, channels, size, size), dtype=np.float32)
    for b in range(batch):
        for c in range(channels):
            fx, fy, ph = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0, 2 * np.pi)
            out[b, c] = 0.5 + 0.35 * np.sin(fx * np.pi * xx + fy * np.pi * yy + ph)
    return out


@pytest.fixture
def images():
    return smooth_images


# acceptance verdicts, printed once at the end of the session
VERDICTS = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS):
        ok, detail = VERDICTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
