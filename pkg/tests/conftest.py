import numpy as np
import pytest

from gnl.model import ModelConfig, init_model

ACCEPTANCE_LINES = []


@pytest.fixture
def tiny_bundle():
    return init_model(ModelConfig(block_channels=(4, 8, 16), bottleneck_channels=8, seed=3))


@pytest.fixture
def tiny_bundle64():
    return init_model(ModelConfig(block_channels=(4, 8, 16), bottleneck_channels=8, seed=3)).astype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_images(n, size=32, seed=0, channels=3):
    r = np.random.default_rng(seed)
    return r.uniform(0, 1, size=(n, channels, size, size)).astype(np.float32)


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion (echoed in the terminal summary)."""
    def record(number, name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}" + (f" | {detail}" if detail else "")
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
