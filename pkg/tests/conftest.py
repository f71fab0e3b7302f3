import numpy as np
import pytest

import clusterval.engine.protocol as protocol
from clusterval.core import FeatureDataset


class _Tripwire:
    step1_active = False
    reads_during_step1 = 0
    instrumented = 0


TRIPWIRE = _Tripwire()
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class TripwireDataset(FeatureDataset):
    """Feature dataset that counts value reads made while Step 1 runs."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.reads = 0
        self.reads_during_step1 = 0
        TRIPWIRE.instrumented += 1

    @property
    def values(self):
        self.reads += 1
        if TRIPWIRE.step1_active:
            self.reads_during_step1 += 1
            TRIPWIRE.reads_during_step1 += 1
        return self._values


@pytest.fixture(scope="session", autouse=True)
def step1_tripwire():
    """Flag every select_method call reached through the protocol, for the
    whole session, and fail the session if an instrumented validation
    dataset was read during one."""
    original = protocol.select_method

    def guarded(*args, **kwargs):
        TRIPWIRE.step1_active = True
        try:
            return original(*args, **kwargs)
        finally:
            TRIPWIRE.step1_active = False

    protocol.select_method = guarded
    yield TRIPWIRE
    protocol.select_method = original
    assert TRIPWIRE.reads_during_step1 == 0, "validation data was read during Step 1"


def two_blobs(n=200, sep=5.0, seed=0, p=2):
    rng = np.random.default_rng(seed)
    half = n // 2
    x = np.vstack([rng.normal(-sep, 1, (half, p)), rng.normal(sep, 1, (n - half, p))])
    truth = [1] * half + [2] * (n - half)
    return FeatureDataset(x), truth


@pytest.fixture
def blobs():
    return two_blobs()[0]


@pytest.fixture
def line4():
    return FeatureDataset(np.array([[0.0], [1.0], [10.0], [11.0]]))
