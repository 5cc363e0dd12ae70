import numpy as np
import pytest

from causalrem.core import EventStream


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_stream():
    events = [(0.5, "a", "b"), (1.0, "b", "a"), (1.7, "a", "b"), (2.2, "c", "a"), (3.0, "a", "b")]
    return EventStream.from_events(events, ["a", "b", "c"], horizon=4.0)
