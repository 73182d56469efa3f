import sys
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from windpower.pipeline import RawRecord, TurbineState

T0 = datetime(2020, 3, 1, tzinfo=timezone.utc)


def record(k, speed=5.0, direction=90.0, temperature=10.0, power=500.0, state=TurbineState.FULL_OPERATION,
           turbine="T1", t0=T0):
    """Record at the ``k``-th 10-minute step after ``t0``."""
    return RawRecord(t0 + timedelta(minutes=10 * k), turbine, speed, direction, temperature, power, state)


def window(start_step, speeds, directions=None, powers=None, turbine="T1"):
    directions = directions if directions is not None else [90.0] * len(speeds)
    powers = powers if powers is not None else [100.0] * len(speeds)
    return [record(start_step + i, s, d, 10.0, p, turbine=turbine)
            for i, (s, d, p) in enumerate(zip(speeds, directions, powers))]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
