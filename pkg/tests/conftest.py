import numpy as np
import pytest

from shiftgen.core import N_SLOTS, AgentDayPair
from shiftgen.synthgen import generate_corpus


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(120, "shift_only", seed=11)


@pytest.fixture(scope="session")
def population_corpus():
    return generate_corpus(300, "population", seed=11)


def make_pair(day1, day2, mask1=None, mask2=None, agent_id="a0"):
    """Build a pair, zeroing grid slots wherever a mask says unobserved."""
    day1 = np.asarray(day1, dtype=np.int16).copy()
    day2 = np.asarray(day2, dtype=np.int16).copy()
    mask1 = (np.ones(N_SLOTS, np.int16) if mask1 is None
             else np.asarray(mask1, dtype=np.int16))
    mask2 = (np.ones(N_SLOTS, np.int16) if mask2 is None
             else np.asarray(mask2, dtype=np.int16))
    day1[mask1 == 0] = 0
    day2[mask2 == 0] = 0
    return AgentDayPair(agent_id=agent_id, day1=day1, day2=day2,
                        mask1=mask1, mask2=mask2)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
