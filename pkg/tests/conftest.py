from pathlib import Path

import pytest

from gcbridge.bridge import Bridge, ManagedValue
from gcbridge.counted_heap import CountedHeap
from gcbridge.monitor import RefMonitor
from gcbridge.scenario.world import World
from gcbridge.traced_heap import TracedHeap

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def heap():
    mon = RefMonitor()
    h = CountedHeap(mon)
    mon.refcount_source = h.refcount
    return h


@pytest.fixture
def traced():
    return TracedHeap()


@pytest.fixture
def world():
    return World()


def managed(world, type_name="list", gc=True, text="[]"):
    return world.new_managed(type_name, gc, text)


@pytest.fixture
def bridge_parts():
    mon = RefMonitor()
    counted = CountedHeap(mon)
    traced = TracedHeap()
    return counted, traced, Bridge(counted, traced, mon)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
