import pytest

from spmsim import TopologyConfig


class Bench:
    """Minimal stand-in for the simulation driver, for unit-level router tests.

    Components are ticked every cycle in the order given; wake-ups are ignored.
    """

    def __init__(self, trace=False):
        self.tracer = None
        self.window = 64
        self.trace_paths = trace
        self._ids = 0

    def wake(self, comp, t):
        pass

    def new_request_id(self):
        self._ids += 1
        return self._ids - 1


class Sink:
    """Downstream port with unlimited room that logs deliveries."""

    def __init__(self):
        self.got = []

    def can_accept(self, t, pkt=None):
        return True

    def accept(self, pkt, arrival, t):
        self.got.append((pkt, arrival, t))


@pytest.fixture
def bench():
    return Bench()


@pytest.fixture
def small_cfg():
    return TopologyConfig(mesh_x=2, mesh_y=2, tiles_per_group=2, pes_per_tile=2, banks_per_tile=4)
