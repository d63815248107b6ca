"""Deterministic discrete-event kernel.

Events carry an absolute cycle (``fire_at``) and a global insertion
sequence number. The queue pops strictly in ``(fire_at, sequence)`` order,
so events scheduled for the same cycle run in the order they were
scheduled.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable

__all__ = [
    "Event",
    "EventQueue",
    "Engine",
    "SimulationError",
    "SchedulingError",
    "CycleBudgetExceeded",
    "RunOutcome",
]


class SimulationError(Exception):
    """Base class for errors raised while building or running a model."""


class SchedulingError(SimulationError):
    pass


class CycleBudgetExceeded(SimulationError):
    """Raised when a run does not finish within its cycle budget.

    ``census`` maps component names to their outstanding request count.
    """

    def __init__(self, limit: int, now: int, census: dict[str, int] | None = None):
        self.limit = limit
        self.now = now
        self.census = dict(census or {})
        busy = {k: v for k, v in self.census.items() if v}
        super().__init__(
            f"cycle budget {limit} exceeded at cycle {now}; "
            f"{sum(busy.values())} outstanding requests in {len(busy)} components"
        )


@dataclass(order=True)
class Event:
    fire_at: int
    sequence: int
    target: Hashable = field(compare=False)
    payload: Any = field(compare=False, default=None)
    cancelled: bool = field(compare=False, default=False)

    def cancel(self) -> None:
        self.cancelled = True


class EventQueue:
    """Priority queue of events keyed by ``(fire_at, sequence)``."""

    def __init__(self):
        self._heap: list[tuple[int, int, Event]] = []
        self._sequence = 0
        self._live = 0

    def __len__(self) -> int:
        return self._live

    def push(self, fire_at: int, target: Hashable, payload: Any = None) -> Event:
        ev = Event(fire_at, self._sequence, target, payload)
        self._sequence += 1
        heapq.heappush(self._heap, (fire_at, ev.sequence, ev))
        self._live += 1
        return ev

    def _drop_cancelled(self) -> None:
        heap = self._heap
        while heap and heap[0][2].cancelled:
            heapq.heappop(heap)

    def peek_time(self) -> int | None:
        self._drop_cancelled()
        return self._heap[0][0] if self._heap else None

    def pop(self) -> Event:
        self._drop_cancelled()
        if not self._heap:
            raise IndexError("pop from empty event queue")
        self._live -= 1
        return heapq.heappop(self._heap)[2]

    def cancel(self, ev: Event) -> None:
        if not ev.cancelled:
            ev.cancel()
            self._live -= 1


@dataclass(frozen=True)
class RunOutcome:
    status: str  # "finished" | "cycle-budget-exceeded"
    cycles: int
    census: dict = field(default_factory=dict)

    @property
    def finished(self) -> bool:
        return self.status == "finished"


class Engine:
    """Single clock-domain event engine.

    Handlers are registered per target and called as
    ``handler(engine, payload)``. Handlers may schedule further events with
    any non-negative delay.
    """

    def __init__(self):
        self.queue = EventQueue()
        self.now = 0
        self.finished = False
        self._handlers: dict[Hashable, Callable[[Engine, Any], None]] = {}
        self.events_processed = 0

    def register(self, target: Hashable, handler: Callable[["Engine", Any], None]) -> None:
        self._handlers[target] = handler

    def schedule(self, target: Hashable, payload: Any = None, delay: int = 0) -> Event:
        if self.finished:
            raise SchedulingError("cannot schedule events after the run has completed")
        if delay < 0:
            raise SchedulingError(f"negative delay {delay}")
        if target not in self._handlers:
            raise SchedulingError(f"no handler registered for target {target!r}")
        return self.queue.push(self.now + int(delay), target, payload)

    def cancel(self, ev: Event) -> None:
        self.queue.cancel(ev)

    def step(self) -> Event:
        ev = self.queue.pop()
        assert ev.fire_at >= self.now, "event queue went back in time"
        self.now = ev.fire_at
        self._handlers[ev.target](self, ev.payload)
        self.events_processed += 1
        return ev

    def run_until(self, limit: int) -> int:
        """Process events with ``fire_at <= limit``; return the current time."""
        while True:
            t = self.queue.peek_time()
            if t is None or t > limit:
                break
            self.step()
        return self.now

    def run_to_completion(
        self,
        max_cycles: int,
        quiescent: Callable[[], bool] = lambda: True,
        census: Callable[[], dict] = dict,
    ) -> RunOutcome:
        if max_cycles <= 0:
            raise ValueError("max_cycles must be positive")
        self.run_until(max_cycles)
        if self.queue.peek_time() is None and quiescent():
            self.finished = True
            return RunOutcome("finished", self.now)
        return RunOutcome("cycle-budget-exceeded", self.now, census())
