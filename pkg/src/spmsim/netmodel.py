"""Requests, the generic router primitive and per-hop timing.

A router is an all-to-all switchbox with configurable ports, per-output
base latency, bandwidth and round-robin arbitration. Each hop a request
takes does the same thing:

    port      = route(addr)
    L         = base_latency(port) + arbitration_delay(port)
    D         = transfer_duration(port)
    latency  += L
    duration  = max(duration, D)
    update state, dispatch

Asynchronous routers buffer requests in per-input queues and arbitrate in
their own tick; synchronous routers process a request inside the caller's
handler and model congestion only through per-output ``busy_until``
bookkeeping.
"""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass
from enum import Enum
from itertools import count
from typing import Callable

from .engine import SimulationError

__all__ = [
    "Kind",
    "Request",
    "Response",
    "RouterSpec",
    "RoutingError",
    "InPort",
    "Router",
    "SyncRouter",
    "dispatch_sync",
    "dispatch_async",
    "transfer_duration",
    "round_robin_order",
    "xy_route",
    "NORTH",
    "EAST",
    "SOUTH",
    "WEST",
]

WORD_BYTES = 4


class Kind(str, Enum):
    READ = "read"
    WRITE = "write"
    ATOMIC = "atomic"

    @classmethod
    def parse(cls, s: str) -> "Kind":
        s = s.strip().upper()
        return {"R": cls.READ, "W": cls.WRITE, "A": cls.ATOMIC,
                "READ": cls.READ, "WRITE": cls.WRITE, "ATOMIC": cls.ATOMIC}[s]


class RoutingError(SimulationError):
    def __init__(self, router: str, addr: int, reason: str = "undecodable address"):
        self.router = router
        self.addr = addr
        super().__init__(f"{router}: {reason} 0x{addr:08x}")


class Request:
    """A word or burst memory operation travelling on the request network.

    ``latency`` accumulates base plus arbitration delay per hop and
    ``duration`` holds the largest serialization time seen so far.
    """

    __slots__ = (
        "id", "initiator", "addr", "kind", "size", "latency", "duration",
        "issued_at", "path", "channel", "wire_bytes", "target",
        "served_at", "one_way", "completed_at", "response",
    )

    _ids = count()

    def __init__(self, initiator: int, addr: int, kind: Kind = Kind.READ,
                 size: int = WORD_BYTES, issued_at: int = 0, id: int | None = None,
                 trace: bool = False):
        if size < 1:
            raise ValueError("request size must be >= 1 byte")
        self.id = next(Request._ids) if id is None else id
        self.initiator = initiator
        self.addr = addr
        self.kind = kind
        self.size = size
        self.latency = 0
        self.duration = 0
        self.issued_at = issued_at
        self.path = [] if trace else None
        self.channel = -1
        # reads and atomics carry a header word on the request network
        self.wire_bytes = size if kind is Kind.WRITE else WORD_BYTES
        self.target = None  # decoded (group, tile, bank, offset)
        self.served_at = -1
        self.one_way = -1
        self.completed_at = -1
        self.response = None  # kept only when the PE records completed requests

    def __repr__(self):
        return (f"Request(id={self.id}, pe={self.initiator}, addr=0x{self.addr:x}, "
                f"{self.kind.value}, size={self.size}, latency={self.latency}, "
                f"duration={self.duration})")


class Response:
    """Reply to a request, travelling back to the initiator."""

    __slots__ = ("request", "latency", "duration", "path", "wire_bytes", "created_at")

    def __init__(self, request: Request, created_at: int):
        self.request = request
        self.latency = 0
        self.duration = 0
        self.path = [] if request.path is not None else None
        self.wire_bytes = request.size if request.kind is Kind.READ else WORD_BYTES
        self.created_at = created_at

    @property
    def id(self) -> int:
        return self.request.id

    @property
    def channel(self) -> int:
        return self.request.channel

    def __repr__(self):
        return f"Response(id={self.id}, latency={self.latency}, duration={self.duration})"


@dataclass(frozen=True)
class RouterSpec:
    inputs: int
    outputs: int
    bandwidth: int = 4
    base_latency: int = 1
    routing: str = "interleaved-address"
    arbitration: str = "round-robin"
    dispatch_mode: str = "asynchronous"
    queue_capacity: int = 2
    rr_update: str = "grant"

    def __post_init__(self):
        for name in ("inputs", "outputs", "bandwidth", "queue_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"RouterSpec.{name} must be >= 1")
        if self.base_latency < 0:
            raise ValueError("RouterSpec.base_latency must be >= 0")
        if self.routing not in ("interleaved-address", "xy-mesh", "fixed-port"):
            raise ValueError(f"unknown routing policy {self.routing!r}")
        if self.arbitration != "round-robin":
            raise ValueError(f"unknown arbitration policy {self.arbitration!r}")
        if self.dispatch_mode not in ("synchronous", "asynchronous"):
            raise ValueError(f"unknown dispatch mode {self.dispatch_mode!r}")
        if self.rr_update not in ("grant", "cycle"):
            raise ValueError(f"unknown rr_update {self.rr_update!r}")


def transfer_duration(wire_bytes: int, bandwidth: int) -> int:
    """Cycles to serialize ``wire_bytes`` over a ``bandwidth`` bytes/cycle port."""
    if wire_bytes < 1:
        raise ValueError("payload must be >= 1 byte")
    return -(-wire_bytes // bandwidth)


def round_robin_order(candidates, pointer: int, n: int) -> list[int]:
    """Grant priority for ``candidates``: rotation starts after ``pointer``."""
    return sorted(candidates, key=lambda i: (i - pointer - 1) % n)


NORTH, EAST, SOUTH, WEST = 0, 1, 2, 3
_OPPOSITE = {NORTH: SOUTH, SOUTH: NORTH, EAST: WEST, WEST: EAST}


def xy_route(here: tuple[int, int], dest: tuple[int, int]) -> int | None:
    """Dimension-order (X then Y) output direction, ``None`` at the destination."""
    (x, y), (dx, dy) = here, dest
    if dx > x:
        return EAST
    if dx < x:
        return WEST
    if dy > y:
        return NORTH
    if dy < y:
        return SOUTH
    return None


class InPort:
    """A credit-controlled input queue.

    Credits are taken when an upstream component dispatches into the port
    and returned when the owner pops the entry. A returned credit becomes
    visible one cycle later, which makes the result independent of the
    order in which components run within a cycle.
    """

    __slots__ = ("owner", "index", "capacity", "held", "queue", "_releases",
                 "max_occ", "occ_sum", "occ_samples", "hist", "name", "bounded")

    def __init__(self, owner, index: int, capacity: int, name: str = "", bounded: bool = True):
        self.owner = owner
        self.index = index
        self.capacity = capacity
        self.held = 0
        self.queue: list[list] = []  # [arrival, packet, out]
        self._releases: deque[int] = deque()
        self.max_occ = 0
        self.occ_sum = 0
        self.occ_samples = 0
        self.hist: dict[int, int] = {}
        self.name = name
        self.bounded = bounded

    def can_accept(self, t: int, pkt=None) -> bool:
        rel = self._releases
        while rel and rel[0] < t:
            rel.popleft()
            self.held -= 1
        return not self.bounded or self.held < self.capacity

    def _sample(self) -> None:
        n = len(self.queue)
        if n > self.max_occ:
            self.max_occ = n
        self.occ_sum += n
        self.occ_samples += 1
        self.hist[n] = self.hist.get(n, 0) + 1

    def accept(self, pkt, arrival: int, t: int) -> None:
        """Enqueue ``pkt`` arriving at cycle ``arrival``; dispatch happens at ``t``."""
        if self.bounded and not self.can_accept(t, pkt):
            raise SimulationError(f"{self.name}: enqueue without credit")
        self.held += 1
        route = self.owner.route(pkt)
        entry = [arrival, pkt, route]
        q = self.queue
        if not q or q[-1][0] <= arrival:
            q.append(entry)
        else:
            keys = [e[0] for e in q]
            q.insert(bisect.bisect_right(keys, arrival), entry)
        self._sample()
        sim = self.owner.sim
        if sim.tracer is not None:
            sim.tracer.record(arrival, self.owner.name, pkt.id, "enqueue")
        sim.wake(self.owner, arrival)

    def pop(self, t: int):
        entry = self.queue.pop(0)
        self._releases.append(t)
        self._sample()
        return entry


class _RouterBase:
    """State and counters shared by sync and async routers."""

    def __init__(self, name: str, spec: RouterSpec, base_latency: list[int] | None = None):
        self.name = name
        self.spec = spec
        self.id = -1
        self.sim = None
        n_out = spec.outputs
        self.base = list(base_latency) if base_latency is not None else [spec.base_latency] * n_out
        if len(self.base) != n_out:
            raise ValueError(f"{name}: base latency list must have {n_out} entries")
        self.bandwidth = spec.bandwidth
        self.busy_until = [0] * n_out
        self.rr_pointer = [spec.inputs - 1] * n_out
        self.busy_cycles = [0] * n_out
        self.transfers = [0] * n_out
        self.conflicts = [0] * n_out
        self.blocked = [0] * n_out
        self.arb_wait = [0] * n_out
        self.peak_conflicts = 0
        self.window_busy: dict[int, int] = {}
        self.route_fn: Callable | None = None
        self.target_fn: Callable | None = None
        self.on_grant: Callable | None = None

    def route(self, pkt) -> int:
        """Output port for ``pkt`` under this router's routing policy."""
        try:
            out = self.route_fn(pkt)
        except (AttributeError, IndexError, KeyError, TypeError) as exc:
            raise RoutingError(self.name, getattr(pkt, "addr", -1), f"cannot route ({exc})") from None
        if out is None or not 0 <= out < self.spec.outputs:
            raise RoutingError(self.name, getattr(pkt, "addr", -1), f"no output port {out!r} for")
        return out

    def transfer_duration(self, pkt) -> int:
        return -(-pkt.wire_bytes // self.bandwidth)

    def _account_busy(self, t: int, d: int) -> None:
        w = self.sim.window
        wb = self.window_busy
        end = t + d
        while t < end:
            k = t // w
            stop = min(end, (k + 1) * w)
            wb[k] = wb.get(k, 0) + stop - t
            t = stop

    def _commit(self, pkt, out: int, arrival: int, grant: int) -> int:
        """Apply the per-hop timing update; return the next-hop arrival cycle."""
        base = self.base[out]
        arb = grant - arrival
        d = -(-pkt.wire_bytes // self.bandwidth)
        pkt.latency += base + arb
        if d > pkt.duration:
            pkt.duration = d
        self.busy_until[out] = grant + d
        self.busy_cycles[out] += d
        self.transfers[out] += 1
        self.arb_wait[out] += arb
        self._account_busy(grant, d)
        if pkt.path is not None:
            pkt.path.append((self.name, out, arrival, grant, base, arb, d))
        tr = self.sim.tracer
        if tr is not None:
            tr.record(grant, self.name, pkt.id, "arbitrate")
            tr.record(grant, self.name, pkt.id, "dispatch")
        if self.on_grant is not None:
            self.on_grant(out, arb)
        return grant + base

    def counters(self) -> dict:
        return {
            "busy_cycles": list(self.busy_cycles),
            "transfers": list(self.transfers),
            "conflicts": list(self.conflicts),
            "blocked": list(self.blocked),
            "arb_wait": list(self.arb_wait),
            "peak_cycle_conflicts": self.peak_conflicts,
        }


class Router(_RouterBase):
    """Asynchronous router: queued inputs, arbitration once per cycle.

    ``route_fn(pkt) -> out`` decides the output port. ``target_fn(out, pkt, t)``
    returns the downstream port object (anything with ``can_accept`` and
    ``accept``), which may depend on the cycle (remapping).
    """

    def __init__(self, name: str, spec: RouterSpec, base_latency: list[int] | None = None,
                 input_capacity: list[int] | None = None):
        super().__init__(name, spec, base_latency)
        caps = input_capacity or [spec.queue_capacity] * spec.inputs
        self.inputs = [InPort(self, i, caps[i], f"{name}.in{i}") for i in range(spec.inputs)]

    def pending(self) -> int:
        return sum(len(p.queue) for p in self.inputs)

    def arbitration_order(self, out: int, candidates: list[int], t: int) -> list[int]:
        n = self.spec.inputs
        if self.spec.rr_update == "cycle":
            return round_robin_order(candidates, (t - 1) % n, n)
        return round_robin_order(candidates, self.rr_pointer[out], n)

    def tick(self, t: int) -> None:
        by_out: dict[int, list[int]] = {}
        earliest = None
        for i, port in enumerate(self.inputs):
            q = port.queue
            if q:
                a = q[0][0]
                if a <= t:
                    by_out.setdefault(q[0][2], []).append(i)
                elif earliest is None or a < earliest:
                    earliest = a
        if not by_out:
            if earliest is not None:
                self.sim.wake(self, earliest)
            return
        cycle_conflicts = 0
        inputs = self.inputs
        for out in sorted(by_out):
            cands = by_out[out]
            if len(cands) > 1:
                self.conflicts[out] += 1
                cycle_conflicts += len(cands) - 1
            if self.busy_until[out] > t:
                self.blocked[out] += 1
                continue
            winner = cands[0] if len(cands) == 1 else self.arbitration_order(out, cands, t)[0]
            pkt = inputs[winner].queue[0][1]
            target = self.target_fn(out, pkt, t)
            if not target.can_accept(t, pkt):
                self.blocked[out] += 1
                continue
            arrival = inputs[winner].pop(t)[0]
            self.rr_pointer[out] = winner
            nxt = self._commit(pkt, out, arrival, t)
            target.accept(pkt, nxt, t)
        if cycle_conflicts > self.peak_conflicts:
            self.peak_conflicts = cycle_conflicts
        # re-arm while anything is queued
        for port in inputs:
            if port.queue:
                a = port.queue[0][0]
                if earliest is None or a < earliest:
                    earliest = a
        if earliest is not None:
            self.sim.wake(self, max(t + 1, earliest))

    def counters(self) -> dict:
        c = super().counters()
        c["queues"] = [
            {"max": p.max_occ, "sum": p.occ_sum, "samples": p.occ_samples,
             "histogram": {str(k): v for k, v in sorted(p.hist.items())}}
            for p in self.inputs
        ]
        return c


class SyncRouter(_RouterBase):
    """Synchronous router: a request is carried through in the caller's handler.

    Congestion is modeled only by serializing on ``busy_until``: the grant
    cycle is ``max(arrival, busy_until[out])``. A chain of sync routers is
    walked in one go; it is only entered when its terminal (an async port or
    an endpoint) has room.
    """

    def plan(self, pkt, t: int):
        chain = []
        node = self
        while isinstance(node, SyncRouter):
            out = node.route(pkt)
            chain.append((node, out))
            node = node.target_fn(out, pkt, t)
        return chain, node

    def process_hop(self, pkt, arrival: int, out: int | None = None) -> int:
        """Apply this hop's timing; return the next-hop arrival cycle."""
        if out is None:
            out = self.route(pkt)
        grant = max(arrival, self.busy_until[out])
        if grant > arrival:
            self.conflicts[out] += 1
            self.blocked[out] += grant - arrival
        tr = self.sim.tracer
        if tr is not None:
            tr.record(arrival, self.name, pkt.id, "enqueue")
        return self._commit(pkt, out, arrival, grant)

    def can_accept(self, t: int, pkt=None) -> bool:
        _, term = self.plan(pkt, t)
        return term.can_accept(t, pkt)

    def accept(self, pkt, arrival: int, t: int) -> None:
        dispatch_sync(self, pkt, arrival, t)


def dispatch_sync(first: SyncRouter, pkt, arrival: int, t: int) -> bool:
    """Walk ``pkt`` through a chain of sync routers in the current handler.

    Returns False, with no state touched, when the chain's terminal has no
    room.
    """
    chain, term = first.plan(pkt, t)
    if not term.can_accept(t, pkt):
        return False
    a = arrival
    for node, out in chain:
        a = node.process_hop(pkt, a, out)
    term.accept(pkt, a, t)
    return True


def dispatch_async(target, pkt, arrival: int, t: int) -> bool:
    """Hand ``pkt`` to a buffered downstream port, respecting its credits."""
    if not target.can_accept(t, pkt):
        return False
    target.accept(pkt, arrival, t)
    return True
