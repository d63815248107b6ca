"""Traffic-generating processing elements, SPM banks and barriers.

PEs do not execute instructions. Each one walks a deterministic stream of
operations produced by a :class:`TrafficPattern` (or read from a trace file)
and issues them subject to an outstanding-transaction limit. Every cycle of
a PE is attributed to exactly one of ``active``, ``lsu_full``, ``load_use``,
``barrier`` or ``idle``.
"""

from __future__ import annotations

import csv
import heapq
import io
import os
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, NamedTuple

from .engine import SimulationError
from .netmodel import Kind, Request, Response, dispatch_sync
from .rng import SplitMix64

__all__ = [
    "Op",
    "TrafficPattern",
    "Workload",
    "PEContext",
    "PE",
    "Bank",
    "Barriers",
    "TraceFormatError",
    "next_request",
    "read_trace",
    "write_trace",
    "STALL_CATEGORIES",
]

ACTIVE, LSU_FULL, LOAD_USE, BARRIER, IDLE = "active", "lsu_full", "load_use", "barrier", "idle"
STALL_CATEGORIES = (ACTIVE, LSU_FULL, LOAD_USE, BARRIER, IDLE)

DEP_NONE, DEP_PREV, DEP_ALL = 0, 1, 2

PATTERN_KINDS = (
    "uniform-random", "local-tile", "local-group", "remote-group",
    "hotspot", "strided", "bursty",
)


class TraceFormatError(SimulationError):
    pass


class Op(NamedTuple):
    kind: Kind | None
    addr: int = 0
    size: int = 4
    dep: int = DEP_NONE
    think: int = 0
    ready: int = 0
    barrier: int = -1  # barrier index, or -1 for memory operations


class PEContext(NamedTuple):
    id: int
    group: int
    tile: int
    local: int  # index within the tile
    rank: int   # index within the group


@dataclass(frozen=True)
class TrafficPattern:
    """Synthetic traffic description for one PE.

    ``count`` is the number of memory requests per PE. Bursty patterns issue
    ``burst_length`` sequential words from a shared block, one block per
    tile, visiting blocks in order starting at ``phase_offset * rank``.
    """

    kind: str = "uniform-random"
    count: int = 100
    read_fraction: float = 1.0
    atomic_fraction: float = 0.0
    size: int = 4
    dependence_fraction: float = 0.0
    think_cycles: int = 0
    hot_groups: tuple[int, ...] = (0,)
    skew: float = 0.8
    stride: int = 4
    burst_length: int = 16
    burst_gap: int = 0
    phase_offset: int = 0
    start_offset: int = 0
    barrier_every: int = 0

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"unknown pattern kind {self.kind!r}; expected one of {PATTERN_KINDS}")
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if not 0.0 <= self.read_fraction <= 1.0 or not 0.0 <= self.atomic_fraction <= 1.0:
            raise ValueError("read/atomic fractions must lie in [0, 1]")
        if self.size < 1:
            raise ValueError("size must be >= 1")
        if not 0.0 <= self.skew <= 1.0:
            raise ValueError("skew must lie in [0, 1]")
        if self.burst_length < 1:
            raise ValueError("burst_length must be >= 1")
        object.__setattr__(self, "hot_groups", tuple(self.hot_groups))

    @classmethod
    def from_dict(cls, d: dict) -> "TrafficPattern":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown traffic pattern keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    def steps(self) -> int:
        if self.barrier_every:
            return self.count + self.count // self.barrier_every
        return self.count


def _pick_kind(rng: SplitMix64, pattern: TrafficPattern) -> Kind:
    u = rng.random()
    if u < pattern.atomic_fraction:
        return Kind.ATOMIC
    if u < pattern.atomic_fraction + (1.0 - pattern.atomic_fraction) * pattern.read_fraction:
        return Kind.READ
    return Kind.WRITE


def next_request(pattern: TrafficPattern, pe: PEContext, step: int, seed: int, amap) -> Op | None:
    """Operation number ``step`` of ``pe``; ``None`` once the pattern is exhausted.

    Pure in ``(pattern, pe, step, seed)``.
    """
    if step < 0:
        raise ValueError("step must be >= 0")
    if step >= pattern.steps():
        return None
    n = step
    if pattern.barrier_every:
        period = pattern.barrier_every + 1
        if step % period == pattern.barrier_every:
            return Op(None, barrier=step // period)
        n = step - step // period
    rng = SplitMix64.keyed(seed, pe.id, n)
    kind = _pick_kind(rng, pattern)
    dep, think = DEP_NONE, 0
    if pattern.dependence_fraction and n > 0 and rng.random() < pattern.dependence_fraction:
        dep, think = DEP_PREV, pattern.think_cycles
    ready = 0
    if n == 0 and pattern.start_offset:
        ready = SplitMix64.keyed(seed, pe.id, -1).below(pattern.start_offset + 1)
    a = amap
    kind_name = pattern.kind
    if kind_name == "uniform-random":
        addr = rng.below(a.total_words) * a.word_bytes
    elif kind_name == "local-tile":
        addr = a.compose(pe.group, pe.tile, rng.below(a.banks_per_tile), rng.below(a.bank_words))
    elif kind_name == "local-group":
        tile = pe.tile
        if a.tiles_per_group > 1:
            tile = rng.below(a.tiles_per_group - 1)
            tile += tile >= pe.tile
        addr = a.compose(pe.group, tile, rng.below(a.banks_per_tile), rng.below(a.bank_words))
    elif kind_name == "remote-group":
        group = pe.group
        if a.groups > 1:
            group = rng.below(a.groups - 1)
            group += group >= pe.group
        addr = a.compose(group, rng.below(a.tiles_per_group), rng.below(a.banks_per_tile),
                         rng.below(a.bank_words))
    elif kind_name == "hotspot":
        hot = pattern.hot_groups
        cold = [g for g in range(a.groups) if g not in hot]
        if not cold or rng.random() < pattern.skew:
            group = hot[rng.below(len(hot))]
        else:
            group = cold[rng.below(len(cold))]
        addr = a.compose(group, rng.below(a.tiles_per_group), rng.below(a.banks_per_tile),
                         rng.below(a.bank_words))
    elif kind_name == "strided":
        base = pe.id * a.word_bytes
        addr = (base + n * pattern.stride) % a.size_bytes
        addr -= addr % a.word_bytes
    else:  # bursty
        L = pattern.burst_length
        b, i = divmod(n, L)
        tile = (b + pattern.phase_offset * pe.rank) % a.tiles_per_group
        w = i % (a.banks_per_tile * a.bank_words)
        addr = a.compose(pe.group, tile, w % a.banks_per_tile, w // a.banks_per_tile)
        if b > 0 and i == 0:
            dep, think = DEP_ALL, pattern.burst_gap
        else:
            dep, think = DEP_NONE, 0
    size = a.word_bytes if kind is Kind.ATOMIC else pattern.size
    return Op(kind, addr, size, dep, think, ready)


# trace files

TRACE_COLUMNS = ("ready_cycle", "pe_id", "op", "addr", "size_bytes")
_OP_CODES = {Kind.READ: "R", Kind.WRITE: "W", Kind.ATOMIC: "A"}


def read_trace(source, amap=None) -> dict[int, list[Op]]:
    """Parse a trace CSV into per-PE operation lists.

    ``source`` is a path or a text stream. Lines starting with ``#`` are
    comments; the first non-comment line is the header. Addresses are
    hexadecimal. When ``amap`` is given every address is checked.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return read_trace(fh, amap)
    lines = [ln for ln in source if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        return {}
    reader = csv.reader(lines, skipinitialspace=True)
    header = [h.strip() for h in next(reader)]
    if tuple(header) != TRACE_COLUMNS:
        raise TraceFormatError(f"bad trace header {header}; expected {list(TRACE_COLUMNS)}")
    ops: dict[int, list[Op]] = {}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 5:
            raise TraceFormatError(f"trace line {lineno}: expected 5 columns, got {len(row)}")
        try:
            ready = int(row[0])
            pe = int(row[1])
            kind = Kind.parse(row[2])
            addr = int(row[3].strip(), 16)
            size = int(row[4])
        except (ValueError, KeyError) as exc:
            raise TraceFormatError(f"trace line {lineno}: {exc}") from None
        if ready < 0 or pe < 0 or size < 1:
            raise TraceFormatError(f"trace line {lineno}: negative cycle/pe or empty size")
        if amap is not None:
            amap.map(addr)
        ops.setdefault(pe, []).append(Op(kind, addr, size, DEP_NONE, 0, ready))
    for lst in ops.values():
        lst.sort(key=lambda o: o.ready)
    return ops


def write_trace(rows: Iterable[tuple[int, int, Kind, int, int]], dest=None) -> str:
    buf = io.StringIO()
    buf.write(",".join(TRACE_COLUMNS) + "\n")
    for ready, pe, kind, addr, size in rows:
        buf.write(f"{ready},{pe},{_OP_CODES[kind]},0x{addr:08X},{size}\n")
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w") as fh:
            fh.write(text)
    return text


@dataclass
class Workload:
    """Assignment of traffic to PEs.

    ``patterns`` is a list of ``(selector, pattern)`` pairs; the first pair
    whose selector matches a PE wins. A selector is a dict that may restrict
    ``tiles`` (tile index within the group), ``groups`` or ``pes``. PEs that
    match nothing issue no traffic. ``trace`` overrides patterns for the PEs
    it mentions.
    """

    patterns: list = field(default_factory=list)
    trace: dict[int, list[Op]] | None = None
    name: str = "custom"

    @classmethod
    def single(cls, pattern: TrafficPattern, name: str | None = None) -> "Workload":
        return cls([({}, pattern)], name=name or pattern.kind)

    @classmethod
    def from_trace(cls, source, amap=None, name: str = "trace") -> "Workload":
        return cls([], read_trace(source, amap), name=name)

    @classmethod
    def from_dict(cls, d: dict) -> "Workload":
        unknown = set(d) - {"name", "patterns"}
        if unknown:
            raise ValueError(f"unknown workload keys: {sorted(unknown)}")
        pats = []
        for entry in d.get("patterns", []):
            entry = dict(entry)
            sel = {k: entry.pop(k) for k in ("tiles", "groups", "pes") if k in entry}
            pats.append((sel, TrafficPattern.from_dict(entry)))
        return cls(pats, name=d.get("name", "custom"))

    def to_dict(self) -> dict:
        out = {"name": self.name, "patterns": [dict(sel, **p.to_dict()) for sel, p in self.patterns]}
        if self.trace is not None:
            out["trace"] = {str(pe): [[o.ready, o.kind.value, o.addr, o.size] for o in ops]
                            for pe, ops in sorted(self.trace.items())}
        return out

    def pattern_for(self, pe: PEContext) -> TrafficPattern | None:
        for sel, pat in self.patterns:
            if "tiles" in sel and pe.tile not in sel["tiles"]:
                continue
            if "groups" in sel and pe.group not in sel["groups"]:
                continue
            if "pes" in sel and pe.id not in sel["pes"]:
                continue
            return pat
        return None

    def source_for(self, pe: PEContext, seed: int, amap) -> "OpSource":
        if self.trace is not None and pe.id in self.trace:
            return ListSource(self.trace[pe.id])
        pat = self.pattern_for(pe)
        if pat is None:
            return ListSource([])
        return PatternSource(pat, pe, seed, amap)

    def validate(self, n_pes: int, amap) -> None:
        if self.trace:
            bad = [pe for pe in self.trace if pe >= n_pes]
            if bad:
                raise TraceFormatError(f"trace references unknown PE ids {sorted(bad)[:5]}")
            for ops in self.trace.values():
                for op in ops:
                    amap.map(op.addr)
        for _, pat in self.patterns:
            if pat.kind == "hotspot":
                bad = [g for g in pat.hot_groups if not 0 <= g < amap.groups]
                if bad:
                    raise ValueError(f"hotspot groups {bad} out of range")


class ListSource:
    __slots__ = ("ops",)

    def __init__(self, ops):
        self.ops = list(ops)

    def get(self, step: int) -> Op | None:
        return self.ops[step] if step < len(self.ops) else None

    def barriers(self) -> int:
        return 0

    def requests(self) -> int:
        return len(self.ops)


class PatternSource:
    __slots__ = ("pattern", "pe", "seed", "amap")

    def __init__(self, pattern, pe, seed, amap):
        self.pattern, self.pe, self.seed, self.amap = pattern, pe, seed, amap

    def get(self, step: int) -> Op | None:
        return next_request(self.pattern, self.pe, step, self.seed, self.amap)

    def barriers(self) -> int:
        p = self.pattern
        return p.count // p.barrier_every if p.barrier_every else 0

    def requests(self) -> int:
        return self.pattern.count


class Barriers:
    """Global barriers shared by every PE whose stream contains them."""

    def __init__(self):
        self.participants: list[list] = []
        self.arrivals: list[int] = []
        self.release_at: list[int | None] = []
        self.sim = None

    def register(self, pe, n_barriers: int) -> None:
        while len(self.participants) < n_barriers:
            self.participants.append([])
            self.arrivals.append(0)
            self.release_at.append(None)
        for i in range(n_barriers):
            self.participants[i].append(pe)

    def arrive(self, index: int, t: int) -> None:
        self.arrivals[index] += 1
        if self.arrivals[index] == len(self.participants[index]):
            self.release_at[index] = t + 1
            for pe in self.participants[index]:
                self.sim.wake(pe, t + 1)


class PEPort:
    """Response sink of a PE; always has room."""

    __slots__ = ("pe",)

    def __init__(self, pe):
        self.pe = pe

    def can_accept(self, t: int, pkt=None) -> bool:
        return True

    def accept(self, resp: Response, arrival: int, t: int) -> None:
        pe = self.pe
        done = arrival + resp.duration - 1
        pe._seq += 1
        heapq.heappush(pe.inbox, (done, pe._seq, resp))
        pe.sim.wake(pe, done)


class PE:
    """Abstract processing element with a bounded number of in-flight requests."""

    def __init__(self, ctx: PEContext, source, max_outstanding: int = 8, name: str | None = None):
        if max_outstanding < 1:
            raise ValueError("max_outstanding must be >= 1")
        self.ctx = ctx
        self.source = source
        self.max_outstanding = max_outstanding
        self.name = name or f"pe.{ctx.id}"
        self.id = -1
        self.sim = None
        self.port = None  # request entry, set by the topology
        self.decode = None
        self.barriers: Barriers | None = None
        self.response_port = PEPort(self)
        self.inbox: list = []
        self._seq = 0
        self.step = 0
        self._op: Op | None = None
        self._op_step = -1
        self.inflight: dict[int, Request] = {}
        self.last_issued: Request | None = None
        self.drained_at = 0
        self.barrier_arrived = -1
        self.stalls = dict.fromkeys(STALL_CATEGORIES, 0)
        self.pending_state = IDLE
        self.acc = 0
        self.finish = -1
        self.counts = {"ops": 0, "read": 0, "write": 0, "atomic": 0, "barriers": 0}
        self.latencies: list[int] = []
        self.completed: list[Request] | None = None
        self.last_state = None

    # op stream

    def _current(self) -> Op | None:
        if self._op_step != self.step:
            self._op = self.source.get(self.step)
            self._op_step = self.step
        return self._op

    def quiescent(self) -> bool:
        return self._current() is None and not self.inflight

    # accounting

    def _close(self, t: int) -> None:
        if t > self.acc:
            self.stalls[self.pending_state] += t - self.acc
            self.acc = t

    def finalize(self, total: int) -> None:
        self._close(total)

    def _absorb(self, t: int) -> None:
        inbox = self.inbox
        while inbox and inbox[0][0] <= t:
            done, _, resp = heapq.heappop(inbox)
            req = resp.request
            req.completed_at = done
            del self.inflight[req.id]
            self.latencies.append(done - req.issued_at)
            if self.completed is not None:
                req.response = resp
                self.completed.append(req)
            if not self.inflight:
                self.drained_at = done
            tr = self.sim.tracer
            if tr is not None:
                tr.record(done, self.name, req.id, "respond")

    def tick(self, t: int) -> None:
        self._absorb(t)
        self._close(t)
        state = self._advance(t)
        self.pending_state = state
        tr = self.sim.tracer
        if tr is not None and state != self.last_state:
            tr.pe_state(t, self.name, state)
            self.last_state = state
        if self.finish < 0 and self.quiescent():
            self.finish = t

    def _advance(self, t: int) -> str:
        sim = self.sim
        while True:
            op = self._current()
            if op is None:
                return IDLE
            if op.barrier >= 0:
                if self.inflight:
                    return BARRIER
                b = self.barriers
                if self.barrier_arrived != op.barrier:
                    self.barrier_arrived = op.barrier
                    b.arrive(op.barrier, t)
                    return BARRIER
                rel = b.release_at[op.barrier]
                if rel is None or rel > t:
                    return BARRIER
                self.counts["barriers"] += 1
                self.step += 1
                continue
            ready = op.ready
            if op.dep == DEP_PREV:
                last = self.last_issued
                if last is not None:
                    if last.completed_at < 0:
                        return LOAD_USE
                    resolved = last.completed_at
                    if resolved + op.think > ready:
                        ready = resolved + op.think
            elif op.dep == DEP_ALL:
                if self.inflight:
                    return LOAD_USE
                if self.drained_at + op.think > ready:
                    ready = self.drained_at + op.think
            if ready > t:
                think_end = -1
                if op.dep == DEP_PREV and self.last_issued is not None:
                    think_end = self.last_issued.completed_at + op.think
                elif op.dep == DEP_ALL:
                    think_end = self.drained_at + op.think
                if t < think_end:
                    sim.wake(self, think_end)
                    return ACTIVE
                sim.wake(self, ready)
                return IDLE
            if len(self.inflight) >= self.max_outstanding:
                return LSU_FULL
            req = Request(self.ctx.id, op.addr, op.kind, op.size, issued_at=t,
                          id=sim.new_request_id(), trace=sim.trace_paths)
            req.target = self.decode(op.addr)
            if not self.port.can_accept(t, req):
                sim.wake(self, t + 1)
                return LSU_FULL
            self.inflight[req.id] = req
            self.last_issued = req
            self.step += 1
            self.counts["ops"] += 1
            self.counts[op.kind.value] += 1
            self.stalls[ACTIVE] += 1
            self.acc = t + 1
            self.port.accept(req, t, t)
            sim.wake(self, t + 1)
            return ACTIVE

    def census(self) -> int:
        return len(self.inflight)


class Bank:
    """Single-ported SPM bank: one access per ``service_cycles`` window."""

    def __init__(self, name: str, loc: tuple[int, int, int], service_cycles: int = 1,
                 atomic_extra: int = 1, capacity: int = 2):
        from .netmodel import InPort

        if service_cycles < 1:
            raise ValueError("service_cycles must be >= 1")
        self.name = name
        self.loc = loc
        self.service_cycles = service_cycles
        self.atomic_extra = atomic_extra
        self.id = -1
        self.sim = None
        self.inport = InPort(self, 0, capacity, name)
        self.response_entry = None  # first sync router of the response path
        self.busy_until = 0
        self.pending: Response | None = None
        self.pending_ready = 0
        self.accesses = 0
        self.conflicts = 0
        self.queue_wait = 0
        self.xbar_wait = 0
        self.blocked = 0

    def route(self, pkt) -> int:
        return 0

    def on_xbar_grant(self, out: int, arb: int) -> None:
        if arb:
            self.xbar_wait += arb
            self.conflicts += 1

    def tick(self, t: int) -> None:
        if self.pending is not None and self.pending_ready <= t:
            if dispatch_sync(self.response_entry, self.pending, t, t):
                self.pending = None
            else:
                self.blocked += 1
        q = self.inport.queue
        if self.pending is None and q and q[0][0] <= t and self.busy_until <= t:
            arrival, req, _ = self.inport.pop(t)
            wait = t - arrival
            if wait:
                self.queue_wait += wait
                self.conflicts += 1
            self.accesses += 1
            req.served_at = t
            req.one_way = req.latency
            svc = self.service_cycles + (self.atomic_extra if req.kind is Kind.ATOMIC else 0)
            self.busy_until = t + svc
            self.pending = Response(req, t + svc)
            self.pending_ready = t + svc
            tr = self.sim.tracer
            if tr is not None:
                tr.record(t, self.name, req.id, "serve")
        if self.pending is not None:
            self.sim.wake(self, max(t + 1, self.pending_ready))
        elif q:
            self.sim.wake(self, max(t + 1, q[0][0], self.busy_until))

    def counters(self) -> dict:
        return {
            "accesses": self.accesses,
            "conflicts": self.conflicts,
            "conflict_wait_cycles": self.queue_wait + self.xbar_wait,
            "queue_wait_cycles": self.queue_wait,
            "xbar_wait_cycles": self.xbar_wait,
            "blocked_cycles": self.blocked,
            "queue_max": self.inport.max_occ,
        }


def with_overrides(pattern: TrafficPattern, **kw) -> TrafficPattern:
    return replace(pattern, **kw)
