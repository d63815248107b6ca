"""Simulation driver: event-driven runs, the per-cycle reference run, scenarios.

Both run modes share every component; they differ only in who gets ticked.
The event-driven mode ticks a component in a cycle only when something
woke it; the reference mode ticks every component every cycle in id order
and ignores wake-ups. Components are written so that a tick with nothing
to do changes no state, which is what makes the two modes agree.
"""

from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field, replace

from .engine import CycleBudgetExceeded, Engine, SchedulingError, SimulationError
from .endpoints import Workload
from .profiling import ProfileReport, Tracer, collect
from .remap import RemapperConfig
from .topology import TopologyConfig, build

__all__ = [
    "Simulation",
    "Scenario",
    "RunResult",
    "OracleVerdict",
    "run_scenario",
    "run_oracle",
    "compare_runs",
]

log = logging.getLogger(__name__)


class Simulation:
    """Runs one wired system to completion.

    ``mode`` is ``"event"`` or ``"oracle"``. ``trace`` enables transfer and
    PE-state tracing plus per-request hop paths.
    """

    def __init__(self, system, mode: str = "event", trace: bool = False, window: int = 256,
                 keep_requests: bool = False):
        if mode not in ("event", "oracle"):
            raise ValueError(f"unknown simulation mode {mode!r}")
        if window < 1:
            raise ValueError("window must be >= 1")
        self.system = system
        self.mode = mode
        self.window = window
        self.tracer = Tracer() if trace else None
        self.trace_paths = trace
        self.now = 0
        self._next_id = 0
        self._tickers = system.tickers
        self._current = -1
        self._buckets: dict[int, tuple[list[int], set[int]]] = {}
        self.engine = Engine()
        self.engine.register("cycle", self._run_cycle)
        self.ticks = 0
        for comp in self._tickers:
            comp.sim = self
        for r in system.routers:
            r.sim = self
        system.barriers.sim = self
        for pe in system.pes:
            if keep_requests:
                pe.completed = []

    def new_request_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    def wake(self, comp, t: int) -> None:
        if self.mode == "oracle":
            return
        now = self.now
        if t < now or (t == now and comp.id <= self._current):
            raise SchedulingError(
                f"{getattr(comp, 'name', comp)} woken for cycle {t} while processing "
                f"cycle {now} component {self._current}")
        b = self._buckets.get(t)
        if b is None:
            b = ([], set())
            self._buckets[t] = b
            self.engine.queue.push(t, "cycle", t)
        if comp.id not in b[1]:
            b[1].add(comp.id)
            heapq.heappush(b[0], comp.id)

    def _run_cycle(self, engine, t: int) -> None:
        heap, _ = self._buckets[t]
        tickers = self._tickers
        self.now = t
        while heap:
            i = heapq.heappop(heap)
            self._current = i
            tickers[i].tick(t)
            self.ticks += 1
        self._current = -1
        del self._buckets[t]

    def census(self) -> dict[str, int]:
        out = {pe.name: pe.census() for pe in self.system.pes}
        for r in self.system.routers:
            if hasattr(r, "pending"):
                out[r.name] = r.pending()
        for b in self.system.banks:
            out[b.name] = len(b.inport.queue) + (b.pending is not None)
        return out

    def _done(self) -> bool:
        return all(pe.finish >= 0 for pe in self.system.pes)

    def run(self, max_cycles: int = 10_000_000) -> int:
        """Run to completion and return total cycles (max PE finish cycle)."""
        pes = self.system.pes
        if self.mode == "event":
            for pe in pes:
                self.wake(pe, 0)
            outcome = self.engine.run_to_completion(max_cycles, self._done, self.census)
            if not outcome.finished:
                if self.engine.queue.peek_time() is None:
                    raise SimulationError(f"deadlock at cycle {self.engine.now}: "
                                          f"{sum(self.census().values())} requests stuck")
                raise CycleBudgetExceeded(max_cycles, outcome.cycles, outcome.census)
        else:
            tickers = self._tickers
            t = 0
            while True:
                if t > max_cycles:
                    raise CycleBudgetExceeded(max_cycles, t, self.census())
                self.now = t
                for i, comp in enumerate(tickers):
                    self._current = i
                    comp.tick(t)
                self.ticks += len(tickers)
                self._current = -1
                if self._done():
                    break
                t += 1
        total = max((pe.finish for pe in pes), default=0)
        for pe in pes:
            pe.finalize(total)
        return total


@dataclass
class Scenario:
    """Everything needed to reproduce one run."""

    topology: TopologyConfig = field(default_factory=TopologyConfig)
    workload: Workload = field(default_factory=Workload)
    remap: RemapperConfig = field(default_factory=RemapperConfig)
    seed: int = 0
    max_cycles: int = 10_000_000
    trace: bool = False
    window: int = 256
    report_dir: str | None = None

    def to_dict(self) -> dict:
        return {"topology": self.topology.to_dict(), "workload": self.workload.to_dict(),
                "remap": self.remap.to_dict(), "seed": self.seed, "max_cycles": self.max_cycles,
                "trace": self.trace, "window": self.window}


@dataclass
class RunResult:
    report: ProfileReport
    system: object
    sim: Simulation

    @property
    def total_cycles(self) -> int:
        return self.report.total_cycles

    def summary(self) -> dict:
        lat = self.report.data["latency"]
        return {"total_cycles": self.total_cycles, "requests": self.report.data["meta"]["requests_issued"],
                "mean_latency": lat["mean"], "p99_latency": lat["p99"]}


def run_scenario(scenario: Scenario, mode: str = "event", keep_requests: bool = False) -> RunResult:
    system = build(scenario.topology, scenario.workload, scenario.remap, scenario.seed)
    sim = Simulation(system, mode=mode, trace=scenario.trace, window=scenario.window,
                     keep_requests=keep_requests)
    total = sim.run(scenario.max_cycles)
    report = collect(system, total, scenario.window)
    log.info("run finished: %d cycles, %d requests, %d ticks", total,
             report.data["meta"]["requests_issued"], sim.ticks)
    return RunResult(report, system, sim)


@dataclass
class OracleVerdict:
    passed: bool
    event_cycles: int
    oracle_cycles: int
    mismatches: list[str]
    first_divergence: tuple[int, str] | None = None

    def describe(self) -> str:
        if self.passed:
            return f"oracle equivalence: pass ({self.event_cycles} cycles)"
        lines = [f"oracle equivalence: FAIL (event {self.event_cycles} cycles, "
                 f"oracle {self.oracle_cycles} cycles)"]
        if self.first_divergence:
            lines.append("first divergence at cycle %d in %s" % self.first_divergence)
        lines += self.mismatches[:20]
        return "\n".join(lines)


def _flatten(d, prefix=""):
    if isinstance(d, dict):
        for k, v in d.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(d, list):
        for i, v in enumerate(d):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, d


def compare_runs(a: RunResult, b: RunResult) -> OracleVerdict:
    """Compare two runs counter by counter and, when traced, record by record."""
    fa = dict(_flatten({k: v for k, v in a.report.data.items()}))
    fb = dict(_flatten({k: v for k, v in b.report.data.items()}))
    mismatches = [f"{k}: {fa.get(k)!r} != {fb.get(k)!r}"
                  for k in sorted(set(fa) | set(fb)) if fa.get(k) != fb.get(k)]
    first = None
    if a.sim.tracer is not None and b.sim.tracer is not None:
        ra, rb = a.sim.tracer.records, b.sim.tracer.records
        for x, y in zip(ra, rb):
            if x != y:
                first = min((x.timestamp, x.component), (y.timestamp, y.component))
                break
        else:
            if len(ra) != len(rb):
                longer = ra if len(ra) > len(rb) else rb
                r = longer[min(len(ra), len(rb))]
                first = (r.timestamp, r.component)
        if first is None and a.sim.tracer.pe_states != b.sim.tracer.pe_states:
            for x, y in zip(a.sim.tracer.pe_states, b.sim.tracer.pe_states):
                if x != y:
                    first = min((x[0], x[1]), (y[0], y[1]))
                    break
            mismatches.append("pe state traces differ")
    return OracleVerdict(not mismatches and first is None, a.total_cycles, b.total_cycles,
                         mismatches, first)


def run_oracle(scenario: Scenario) -> tuple[RunResult, OracleVerdict]:
    """Run the event-driven engine and the per-cycle reference; compare them."""
    ev = run_scenario(scenario, "event")
    ref = run_scenario(scenario, "oracle")
    verdict = compare_runs(ev, ref)
    if not verdict.passed and not scenario.trace:
        # rerun traced to locate the first divergent cycle and component
        traced = replace(scenario, trace=True)
        verdict = compare_runs(run_scenario(traced, "event"), run_scenario(traced, "oracle"))
    return ev, verdict


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def measure_one_way(cfg: TopologyConfig, probes: list[tuple[int, int]], spacing: int = 200) -> list[int]:
    """One-way request latency of each ``(pe, addr)`` probe under zero load.

    All probes share one run; they are issued ``spacing`` cycles apart so
    that at most one is in flight at a time.
    """
    from .endpoints import Op
    from .netmodel import Kind

    trace: dict[int, list[Op]] = {}
    for k, (pe, addr) in enumerate(probes):
        trace.setdefault(pe, []).append(Op(Kind.READ, addr, cfg.word_bytes, ready=k * spacing))
    res = run_scenario(Scenario(cfg, Workload([], trace, name="calibration")), keep_requests=True)
    by_time = {}
    for pe in res.system.pes:
        for req in pe.completed:
            by_time[req.issued_at] = req.one_way
    return [by_time[k * spacing] for k in range(len(probes))]


def calibrate(cfg: TopologyConfig | None = None) -> list[dict]:
    """Measured zero-load latencies next to the analytic expectations."""
    from .topology import AddressMap, manhattan, zero_load_latency

    cfg = cfg or TopologyConfig()
    amap = AddressMap(cfg)
    per_group = cfg.tiles_per_group * cfg.pes_per_tile
    rows = []
    probes = [(0, amap.compose(0, 0, 1, 0))]
    expect = [("intra-tile", cfg.tile_xbar_cycles)]
    if cfg.tiles_per_group > 1:
        probes.append((0, amap.compose(0, 1, 1, 0)))
        expect.append(("intra-group", 2 * cfg.tile_xbar_cycles + cfg.group_xbar_cycles))
    pairs = [(s, d) for s in range(cfg.groups) for d in range(cfg.groups) if s != d]
    probes += [(s * per_group, amap.compose(d, 0, 0, 0)) for s, d in pairs]
    measured = measure_one_way(cfg, probes)
    for (name, exp), got in zip(expect, measured):
        rows.append({"anchor": name, "expected": exp, "measured": got, "pass": got == exp})
    inter = measured[len(expect):]
    by_hops: dict[int, list[int]] = {}
    exact = True
    for (s, d), got in zip(pairs, inter):
        by_hops.setdefault(manhattan(cfg, s, d), []).append(got)
        exact &= got == zero_load_latency(s, d, cfg)
    for h in sorted(by_hops):
        vals = by_hops[h]
        exp = cfg.mesh_overhead_cycles + cfg.mesh_hop_cycles * h
        rows.append({"anchor": f"inter-group {h} hop{'s' if h > 1 else ''}", "expected": exp,
                     "measured": max(vals), "pass": min(vals) == max(vals) == exp})
    if pairs:
        exp = sum(zero_load_latency(s, d, cfg) for s, d in pairs) / len(pairs)
        got = sum(inter) / len(inter)
        rows.append({"anchor": f"inter-group mean over {len(pairs)} pairs", "expected": round(exp, 4),
                     "measured": round(got, 4), "pass": exact and abs(got - exp) <= 0.05})
    return rows
