"""Counters, traces and the machine-readable profile report.

Report layout (``schema`` = ``spmsim.profile/1``)::

    meta      config hash, seed, total cycles, request/response counts
    latency   round-trip latency summary (count, mean, p50, p99, max)
    pes       per PE: operation counts and stall breakdown
    routers   per router: per-output busy/transfers/conflicts/blocked,
              per-input queue occupancy (async routers only)
    banks     per bank: accesses, conflicts, conflict wait cycles
    channels  per mesh channel: busy cycles, link count, windowed busy

Queue occupancy is sampled whenever a queue changes, so ``max`` is exact
and ``mean`` is weighted by those sampling points.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "SCHEMA",
    "TraceRecord",
    "Tracer",
    "ProfileReport",
    "collect",
    "config_hash",
    "utilization",
    "congestion_stats",
    "export",
]

SCHEMA = "spmsim.profile/1"
PHASES = ("enqueue", "arbitrate", "dispatch", "serve", "respond")


class TraceRecord(NamedTuple):
    timestamp: int
    component: str
    request: int
    phase: str


class Tracer:
    """Collects transfer events and PE state transitions."""

    def __init__(self):
        self._records: list[TraceRecord] = []
        self.pe_states: list[tuple[int, str, str]] = []

    def record(self, timestamp: int, component: str, request: int, phase: str) -> None:
        self._records.append(TraceRecord(timestamp, component, request, phase))

    def pe_state(self, cycle: int, pe: str, state: str) -> None:
        self.pe_states.append((cycle, pe, state))

    @property
    def records(self) -> list[TraceRecord]:
        """Records ordered by timestamp; ties keep emission order."""
        return sorted(self._records, key=lambda r: r.timestamp)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TraceRecord._fields)
        w.writerows(self.records)
        return buf.getvalue()


def config_hash(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ProfileReport:
    data: dict

    @property
    def total_cycles(self) -> int:
        return self.data["meta"]["total_cycles"]

    def to_json(self) -> str:
        return json.dumps(self.data, indent=1, sort_keys=False) + "\n"

    def component(self, name: str) -> dict:
        for section in ("routers", "banks", "pes"):
            if name in self.data[section]:
                return self.data[section][name]
        raise KeyError(name)


def _latency_summary(lat: list[int]) -> dict:
    if not lat:
        return {"count": 0, "mean": 0.0, "p50": 0.0, "p99": 0.0, "max": 0}
    a = np.asarray(lat, dtype=float)
    return {"count": int(a.size), "mean": float(a.mean()),
            "p50": float(np.percentile(a, 50)), "p99": float(np.percentile(a, 99)),
            "max": int(a.max())}


def collect(system, total_cycles: int, window: int = 256, extra_meta: dict | None = None) -> ProfileReport:
    """Assemble the report from component counters after a run."""
    cfg = system.cfg
    latencies: list[int] = []
    pes = {}
    issued = responses = 0
    for pe in system.pes:
        latencies += pe.latencies
        issued += pe.counts["ops"]
        responses += len(pe.latencies)
        pes[pe.name] = {
            "counts": dict(pe.counts),
            "stalls": dict(pe.stalls),
            "total_cycles": total_cycles,
            "finish": pe.finish,
        }
    routers = {}
    for r in system.routers:
        c = r.counters()
        c["mode"] = r.spec.dispatch_mode
        c["window_busy"] = {str(k): v for k, v in sorted(r.window_busy.items())}
        routers[r.name] = c
    banks = {b.name: b.counters() for b in system.banks}
    channels = []
    for ch in range(cfg.ports_per_group):
        busy = 0
        links = 0
        wb: dict[int, int] = {}
        for r in system.channel_routers(ch):
            busy += sum(r.busy_cycles)
            links += r.spec.outputs
            for k, v in r.window_busy.items():
                wb[k] = wb.get(k, 0) + v
        channels.append({
            "channel": ch,
            "busy_cycles": busy,
            "links": links,
            "utilization": busy / (links * total_cycles) if total_cycles else 0.0,
            "window_busy": {str(k): v for k, v in sorted(wb.items())},
        })
    meta = {
        "schema": SCHEMA,
        "config_hash": config_hash(cfg.to_dict(), system.workload.to_dict(),
                                   system.remap_cfg.to_dict(), system.seed),
        "seed": system.seed,
        "total_cycles": total_cycles,
        "window": window,
        "requests_issued": issued,
        "responses_delivered": responses,
    }
    if extra_meta:
        meta.update(extra_meta)
    return ProfileReport({
        "meta": meta,
        "latency": _latency_summary(latencies),
        "pes": pes,
        "routers": routers,
        "banks": banks,
        "channels": channels,
    })


def utilization(report: ProfileReport, component: str, window: int | None = None,
                output: int | None = None) -> float:
    """Busy fraction of a router (all outputs, or one) over the run or one window.

    ``window`` is a window index; its length is the report's window size.
    """
    r = report.data["routers"][component]
    if window is None:
        total = report.total_cycles
        if total == 0:
            return 0.0
        if output is not None:
            return r["busy_cycles"][output] / total
        return sum(r["busy_cycles"]) / (total * len(r["busy_cycles"]))
    if output is not None:
        raise ValueError("windowed utilization is tracked per router, not per output")
    w = report.data["meta"]["window"]
    return r["window_busy"].get(str(window), 0) / w


def congestion_stats(report: ProfileReport, component: str) -> dict:
    r = report.data["routers"][component]
    if "queues" not in r:
        raise ValueError(f"{component} is synchronous and has no queues")
    samples = sum(q["samples"] for q in r["queues"])
    return {
        "mean_occupancy": sum(q["sum"] for q in r["queues"]) / samples if samples else 0.0,
        "max_occupancy": max(q["max"] for q in r["queues"]),
        "blocked_cycles": sum(r["blocked"]),
        "conflicts": sum(r["conflicts"]),
        "peak_cycle_conflicts": r["peak_cycle_conflicts"],
    }


def export(report: ProfileReport, directory, fmt: str = "json", tracer: Tracer | None = None) -> list[str]:
    """Write the report (and the trace, when given) into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    written = []
    if fmt == "json":
        path = os.path.join(directory, "report.json")
        with open(path, "w") as fh:
            fh.write(report.to_json())
        written.append(path)
    elif fmt == "csv":
        path = os.path.join(directory, "routers.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["router", "output", "busy_cycles", "transfers", "conflicts", "blocked"])
            for name, r in report.data["routers"].items():
                for o, busy in enumerate(r["busy_cycles"]):
                    w.writerow([name, o, busy, r["transfers"][o], r["conflicts"][o], r["blocked"][o]])
        written.append(path)
        path = os.path.join(directory, "pes.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            cats = ["active", "lsu_full", "load_use", "barrier", "idle"]
            w.writerow(["pe", "ops", "read", "write", "atomic"] + cats)
            for name, p in report.data["pes"].items():
                c = p["counts"]
                w.writerow([name, c["ops"], c["read"], c["write"], c["atomic"]]
                           + [p["stalls"][k] for k in cats])
        written.append(path)
        path = os.path.join(directory, "banks.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            keys = ["accesses", "conflicts", "conflict_wait_cycles"]
            w.writerow(["bank"] + keys)
            for name, b in report.data["banks"].items():
                w.writerow([name] + [b[k] for k in keys])
        written.append(path)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    if tracer is not None:
        path = os.path.join(directory, "trace.csv")
        with open(path, "w") as fh:
            fh.write(tracer.to_csv())
        written.append(path)
        path = os.path.join(directory, "pe_states.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cycle", "pe", "state"])
            w.writerows(tracer.pe_states)
        written.append(path)
    return written
