"""Router remapping between tile inter-group ports and parallel mesh channels.

In ``static`` mode port ``k`` always injects into channel ``k``. In
``remap`` mode a switch applies a fresh permutation every cycle. The
permutation may be restricted to disjoint blocks of ports (partitioned
remappers), and the assignment of ports to blocks is configurable.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .rng import SplitMix64

__all__ = [
    "RemapperConfig",
    "RemapSwitch",
    "partition_blocks",
    "remap_assignment",
    "imbalance_metrics",
    "dse_sweep",
    "SWEEP_COLUMNS",
    "write_sweep_csv",
]

log = logging.getLogger(__name__)

SCHEDULES = ("pseudo-random", "true-random", "identity")
ASSIGNMENTS = ("contiguous", "interleaved", "locality")


@dataclass(frozen=True)
class RemapperConfig:
    """``locality`` assignment takes ``grouping``: a list of tile-id lists,
    each block holding the ports of the listed tiles."""

    mode: str = "static"
    partition_size: int = 32
    assignment: str = "contiguous"
    grouping: tuple = ()
    schedule: str = "pseudo-random"
    seed: int = 0
    switch_latency: int = 1

    def __post_init__(self):
        if self.mode not in ("static", "remap"):
            raise ValueError(f"unknown remap mode {self.mode!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.assignment not in ASSIGNMENTS:
            raise ValueError(f"unknown partition assignment {self.assignment!r}")
        if self.partition_size < 1:
            raise ValueError("partition_size must be >= 1")
        if self.switch_latency < 0:
            raise ValueError("switch_latency must be >= 0")
        object.__setattr__(self, "grouping", tuple(tuple(g) for g in self.grouping))

    def validate(self, n_ports: int, channels_per_tile: int = 2) -> None:
        if self.mode == "static":
            return
        if n_ports % self.partition_size:
            raise ValueError(f"partition_size {self.partition_size} does not divide {n_ports} ports")
        partition_blocks(self, n_ports, channels_per_tile)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "partition_size": self.partition_size,
                "assignment": self.assignment, "grouping": [list(g) for g in self.grouping],
                "schedule": self.schedule, "seed": self.seed,
                "switch_latency": self.switch_latency}


def partition_blocks(cfg: RemapperConfig, n_ports: int, channels_per_tile: int = 2) -> list[list[int]]:
    """Disjoint port blocks covering ``range(n_ports)``."""
    p = cfg.partition_size
    nb = n_ports // p
    if cfg.assignment == "contiguous":
        blocks = [list(range(j * p, (j + 1) * p)) for j in range(nb)]
    elif cfg.assignment == "interleaved":
        # adjacent ports land in different blocks
        blocks = [list(range(j, n_ports, nb)) for j in range(nb)]
    else:
        blocks = [sorted(t * channels_per_tile + c for t in tiles for c in range(channels_per_tile))
                  for tiles in cfg.grouping]
    flat = sorted(k for b in blocks for k in b)
    if flat != list(range(n_ports)) or any(len(b) != p for b in blocks):
        raise ValueError("partition blocks must be disjoint, cover all ports and have partition_size ports each")
    return blocks


def remap_assignment(cfg: RemapperConfig, cycle: int, n_ports: int = 32,
                     channels_per_tile: int = 2, blocks: list[list[int]] | None = None) -> list[int]:
    """Port-to-channel permutation in force at ``cycle``.

    Pure in ``(cfg, cycle)``: pseudo-random schedules run a Fisher-Yates
    shuffle per block from a SplitMix64 stream keyed by
    ``(seed, cycle, block)``; true-random schedules use numpy's PCG64 keyed
    the same way.
    """
    if cfg.mode == "static" or cfg.schedule == "identity":
        return list(range(n_ports))
    if blocks is None:
        blocks = partition_blocks(cfg, n_ports, channels_per_tile)
    perm = [0] * n_ports
    for j, block in enumerate(blocks):
        if cfg.schedule == "pseudo-random":
            order = SplitMix64.keyed(cfg.seed, cycle, j).shuffle(list(block))
        else:
            rng = np.random.default_rng([cfg.seed, cycle, j])
            order = [block[i] for i in rng.permutation(len(block))]
        for src, dst in zip(block, order):
            perm[src] = dst
    return perm


class RemapSwitch:
    """Per-group switch; caches the permutation of the current cycle."""

    def __init__(self, cfg: RemapperConfig, n_ports: int, channels_per_tile: int = 2):
        self.cfg = cfg
        self.n_ports = n_ports
        self.static = cfg.mode == "static" or cfg.schedule == "identity"
        self.blocks = None if cfg.mode == "static" else partition_blocks(cfg, n_ports, channels_per_tile)
        self._cycle = -1
        self._perm: list[int] = []

    def channel(self, cycle: int, port: int) -> int:
        if self.static:
            return port
        if cycle != self._cycle:
            self._perm = remap_assignment(self.cfg, cycle, self.n_ports, blocks=self.blocks)
            self._cycle = cycle
        return self._perm[port]


def imbalance_metrics(report, window: int | None = None) -> dict:
    """Spatial and temporal utilization imbalance across mesh channels.

    ``spatial`` is the coefficient of variation of per-channel utilization
    over the whole run; ``temporal`` lists, per channel, the variance of its
    utilization across fixed windows.
    """
    channels = report.data.get("channels") if hasattr(report, "data") else report.get("channels")
    if not channels:
        raise ValueError("report has no channel utilization data")
    busy = np.array([ch["busy_cycles"] for ch in channels], dtype=float)
    mean = busy.mean()
    spatial = float(busy.std() / mean) if mean > 0 else 0.0
    meta = report.data["meta"] if hasattr(report, "data") else report["meta"]
    w = window or meta.get("window", 256)
    n_windows = max(1, -(-meta["total_cycles"] // w))
    temporal = []
    for ch in channels:
        series = np.zeros(n_windows)
        for k, v in ch["window_busy"].items():
            if int(k) < n_windows:
                series[int(k)] = v
        denom = w * max(1, ch["links"])
        temporal.append(float(np.var(series / denom)))
    return {"spatial": spatial, "temporal": temporal}


SWEEP_COLUMNS = ("partition_size", "assignment", "seed", "completion_cycles",
                 "spatial_cv", "mean_latency", "p99_latency")


def dse_sweep(scenario, partition_sizes: Iterable[int] = (2, 4, 8, 16, 32),
              assignments: Iterable[str] = ("contiguous",), seeds: Iterable[int] = (0,),
              include_static: bool = True, grouping: tuple = ()) -> list[dict]:
    """Run one simulation per remapper configuration.

    Every configuration reuses the scenario's workload and seed so results
    are paired. Static baselines appear with ``partition_size`` 1 and
    assignment ``static``. Failed runs are recorded with an ``error`` field.
    """
    from .sim import run_scenario

    configs = []
    for seed in seeds:
        if include_static:
            configs.append((seed, replace(scenario.remap, mode="static")))
        for a in assignments:
            for p in partition_sizes:
                configs.append((seed, replace(scenario.remap, mode="remap", partition_size=p,
                                              assignment=a, grouping=grouping, seed=seed)))
    rows = []
    for seed, rc in configs:
        row = {"partition_size": 1 if rc.mode == "static" else rc.partition_size,
               "assignment": "static" if rc.mode == "static" else rc.assignment,
               "seed": seed}
        try:
            result = run_scenario(replace(scenario, remap=rc, seed=seed))
            rep = result.report
            row.update(completion_cycles=rep.total_cycles,
                       spatial_cv=round(imbalance_metrics(rep)["spatial"], 6),
                       mean_latency=round(rep.data["latency"]["mean"], 6),
                       p99_latency=round(rep.data["latency"]["p99"], 6))
        except Exception as exc:  # a failed point must not stop the sweep
            log.warning("sweep point %s failed: %s", row, exc)
            row.update(completion_cycles="", spatial_cv="", mean_latency="", p99_latency="",
                       error=str(exc))
        log.info("sweep %s", row)
        rows.append(row)
    return rows


def write_sweep_csv(rows: list[dict], dest=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([r.get(c, "") for c in SWEEP_COLUMNS])
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w") as fh:
            fh.write(text)
    return text
