"""Acceptance criteria 1-10.

Each criterion prints one PASS/FAIL line. Run under pytest, or directly with
``python tests/test_acceptance.py`` for the summary table alone.
"""

import functools
import logging
import math
import sys
import time
from dataclasses import replace

import pytest

sys.path.insert(0, __file__.rsplit("/", 1)[0])

from conftest import Bench, Sink  # noqa: E402
from oracles import ref_mean_zero_load, ref_zero_load  # noqa: E402
from spmsim import (Kind, RemapperConfig, Request, Router, RouterSpec, Scenario,  # noqa: E402
                    TopologyConfig, TrafficPattern, Workload)
from spmsim.endpoints import Op  # noqa: E402
from spmsim.remap import dse_sweep, imbalance_metrics  # noqa: E402
from spmsim.rng import SplitMix64  # noqa: E402
from spmsim.sim import measure_one_way, run_oracle, run_scenario  # noqa: E402
from spmsim.topology import AddressMap  # noqa: E402

log = logging.getLogger("acceptance")

# every report produced here is re-checked by criterion 9
REPORTS = []


def _keep(result):
    REPORTS.append(result.report)
    return result


def _line(n, ok, detail):
    text = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok, text


# 1. zero-load calibration

def criterion_1():
    cfg = TopologyConfig()
    amap = AddressMap(cfg)
    pairs = [(s, d) for s in range(cfg.groups) for d in range(cfg.groups) if s != d]
    per_group = cfg.tiles_per_group * cfg.pes_per_tile
    got = measure_one_way(cfg, [(s * per_group, amap.compose(d, 0, 0, 0)) for s, d in pairs])
    adjacent = {g for (s, d), g in zip(pairs, got) if ref_zero_load(s, d) == 7}
    mean = sum(got) / len(got)
    ref_mean, n = ref_mean_zero_load()
    ok = adjacent == {7} and len(pairs) == n == 240 and abs(mean - 13.67) <= 0.05
    ok &= abs(mean - ref_mean) < 1e-9
    return _line(1, ok, f"adjacent one-way {sorted(adjacent)} cycles, mean over {len(pairs)} pairs "
                        f"{mean:.4f} (target 13.67 +/- 0.05)")


# 2. oracle equivalence

KINDS = ["uniform-random", "local-tile", "local-group", "remote-group", "hotspot", "strided", "bursty"]


def random_small_scenario(k):
    rng = SplitMix64.keyed(2024, k)
    cfg = TopologyConfig(mesh_x=2, mesh_y=2, tiles_per_group=2, pes_per_tile=2, banks_per_tile=4,
                         queue_capacity=1 + rng.below(3), max_outstanding=1 + rng.below(8),
                         rr_update=("grant", "cycle")[rng.below(2)],
                         intra_group_request_mode=("asynchronous", "synchronous")[rng.below(2)],
                         mesh_mode=("asynchronous", "synchronous")[rng.below(2)])
    entries = []
    for pe in range(cfg.pes):
        count = 63 if pe < 8 else 62  # 1000 requests in total
        entries.append(({"pes": [pe]}, TrafficPattern(
            KINDS[rng.below(len(KINDS))], count=count,
            read_fraction=rng.random(), atomic_fraction=0.1 * rng.below(3),
            size=(4, 8, 16)[rng.below(3)], dependence_fraction=0.5 * rng.below(2),
            think_cycles=rng.below(4), hot_groups=(rng.below(4),), burst_length=4,
            burst_gap=rng.below(3), phase_offset=rng.below(2), start_offset=rng.below(10))))
    remap = RemapperConfig()
    if rng.below(2):
        remap = RemapperConfig("remap", (2, 4)[rng.below(2)], ("contiguous", "interleaved")[rng.below(2)],
                               seed=k)
    return Scenario(cfg, Workload(entries, name=f"mixed-{k}"), remap, seed=k, trace=True)


def criterion_2(n=10):
    t0 = time.perf_counter()
    fails = []
    for k in range(n):
        sc = random_small_scenario(k)
        ev, verdict = run_oracle(sc)
        _keep(ev)
        assert ev.report.data["meta"]["requests_issued"] == 1000
        if not verdict.passed:
            fails.append((k, verdict.describe()))
    dt = time.perf_counter() - t0
    ok = not fails and dt < 60
    detail = f"{n - len(fails)}/{n} scenarios identical to the per-cycle oracle in {dt:.1f} s"
    if fails:
        detail += f"; first failure: {fails[0][1].splitlines()[0:2]}"
    return _line(2, ok, detail)


# 3. per-hop latency and duration

def criterion_3():
    cfg = TopologyConfig(mesh_x=2, mesh_y=2, tiles_per_group=4)
    pat = TrafficPattern("uniform-random", count=160, read_fraction=0.5, atomic_fraction=0.1,
                         size=16)
    res = _keep(run_scenario(Scenario(cfg, Workload.single(pat), RemapperConfig("remap", 4, seed=3),
                                      seed=5, trace=True), keep_requests=True))
    checked = bad = 0
    for pe in res.system.pes:
        for req in pe.completed:
            for pkt, lat in ((req, req.one_way), (req.response, req.response.latency)):
                hops = pkt.path
                if lat != sum(h[4] + h[5] for h in hops) or pkt.duration != max(h[6] for h in hops):
                    bad += 1
            checked += 1
    ok = checked >= 10_000 and bad == 0
    return _line(3, ok, f"{checked} requests (and their responses) checked, {bad} mismatches")


# 4. round-robin fairness

def criterion_4(cycles=10_000):
    r = Router("r", RouterSpec(4, 1), [1], [2] * 4)
    r.sim = Bench()
    sink = Sink()
    r.route_fn = lambda pkt: 0
    r.target_fn = lambda out, pkt, t: sink
    for t in range(cycles):
        for i, port in enumerate(r.inputs):
            if port.can_accept(t):
                port.accept(Request(i, 0, id=t * 4 + i), t, t)
        r.tick(t)
    counts = [sum(1 for p, _, _ in sink.got if p.initiator == i) for i in range(4)]
    ok = all(abs(c - 2500) <= 1 for c in counts)
    return _line(4, ok, f"grants per injector over {cycles} cycles: {counts}")


# 5. conservation and determinism at full scale

def full_scale_workload(total=100_000, pes=1024):
    base, extra = divmod(total, pes)
    return Workload([({"pes": list(range(extra))}, TrafficPattern("uniform-random", count=base + 1)),
                     ({}, TrafficPattern("uniform-random", count=base))], name="uniform-1e5")


def criterion_5():
    sc = Scenario(TopologyConfig(), full_scale_workload(), seed=7)
    times, reports = [], []
    for _ in range(2):
        t0 = time.perf_counter()
        res = _keep(run_scenario(sc))
        times.append(time.perf_counter() - t0)
        reports.append(res.report.to_json())
    meta = res.report.data["meta"]
    ok = (meta["requests_issued"] == meta["responses_delivered"] == 100_000
          and reports[0] == reports[1] and max(times) < 60)
    return _line(5, ok, f"{meta['requests_issued']} requests, {meta['responses_delivered']} responses, "
                        f"reports identical={reports[0] == reports[1]}, "
                        f"wall {times[0]:.1f}/{times[1]:.1f} s, {meta['total_cycles']} cycles")


# 6. bank serialization

def criterion_6():
    cfg = TopologyConfig(mesh_x=1, mesh_y=1, tiles_per_group=2)
    amap = AddressMap(cfg)
    same = {0: [Op(Kind.READ, amap.compose(0, 0, 5, 0), 4)],
            1: [Op(Kind.READ, amap.compose(0, 0, 5, 1), 4)]}
    distinct = {pe: [Op(Kind.READ, amap.compose(0, 0, 2 * pe, 0), 4)] for pe in range(4)}
    out = []
    for trace in (same, distinct):
        sc = Scenario(cfg, Workload([], trace))
        res = _keep(run_scenario(sc, keep_requests=True))
        ref = run_scenario(sc, mode="oracle", keep_requests=True)
        done = sorted(r.completed_at for pe in res.system.pes for r in pe.completed)
        assert done == sorted(r.completed_at for pe in ref.system.pes for r in pe.completed)
        out.append(done)
    gap = out[0][1] - out[0][0]
    ok = gap == cfg.bank_service_cycles and len(set(out[1])) == 1
    return _line(6, ok, f"same bank completes {gap} cycle apart {out[0]}, distinct banks at {out[1]}")


# 7/8. remapping on hotspot traffic

HOT_GROUPS = (5, 6, 9, 10)


def hotspot_scenario(seed=1):
    # the first four tiles of every group inject; 80% of their traffic targets four groups
    pat = TrafficPattern("hotspot", count=100, hot_groups=HOT_GROUPS, skew=0.8)
    wl = Workload([({"tiles": [0, 1, 2, 3]}, pat)], name="hotspot")
    return Scenario(TopologyConfig(), wl, RemapperConfig(assignment="interleaved"), seed=seed)


@functools.lru_cache(maxsize=None)
def hotspot_sweep():
    rows = dse_sweep(hotspot_scenario(), (2, 4, 8, 16, 32), ("interleaved",))
    for r in rows:
        log.info("sweep row %s", r)
    return rows


def criterion_7():
    rows = hotspot_sweep()
    static = next(r for r in rows if r["assignment"] == "static")
    p4 = next(r for r in rows if r["partition_size"] == 4)
    ok = (p4["completion_cycles"] < static["completion_cycles"]
          and static["spatial_cv"] >= 2 * p4["spatial_cv"])
    return _line(7, ok, f"static {static['completion_cycles']} cycles CV {static['spatial_cv']:.3f}; "
                        f"remap p=4 {p4['completion_cycles']} cycles CV {p4['spatial_cv']:.3f} "
                        f"(CV ratio {static['spatial_cv'] / p4['spatial_cv']:.1f}x)")


def criterion_8():
    rows = [r for r in hotspot_sweep() if r["assignment"] != "static"]
    cyc = {r["partition_size"]: r["completion_cycles"] for r in rows}
    ok = len(set(cyc.values())) > 1 and all(cyc[p] < cyc[2] for p in (4, 8, 16, 32))
    best = min(cyc, key=cyc.get)
    # soft expectation: 8 ports best with 4 close; logged, not asserted
    soft = "8-port best" if best == 8 else f"{best}-port best (soft expectation 8 not met)"
    log.warning("partition sweep completion cycles %s; %s", cyc, soft)
    return _line(8, ok, f"completion cycles by partition size {cyc}; {soft}")


# 9. stall accounting identity

def criterion_9():
    runs = list(REPORTS)
    if not runs:  # standalone invocation
        for k in range(3):
            runs.append(run_scenario(random_small_scenario(k)).report)
    pes = bad = 0
    for rep in runs:
        total = rep.total_cycles
        for pe in rep.data["pes"].values():
            pes += 1
            bad += sum(pe["stalls"].values()) != total
    return _line(9, bad == 0 and pes > 0, f"{pes} PE records across {len(runs)} runs, {bad} violations")


# 10. staggered offsets on bursty traffic

def remote_port_peak(report):
    """Peak per-cycle conflicts on the tiles' remote-request ports.

    A tile receives remote requests through its port on the group request
    crossbar, so the conflicts are counted at that crossbar's outputs.
    """
    return max(r["peak_cycle_conflicts"] for name, r in report.data["routers"].items()
               if name.startswith("gxbar.req"))


def criterion_10():
    cfg = TopologyConfig(mesh_x=1, mesh_y=1)
    out = {}
    for off in (0, 1):
        pat = TrafficPattern("bursty", count=64, burst_length=16, phase_offset=off)
        res = _keep(run_scenario(Scenario(cfg, Workload.single(pat), seed=1)))
        out[off] = (remote_port_peak(res.report), res.total_cycles)
    ok = out[1][0] < out[0][0] and out[1][1] < out[0][1]
    return _line(10, ok, f"same phase: peak conflicts {out[0][0]}, {out[0][1]} cycles; "
                         f"staggered: peak conflicts {out[1][0]}, {out[1][1]} cycles")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_10, criterion_9]


@pytest.mark.parametrize("check", CRITERIA, ids=lambda f: f.__name__)
def test_criterion(check, capsys):
    ok, text = check()
    with capsys.disabled():
        print("\n" + text)
    assert ok, text


if __name__ == "__main__":
    logging.basicConfig(level=logging.WARNING)
    results = [c() for c in CRITERIA]
    for _, text in sorted(results, key=lambda r: int(r[1].split()[1].rstrip(":"))):
        print(text)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
