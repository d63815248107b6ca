import pytest

from oracles import ref_ceil_div, ref_round_robin
from conftest import Bench, Sink
from spmsim import Kind, Request, Router, RouterSpec, SyncRouter, TopologyConfig, build
from spmsim.netmodel import (EAST, NORTH, Response, RoutingError, dispatch_sync,
                             round_robin_order, transfer_duration, xy_route)
from spmsim.sim import measure_one_way
from spmsim.topology import AddressMap


def test_xy_route_resolves_x_first():
    assert xy_route((0, 0), (2, 1)) == EAST
    assert xy_route((2, 0), (2, 1)) == NORTH
    assert xy_route((2, 1), (2, 1)) is None


def test_tile_router_sends_local_bank_traffic_to_bank_port():
    cfg = TopologyConfig()
    system = build(cfg)
    amap = AddressMap(cfg)
    addr = amap.compose(0, 0, 3, 5)
    req = Request(0, addr)
    req.target = amap.map(addr)
    assert system.tile_req[0][0].route(req) == 3


def test_unroutable_packet_raises_routing_error():
    r = Router("r", RouterSpec(1, 2))
    r.route_fn = lambda pkt: 7
    with pytest.raises(RoutingError) as info:
        r.route(Request(0, 0x40))
    assert "r" in str(info.value) and info.value.addr == 0x40


@pytest.mark.parametrize("size,bw", [(4, 4), (64, 4), (6, 4), (1, 4), (17, 8)])
def test_transfer_duration_is_ceiling(size, bw):
    assert transfer_duration(size, bw) == ref_ceil_div(size, bw)


def test_payload_sizing_per_network():
    rd = Request(0, 0, Kind.READ, 64)
    wr = Request(0, 0, Kind.WRITE, 64)
    am = Request(0, 0, Kind.ATOMIC, 4)
    assert (rd.wire_bytes, wr.wire_bytes, am.wire_bytes) == (4, 64, 4)
    assert [Response(r, 0).wire_bytes for r in (rd, wr, am)] == [64, 4, 4]


def _single_output_router(n_inputs, cap=2, rr_update="grant"):
    bench = Bench(trace=True)
    r = Router("r", RouterSpec(n_inputs, 1, queue_capacity=cap, rr_update=rr_update), [1], [cap] * n_inputs)
    r.sim = bench
    sink = Sink()
    r.route_fn = lambda pkt: 0
    r.target_fn = lambda out, pkt, t: sink
    return r, sink


def test_round_robin_delays_match_reference():
    r, sink = _single_output_router(3)
    assert r.rr_pointer[0] == 2
    reqs = [Request(i, 0, id=i, trace=True) for i in range(3)]
    for i, req in enumerate(reqs):
        r.inputs[i].accept(req, 0, 0)
    for t in range(5):
        r.tick(t)
    delays = [req.path[0][5] for req in reqs]
    expected = ref_round_robin({0: [0], 1: [0], 2: [0]}, 3, pointer=2)
    assert delays == [g - a for _, a, g in sorted(expected)] == [0, 1, 2]
    assert [p.id for p, _, _ in sink.got] == [0, 1, 2]


def test_round_robin_order_rotates_after_pointer():
    assert round_robin_order([0, 1, 2, 3], 1, 4) == [2, 3, 0, 1]
    assert round_robin_order([3, 0], 3, 4) == [0, 3]


@pytest.mark.parametrize("rr_update", ["grant", "cycle"])
def test_saturated_output_grants_each_input_every_fourth_cycle(rr_update):
    r, sink = _single_output_router(4, rr_update=rr_update)
    grants = {i: [] for i in range(4)}
    nid = 0
    for t in range(10_000):
        for i, port in enumerate(r.inputs):
            if port.can_accept(t):
                port.accept(Request(i, 0, id=nid), t, t)
                nid += 1
        before = len(sink.got)
        r.tick(t)
        for pkt, _, _ in sink.got[before:]:
            grants[pkt.initiator].append(t)
    counts = [len(g) for g in grants.values()]
    assert max(counts) - min(counts) <= 1 and all(abs(c - 2500) <= 1 for c in counts)
    # steady state: every input is served exactly every 4th cycle
    for g in grants.values():
        gaps = {b - a for a, b in zip(g[10:], g[11:])}
        assert gaps == {4}


def test_process_hop_accumulates_latency_and_duration():
    bench = Bench()
    r = SyncRouter("s", RouterSpec(1, 1, dispatch_mode="synchronous"), [1])
    r.sim = bench
    r.route_fn = lambda pkt: 0
    req = Request(0, 0, Kind.WRITE, 4)
    req.latency, req.duration = 2, 1
    r.process_hop(req, 10)
    assert (req.latency, req.duration) == (3, 1)
    big = Request(0, 0, Kind.WRITE, 64)
    big.duration = 1
    r.process_hop(big, 100)
    assert big.duration == 16
    big.wire_bytes = 4
    r.process_hop(big, 200)
    assert big.duration == 16


def test_sync_router_serializes_on_busy_until():
    bench = Bench()
    r = SyncRouter("s", RouterSpec(2, 1, dispatch_mode="synchronous"), [1])
    r.sim = bench
    sink = Sink()
    r.route_fn = lambda pkt: 0
    r.target_fn = lambda out, pkt, t: sink
    a, b = Request(0, 0, Kind.WRITE, 8), Request(1, 0, Kind.WRITE, 8)
    assert dispatch_sync(r, a, 5, 5) and dispatch_sync(r, b, 5, 5)
    assert [arr for _, arr, _ in sink.got] == [6, 8]
    assert b.latency == 1 + 2 and r.conflicts[0] == 1


def test_async_port_enforces_credits():
    r, _ = _single_output_router(1, cap=2)
    port = r.inputs[0]
    port.accept(Request(0, 0), 0, 0)
    port.accept(Request(0, 0), 0, 0)
    assert not port.can_accept(0)
    r.tick(0)
    assert not port.can_accept(0)  # returned credit shows up next cycle
    assert port.can_accept(1)


@pytest.mark.parametrize("field,value", [("mesh_mode", "synchronous"),
                                         ("intra_group_request_mode", "synchronous")])
def test_sync_and_async_agree_at_zero_load(field, value):
    from dataclasses import replace

    base = TopologyConfig(mesh_x=3, mesh_y=2, tiles_per_group=4)
    amap = AddressMap(base)
    probes = [(0, amap.compose(g, t, 1, 0)) for g in range(base.groups) for t in range(4)]
    assert measure_one_way(base, probes) == measure_one_way(replace(base, **{field: value}), probes)
