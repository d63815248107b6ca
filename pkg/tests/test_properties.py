from hypothesis import HealthCheck, given, settings

from scenarios import small_scenarios
from spmsim.endpoints import Bank, STALL_CATEGORIES
from spmsim.netmodel import Router
from spmsim.sim import Simulation, run_scenario
from spmsim.profiling import collect
from spmsim.topology import build

PROPS = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@PROPS
@given(small_scenarios())
def test_conservation_and_stall_identity(sc):
    res = run_scenario(sc, keep_requests=True)
    meta = res.report.data["meta"]
    assert meta["responses_delivered"] == meta["requests_issued"] == res.system.total_requests()
    ids = [r.id for pe in res.system.pes for r in pe.completed]
    assert len(ids) == len(set(ids))
    for pe in res.report.data["pes"].values():
        assert set(pe["stalls"]) == set(STALL_CATEGORIES)
        assert sum(pe["stalls"].values()) == res.total_cycles


@PROPS
@given(small_scenarios(max_count=25))
def test_per_hop_latency_and_duration(sc):
    sc.trace = True
    res = run_scenario(sc, keep_requests=True)
    for pe in res.system.pes:
        for req in pe.completed:
            lat = 0
            for hop in req.path:
                assert hop[3] >= hop[2]  # grant never precedes arrival
                lat += hop[4] + hop[5]
            assert req.one_way == lat
            assert req.duration == max(h[6] for h in req.path)
            assert req.completed_at > req.served_at >= req.issued_at


@PROPS
@given(small_scenarios(max_count=30))
def test_outstanding_queue_and_bank_limits_every_cycle(sc):
    system = build(sc.topology, sc.workload, sc.remap, sc.seed)
    sim = Simulation(system, mode="oracle")
    limit = sc.topology.max_outstanding
    served = {b.name: [] for b in system.banks}

    def watch(comp):
        inner = comp.tick

        def tick(t):
            inner(t)
            if hasattr(comp, "inflight"):
                assert len(comp.inflight) <= limit
            elif isinstance(comp, Router):
                for port in comp.inputs:
                    assert len(port.queue) <= port.capacity
            elif isinstance(comp, Bank):
                assert len(comp.inport.queue) <= comp.inport.capacity
                if comp.accesses and (not served[comp.name] or served[comp.name][-1][1] != comp.accesses):
                    served[comp.name].append((t, comp.accesses))
        comp.tick = tick

    for comp in system.tickers:
        watch(comp)
    total = sim.run(sc.max_cycles)
    svc = sc.topology.bank_service_cycles
    for log in served.values():
        times = [t for t, _ in log]
        assert all(b - a >= svc for a, b in zip(times, times[1:]))
    collect(system, total)


@PROPS
@given(small_scenarios(max_count=25))
def test_responses_return_on_request_channel(sc):
    sc.trace = True
    res = run_scenario(sc, keep_requests=True)
    channels = {}
    for rec in res.sim.tracer.records:
        if rec.component.startswith("mesh."):
            net, ch = rec.component.split(".")[1:3]
            channels.setdefault((rec.request, net), set()).add(int(ch[1:]))
    for pe in res.system.pes:
        for req in pe.completed:
            if req.channel >= 0:
                assert channels[req.id, "req"] == channels[req.id, "resp"] == {req.channel}
            else:
                assert (req.id, "req") not in channels
