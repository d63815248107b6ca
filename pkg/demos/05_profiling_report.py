"""
Reading a profiling report
==========================

Run a uniform workload on the full cluster, export the report, and look
at a few of the counters it carries.
"""

import tempfile

from spmsim import Scenario, TopologyConfig, TrafficPattern, Workload
from spmsim import congestion_stats, export, utilization
from spmsim.sim import run_scenario

res = run_scenario(Scenario(TopologyConfig(),
                            Workload.single(TrafficPattern("uniform-random", count=20)), seed=3))
rep = res.report
print("total cycles", rep.total_cycles, "latency", rep.data["latency"])

# Stall breakdown of one PE; the categories partition the run.
stalls = rep.data["pes"]["pe.100"]["stalls"]
print(stalls, sum(stalls.values()) == rep.total_cycles)

# A mesh router in the middle of the mesh.
name = "mesh.req.c0.g5"
print(name, "utilization", round(utilization(rep, name), 3), congestion_stats(rep, name))

# Busiest bank.
bank, counters = max(rep.data["banks"].items(), key=lambda kv: kv[1]["conflict_wait_cycles"])
print("busiest bank", bank, counters)

out = tempfile.mkdtemp()
print(export(rep, out))
