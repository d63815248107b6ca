"""
Zero-load latency across the cluster
====================================

A single request crosses an idle interconnect. Its one-way latency
depends only on where it goes: the same tile, another tile of the same
group, or another group over the mesh.
"""

from spmsim import AddressMap, TopologyConfig, zero_load_latency
from spmsim.sim import calibrate, measure_one_way

cfg = TopologyConfig()
amap = AddressMap(cfg)

# PE 0 sits in tile 0 of group 0. Probe one bank in each region.
probes = {
    "same tile": amap.compose(0, 0, 3, 0),
    "same group, tile 5": amap.compose(0, 5, 3, 0),
    "group 1 (1 hop)": amap.compose(1, 0, 3, 0),
    "group 15 (6 hops)": amap.compose(15, 0, 3, 0),
}
measured = measure_one_way(cfg, [(0, a) for a in probes.values()])
for name, cycles in zip(probes, measured):
    print(f"{name:<20} {cycles:>3} cycles")

# Inter-group latency grows linearly with the Manhattan distance.
print("analytic, 0 -> 15:", zero_load_latency(0, 15, cfg))

# The calibration table checks every anchor at once.
for row in calibrate(cfg):
    print(f"{row['anchor']:<34} expected {row['expected']:>8} measured {row['measured']:>8}")
