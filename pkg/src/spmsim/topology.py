"""Hierarchical Tile/Group/Cluster construction and the interleaved address map."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

from .endpoints import PE, Bank, Barriers, PEContext, Workload
from .engine import SimulationError
from .netmodel import (
    EAST, NORTH, SOUTH, WEST, Router, RouterSpec, SyncRouter, xy_route,
)
from .remap import RemapperConfig, RemapSwitch

__all__ = [
    "TopologyConfig",
    "ConfigError",
    "UnmappedAddressError",
    "AddressMap",
    "Location",
    "PathDescriptor",
    "zero_load_latency",
    "manhattan",
    "classify_path",
    "build",
    "System",
]

_OPP = {NORTH: SOUTH, SOUTH: NORTH, EAST: WEST, WEST: EAST}


class ConfigError(SimulationError, ValueError):
    def __init__(self, field: str, reason: str):
        self.field = field
        super().__init__(f"invalid topology config: {field}: {reason}")


class UnmappedAddressError(SimulationError, ValueError):
    def __init__(self, addr: int, size: int):
        self.addr = addr
        super().__init__(f"unmapped address 0x{addr:x} (L1 size 0x{size:x})")


@dataclass(frozen=True)
class TopologyConfig:
    pes_per_tile: int = 4
    banks_per_tile: int = 16
    bank_bytes: int = 1024
    tiles_per_group: int = 16
    mesh_x: int = 4
    mesh_y: int = 4
    channels_per_tile: int = 2
    intra_group_ports_per_tile: int = 1
    word_bytes: int = 4
    bandwidth: int = 4
    queue_capacity: int = 2
    tile_xbar_cycles: int = 1
    group_xbar_cycles: int = 1
    mesh_hop_cycles: int = 4
    mesh_overhead_cycles: int = 3
    bank_service_cycles: int = 1
    atomic_extra_cycles: int = 1
    max_outstanding: int = 8
    interleave: str = "bank,tile,group"
    rr_update: str = "grant"
    intra_group_request_mode: str = "asynchronous"
    mesh_mode: str = "asynchronous"

    def __post_init__(self):
        counts = ("pes_per_tile", "banks_per_tile", "bank_bytes", "tiles_per_group", "mesh_x",
                  "mesh_y", "channels_per_tile", "intra_group_ports_per_tile", "word_bytes",
                  "bandwidth", "queue_capacity", "tile_xbar_cycles", "group_xbar_cycles",
                  "mesh_hop_cycles", "bank_service_cycles", "max_outstanding")
        for name in counts:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(name, f"must be an integer >= 1, got {v!r}")
        if self.atomic_extra_cycles < 0:
            raise ConfigError("atomic_extra_cycles", "must be >= 0")
        if self.intra_group_ports_per_tile != 1:
            raise ConfigError("intra_group_ports_per_tile", "only 1 intra-group port is modeled")
        if self.bank_bytes % self.word_bytes:
            raise ConfigError("bank_bytes", "must be a multiple of word_bytes")
        if self.mesh_overhead_cycles - 2 * self.tile_xbar_cycles < 1:
            raise ConfigError("mesh_overhead_cycles",
                              "must leave >= 1 cycle beyond the two tile crossbar traversals")
        order = tuple(s.strip() for s in self.interleave.split(","))
        if sorted(order) != ["bank", "group", "tile"]:
            raise ConfigError("interleave", "must be a permutation of bank,tile,group")
        for name in ("intra_group_request_mode", "mesh_mode"):
            if getattr(self, name) not in ("synchronous", "asynchronous"):
                raise ConfigError(name, "must be 'synchronous' or 'asynchronous'")
        if self.rr_update not in ("grant", "cycle"):
            raise ConfigError("rr_update", "must be 'grant' or 'cycle'")

    @property
    def groups(self) -> int:
        return self.mesh_x * self.mesh_y

    @property
    def pes(self) -> int:
        return self.pes_per_tile * self.tiles_per_group * self.groups

    @property
    def l1_bytes(self) -> int:
        return self.banks_per_tile * self.bank_bytes * self.tiles_per_group * self.groups

    @property
    def ports_per_group(self) -> int:
        return self.tiles_per_group * self.channels_per_tile

    @property
    def noc_instances(self) -> tuple[int, int]:
        n = self.ports_per_group
        return n, n

    @property
    def eject_cycles(self) -> int:
        return self.mesh_overhead_cycles - 2 * self.tile_xbar_cycles

    @classmethod
    def from_dict(cls, d: dict) -> "TopologyConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TopologyConfig":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("<file>", f"malformed JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("<file>", "top level must be an object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


class Location(NamedTuple):
    group: int
    tile: int
    bank: int
    offset: int


class AddressMap:
    """Word-interleaved mapping of byte addresses onto banks.

    With the default ``bank,tile,group`` order consecutive words walk the
    banks of a tile first, then the tiles of a group, then the groups.
    """

    def __init__(self, cfg: TopologyConfig):
        self.word_bytes = cfg.word_bytes
        self.banks_per_tile = cfg.banks_per_tile
        self.tiles_per_group = cfg.tiles_per_group
        self.groups = cfg.groups
        self.bank_words = cfg.bank_bytes // cfg.word_bytes
        self.total_banks = self.banks_per_tile * self.tiles_per_group * self.groups
        self.total_words = self.total_banks * self.bank_words
        self.size_bytes = self.total_words * self.word_bytes
        self.order = tuple(s.strip() for s in cfg.interleave.split(","))
        radix = {"bank": self.banks_per_tile, "tile": self.tiles_per_group, "group": self.groups}
        self._radix = [radix[k] for k in self.order]

    def map(self, addr: int) -> Location:
        if not 0 <= addr < self.size_bytes:
            raise UnmappedAddressError(addr, self.size_bytes)
        w = addr // self.word_bytes
        digits = {}
        for key, r in zip(self.order, self._radix):
            w, digits[key] = divmod(w, r)
        return Location(digits["group"], digits["tile"], digits["bank"], w)

    def compose(self, group: int, tile: int, bank: int, offset: int) -> int:
        vals = {"group": group, "tile": tile, "bank": bank}
        w = offset
        for key, r in zip(reversed(self.order), reversed(self._radix)):
            v = vals[key]
            if not 0 <= v < r:
                raise ValueError(f"{key} index {v} out of range [0, {r})")
            w = w * r + v
        if not 0 <= offset < self.bank_words:
            raise ValueError(f"word offset {offset} out of range [0, {self.bank_words})")
        return w * self.word_bytes


def group_xy(cfg: TopologyConfig, group: int) -> tuple[int, int]:
    return group % cfg.mesh_x, group // cfg.mesh_x


def manhattan(cfg: TopologyConfig, a: int, b: int) -> int:
    (ax, ay), (bx, by) = group_xy(cfg, a), group_xy(cfg, b)
    return abs(ax - bx) + abs(ay - by)


def zero_load_latency(src: int, dst: int, cfg: TopologyConfig | None = None) -> int:
    """One-way request-network latency between two distinct groups at zero load."""
    cfg = cfg or TopologyConfig()
    return cfg.mesh_overhead_cycles + cfg.mesh_hop_cycles * manhattan(cfg, src, dst)


@dataclass(frozen=True)
class PathDescriptor:
    cls: str  # intra-tile | intra-group | inter-group
    hops: int
    components: tuple[str, ...]


def pe_location(cfg: TopologyConfig, pe: int) -> PEContext:
    per_group = cfg.pes_per_tile * cfg.tiles_per_group
    group, rank = divmod(pe, per_group)
    tile, local = divmod(rank, cfg.pes_per_tile)
    return PEContext(pe, group, tile, local, rank)


def classify_path(cfg: TopologyConfig, pe: int, addr: int, amap: AddressMap | None = None) -> PathDescriptor:
    amap = amap or AddressMap(cfg)
    loc = amap.map(addr)
    src = pe_location(cfg, pe)
    if src.group == loc.group and src.tile == loc.tile:
        return PathDescriptor("intra-tile", 0,
                              (f"txbar.req.g{src.group}.t{src.tile}",
                               f"bank.g{loc.group}.t{loc.tile}.b{loc.bank}"))
    if src.group == loc.group:
        return PathDescriptor("intra-group", 0,
                              (f"txbar.req.g{src.group}.t{src.tile}", f"gxbar.req.g{src.group}",
                               f"txbar.req.g{loc.group}.t{loc.tile}",
                               f"bank.g{loc.group}.t{loc.tile}.b{loc.bank}"))
    hops = manhattan(cfg, src.group, loc.group)
    comps = [f"txbar.req.g{src.group}.t{src.tile}"]
    here, dest = group_xy(cfg, src.group), group_xy(cfg, loc.group)
    g = src.group
    while True:
        comps.append(f"mesh.req.c*.g{g}")
        d = xy_route(here, dest)
        if d is None:
            break
        dx, dy = {EAST: (1, 0), WEST: (-1, 0), NORTH: (0, 1), SOUTH: (0, -1)}[d]
        here = (here[0] + dx, here[1] + dy)
        g = here[1] * cfg.mesh_x + here[0]
    comps += [f"txbar.req.g{loc.group}.t{loc.tile}", f"bank.g{loc.group}.t{loc.tile}.b{loc.bank}"]
    return PathDescriptor("inter-group", hops, tuple(comps))


class System:
    """A fully wired cluster: components, their tick order and shared state."""

    def __init__(self, cfg: TopologyConfig, workload: Workload, remap: RemapperConfig, seed: int):
        self.cfg = cfg
        self.workload = workload
        self.remap_cfg = remap
        self.seed = seed
        self.amap = AddressMap(cfg)
        self.pes: list[PE] = []
        self.banks: list[Bank] = []
        self.tile_req: list[list] = []
        self.tile_resp: list[list[SyncRouter]] = []
        self.group_req: list = []
        self.group_resp: list[SyncRouter] = []
        self.mesh_req: list[list] = []   # [channel][group]
        self.mesh_resp: list[list] = []  # [channel][group]
        self.barriers = Barriers()
        self.switch = RemapSwitch(remap, cfg.ports_per_group, cfg.channels_per_tile)

    @property
    def routers(self) -> list:
        out = []
        for g in range(self.cfg.groups):
            out += self.tile_req[g] + self.tile_resp[g] + [self.group_req[g], self.group_resp[g]]
        for ch in self.mesh_req + self.mesh_resp:
            out += ch
        return out

    @property
    def tickers(self) -> list:
        """Components with a tick method, in the fixed evaluation order."""
        out = list(self.pes)
        for g in range(self.cfg.groups):
            out += [r for r in self.tile_req[g] if isinstance(r, Router)]
        out += [r for r in self.group_req if isinstance(r, Router)]
        for ch in self.mesh_req + self.mesh_resp:
            out += [r for r in ch if isinstance(r, Router)]
        out += self.banks
        return out

    def channel_routers(self, c: int) -> list:
        return self.mesh_req[c] + self.mesh_resp[c]

    def total_requests(self) -> int:
        return sum(pe.source.requests() for pe in self.pes)


def _entry(node, index: int):
    """Where an upstream hop delivers: an async input port or a sync router."""
    return node.inputs[index] if isinstance(node, Router) else node


def build(cfg: TopologyConfig, workload: Workload | None = None,
          remap: RemapperConfig | None = None, seed: int = 0) -> System:
    """Construct and wire the request and response networks."""
    workload = workload or Workload()
    remap = remap or RemapperConfig()
    sysm = System(cfg, workload, remap, seed)
    amap = sysm.amap
    workload.validate(cfg.pes, amap)
    remap.validate(cfg.ports_per_group, cfg.channels_per_tile)
    P, B, T, C, G = (cfg.pes_per_tile, cfg.banks_per_tile, cfg.tiles_per_group,
                     cfg.channels_per_tile, cfg.groups)
    q = cfg.queue_capacity
    penalty = remap.switch_latency if remap.mode == "remap" else 0
    tx = cfg.tile_xbar_cycles

    def spec(inputs, outputs, routing, mode, base=1):
        return RouterSpec(inputs=inputs, outputs=outputs, bandwidth=cfg.bandwidth,
                          base_latency=base, routing=routing, dispatch_mode=mode,
                          queue_capacity=q, rr_update=cfg.rr_update)

    def make(name, sp, base, caps):
        if sp.dispatch_mode == "synchronous":
            return SyncRouter(name, sp, base)
        return Router(name, sp, base, caps)

    igm, mm = cfg.intra_group_request_mode, cfg.mesh_mode

    # PEs
    pe_ctx = [pe_location(cfg, i) for i in range(cfg.pes)]
    for ctx in pe_ctx:
        src = workload.source_for(ctx, seed, amap)
        pe = PE(ctx, src, cfg.max_outstanding)
        pe.decode = amap.map
        pe.barriers = sysm.barriers
        nb = src.barriers()
        if nb:
            sysm.barriers.register(pe, nb)
        sysm.pes.append(pe)
    counts = {len(p) for p in sysm.barriers.participants}
    if sysm.barriers.participants and any(
            len(p) != len([pe for pe in sysm.pes if pe.source.barriers() > i])
            for i, p in enumerate(sysm.barriers.participants)):
        raise SimulationError(f"inconsistent barrier participation {sorted(counts)}")

    # banks
    bank_grid = [[[Bank(f"bank.g{g}.t{t}.b{b}", (g, t, b), cfg.bank_service_cycles,
                        cfg.atomic_extra_cycles, q + tx) for b in range(B)]
                  for t in range(T)] for g in range(G)]
    for g in range(G):
        for t in range(T):
            sysm.banks += bank_grid[g][t]

    # request network
    n_tin = P + 1 + C
    n_tout = B + 1 + C
    for g in range(G):
        row = []
        for t in range(T):
            caps = [q] * P + [q + cfg.group_xbar_cycles] + [q + cfg.eject_cycles] * C
            base = [tx] * B + [tx] + [tx + penalty] * C
            row.append(make(f"txbar.req.g{g}.t{t}", spec(n_tin, n_tout, "interleaved-address", igm),
                            base, caps))
        sysm.tile_req.append(row)
        sysm.group_req.append(make(f"gxbar.req.g{g}", spec(T, T, "interleaved-address", igm),
                                   [cfg.group_xbar_cycles] * T, [q + tx] * T))
    n_min, n_mout = 5, 4 + T
    hop, ej = cfg.mesh_hop_cycles, cfg.eject_cycles
    for c in range(cfg.ports_per_group):
        sysm.mesh_req.append([
            make(f"mesh.req.c{c}.g{g}", spec(n_min, n_mout, "xy-mesh", mm),
                 [hop] * 4 + [ej] * T, [q + hop] * 4 + [q + tx + penalty])
            for g in range(G)])
        sysm.mesh_resp.append([
            make(f"mesh.resp.c{c}.g{g}", spec(n_min, n_mout, "xy-mesh", mm),
                 [hop] * 4 + [ej] * T, [q + hop] * 4 + [q + tx])
            for g in range(G)])

    # response network (synchronous within a group)
    for g in range(G):
        sysm.tile_resp.append([
            SyncRouter(f"txbar.resp.g{g}.t{t}",
                       spec(B + 1 + C, P + 1 + C, "fixed-port", "synchronous"), [tx] * (P + 1 + C))
            for t in range(T)])
        sysm.group_resp.append(SyncRouter(f"gxbar.resp.g{g}", spec(T, T, "fixed-port", "synchronous"),
                                          [cfg.group_xbar_cycles] * T))

    xy = [group_xy(cfg, g) for g in range(G)]
    neighbor = {}
    for g in range(G):
        x, y = xy[g]
        for d, (dx, dy) in {EAST: (1, 0), WEST: (-1, 0), NORTH: (0, 1), SOUTH: (0, -1)}.items():
            nx, ny = x + dx, y + dy
            if 0 <= nx < cfg.mesh_x and 0 <= ny < cfg.mesh_y:
                neighbor[g, d] = ny * cfg.mesh_x + nx

    switch = sysm.switch

    # wiring: tile request crossbars
    for g in range(G):
        for t in range(T):
            r = sysm.tile_req[g][t]

            def route(req, g=g, t=t, r=r):
                loc = req.target
                if loc.group == g:
                    if loc.tile == t:
                        return loc.bank
                    return B
                return B + 1 + loc.bank % C

            def target(out, req, cyc, g=g, t=t):
                if out < B:
                    return bank_grid[g][t][out].inport
                if out == B:
                    return _entry(sysm.group_req[g], t)
                ch = switch.channel(cyc, t * C + out - B - 1)
                req.channel = ch
                return _entry(sysm.mesh_req[ch][g], 4)

            r.route_fn, r.target_fn = route, target
            banks_here = bank_grid[g][t]

            def on_grant(out, arb, banks_here=banks_here):
                if out < B:
                    banks_here[out].on_xbar_grant(out, arb)

            r.on_grant = on_grant
            for pe_local in range(P):
                pe = sysm.pes[(g * T + t) * P + pe_local]
                pe.port = _entry(r, pe_local)

        gr = sysm.group_req[g]
        gr.route_fn = lambda req: req.target.tile
        gr.target_fn = (lambda out, req, cyc, g=g: _entry(sysm.tile_req[g][out], P))

    # wiring: mesh routers (both networks)
    for c in range(cfg.ports_per_group):
        port_in = P + 1 + c % C
        for g in range(G):
            for net, routers in (("req", sysm.mesh_req[c]), ("resp", sysm.mesh_resp[c])):
                r = routers[g]
                here = xy[g]
                if net == "req":
                    def route(req, here=here):
                        loc = req.target
                        d = xy_route(here, xy[loc.group])
                        return 4 + loc.tile if d is None else d

                    def target(out, req, cyc, g=g, routers=routers):
                        if out >= 4:
                            return _entry(sysm.tile_req[g][out - 4], port_in)
                        return _entry(routers[neighbor[g, out]], _OPP[out])
                else:
                    def route(resp, here=here):
                        src = pe_ctx[resp.request.initiator]
                        d = xy_route(here, xy[src.group])
                        return 4 + src.tile if d is None else d

                    def target(out, resp, cyc, g=g, routers=routers):
                        if out >= 4:
                            return sysm.tile_resp[g][out - 4]
                        return _entry(routers[neighbor[g, out]], _OPP[out])
                r.route_fn, r.target_fn = route, target

    # wiring: response crossbars and banks
    for g in range(G):
        for t in range(T):
            r = sysm.tile_resp[g][t]

            def route(resp, g=g, t=t):
                src = pe_ctx[resp.request.initiator]
                if src.group == g:
                    if src.tile == t:
                        return src.local
                    return P
                return P + 1 + resp.request.channel % C

            def target(out, resp, cyc, g=g, t=t):
                if out < P:
                    return sysm.pes[(g * T + t) * P + out].response_port
                if out == P:
                    return sysm.group_resp[g]
                return _entry(sysm.mesh_resp[resp.request.channel][g], 4)

            r.route_fn, r.target_fn = route, target
            for b in bank_grid[g][t]:
                b.response_entry = r
        gr = sysm.group_resp[g]
        gr.route_fn = lambda resp: pe_ctx[resp.request.initiator].tile
        gr.target_fn = (lambda out, resp, cyc, g=g: sysm.tile_resp[g][out])

    for i, comp in enumerate(sysm.tickers):
        comp.id = i
    return sysm
