"""Command-line front end: ``python -m spmsim``.

Exit codes: 0 success, 2 configuration error, 3 trace parse error,
4 cycle budget exhausted, 5 a self-check (oracle, calibration) failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .endpoints import TraceFormatError, TrafficPattern, Workload
from .engine import CycleBudgetExceeded, SimulationError
from .profiling import export
from .remap import RemapperConfig, dse_sweep, write_sweep_csv
from .sim import Scenario, calibrate, run_oracle, run_scenario
from .topology import AddressMap, ConfigError, TopologyConfig, UnmappedAddressError

log = logging.getLogger("spmsim")

EXIT_OK, EXIT_CONFIG, EXIT_TRACE, EXIT_BUDGET, EXIT_CHECK = 0, 2, 3, 4, 5

# named workloads; ``count`` is per PE
NAMED_WORKLOADS = {
    "uniform": lambda: Workload.single(TrafficPattern("uniform-random", count=100), "uniform"),
    "local-tile": lambda: Workload.single(TrafficPattern("local-tile", count=100), "local-tile"),
    "local-group": lambda: Workload.single(TrafficPattern("local-group", count=100), "local-group"),
    "remote-group": lambda: Workload.single(TrafficPattern("remote-group", count=100), "remote-group"),
    "hotspot": lambda: Workload([({"tiles": [0, 1, 2, 3]},
                                  TrafficPattern("hotspot", count=100, hot_groups=(5, 6, 9, 10)))],
                                name="hotspot"),
    "bursty": lambda: Workload.single(TrafficPattern("bursty", count=64), "bursty"),
    "bursty-staggered": lambda: Workload.single(TrafficPattern("bursty", count=64, phase_offset=1),
                                                "bursty-staggered"),
}

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spmsim", description="Run interconnect simulations.")
    p.add_argument("--config", metavar="PATH", help="topology JSON (default configuration if omitted)")
    p.add_argument("--workload", metavar="PATH|NAME", default="uniform",
                   help=f"workload JSON, trace CSV, or one of: {', '.join(NAMED_WORKLOADS)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-cycles", type=int, default=10_000_000)
    p.add_argument("--trace", action="store_true", help="write transfer and PE-state traces")
    p.add_argument("--report-dir", metavar="PATH", default="report")
    p.add_argument("--remap", choices=("static", "remap"), default="static")
    p.add_argument("--partition", type=int, default=32, metavar="N", help="remapper partition size")
    p.add_argument("--assignment", choices=("contiguous", "interleaved", "locality"),
                   default="contiguous", help="how ports are grouped into remapper blocks")
    p.add_argument("--oracle", action="store_true",
                   help="also run the per-cycle reference simulator and compare")
    p.add_argument("--sweep", metavar="PATH", help="sweep spec JSON; writes sweep.csv")
    p.add_argument("--calibrate", action="store_true", help="check zero-load latency anchors")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
    return p


def _load_workload(arg: str, cfg: TopologyConfig) -> Workload:
    if arg in NAMED_WORKLOADS:
        return NAMED_WORKLOADS[arg]()
    if not os.path.exists(arg):
        raise CliError(EXIT_CONFIG, f"workload: {arg!r} is neither a file nor a known name "
                                    f"({', '.join(NAMED_WORKLOADS)})")
    if arg.endswith(".csv"):
        try:
            return Workload.from_trace(arg, AddressMap(cfg), name=os.path.basename(arg))
        except UnmappedAddressError as exc:
            raise CliError(EXIT_TRACE, f"trace {arg}: {exc}") from None
    try:
        with open(arg) as fh:
            return Workload.from_dict(json.load(fh))
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"workload {arg}: {exc}") from None


def _scenario(args) -> Scenario:
    cfg = TopologyConfig.from_json(args.config) if args.config else TopologyConfig()
    workload = _load_workload(args.workload, cfg)
    remap = RemapperConfig(args.remap, args.partition, args.assignment, seed=args.seed)
    remap.validate(cfg.ports_per_group, cfg.channels_per_tile)
    if args.max_cycles < 1:
        raise ConfigError("max_cycles", "must be >= 1")
    return Scenario(cfg, workload, remap, args.seed, args.max_cycles, args.trace,
                    report_dir=args.report_dir)


def _sweep(args, scenario: Scenario) -> int:
    try:
        with open(args.sweep) as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_CONFIG, f"sweep spec {args.sweep}: {exc}") from None
    known = {"partition_sizes", "assignments", "seeds", "include_static", "grouping"}
    unknown = sorted(set(spec) - known)
    if unknown:
        raise CliError(EXIT_CONFIG, f"sweep spec: unknown key {unknown[0]!r}")
    rows = dse_sweep(scenario, spec.get("partition_sizes", [2, 4, 8, 16, 32]),
                     spec.get("assignments", ["contiguous"]), spec.get("seeds", [scenario.seed]),
                     spec.get("include_static", True), tuple(map(tuple, spec.get("grouping", []))))
    os.makedirs(args.report_dir, exist_ok=True)
    path = os.path.join(args.report_dir, "sweep.csv")
    sys.stdout.write(write_sweep_csv(rows, path))
    failed = [r for r in rows if "error" in r]
    return EXIT_CHECK if failed else EXIT_OK


def _calibrate() -> int:
    rows = calibrate()
    width = max(len(r["anchor"]) for r in rows)
    for r in rows:
        print(f"{r['anchor']:<{width}}  expected {r['expected']:>8}  measured {r['measured']:>8}  "
              f"{'pass' if r['pass'] else 'FAIL'}")
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_CHECK


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = os.environ.get("SIM_LOG_LEVEL", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.calibrate:
            return _calibrate()
        scenario = _scenario(args)
        if args.sweep:
            return _sweep(args, scenario)
        if args.oracle:
            result, verdict = run_oracle(scenario)
        else:
            result, verdict = run_scenario(scenario), None
        written = export(result.report, args.report_dir, args.format,
                         result.sim.tracer if args.trace else None)
        summary = result.summary()
        if verdict is not None:
            summary["oracle"] = "pass" if verdict.passed else "fail"
        with open(os.path.join(args.report_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=1)
            fh.write("\n")
        print(f"total cycles {summary['total_cycles']}  requests {summary['requests']}  "
              f"mean latency {summary['mean_latency']:.2f}  p99 latency {summary['p99_latency']:.2f}")
        for path in written:
            log.info("wrote %s", path)
        if verdict is not None:
            print(verdict.describe())
            if not verdict.passed:
                return EXIT_CHECK
        return EXIT_OK
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TraceFormatError, UnmappedAddressError) as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except CycleBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (OSError, ValueError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())
