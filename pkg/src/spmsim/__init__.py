"""Event-driven model of a hierarchical many-core scratchpad interconnect."""

from .endpoints import TrafficPattern, Workload, read_trace, write_trace
from .engine import CycleBudgetExceeded, Engine, SimulationError
from .netmodel import Kind, Request, Router, RouterSpec, SyncRouter
from .profiling import ProfileReport, congestion_stats, export, utilization
from .remap import RemapperConfig, dse_sweep, imbalance_metrics, remap_assignment
from .rng import SplitMix64
from .sim import Scenario, Simulation, run_oracle, run_scenario
from .topology import AddressMap, ConfigError, TopologyConfig, build, zero_load_latency

__version__ = "0.1.0"
