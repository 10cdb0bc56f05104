"""Trace-driven simulator of tiered-latency DRAM behind a small LLC,
with a two-phase spatial prefetcher: long-event matches prefetch blocks
into the LLC, short-event matches trigger far-to-near row migrations."""

from .cachemodel import Llc, LlcConfig
from .controller import SimOptions, SimStats, Simulation, run_simulation
from .dram import DramConfig, DramCoord, Mode, Segment, map_address
from .errors import ConfigError, SimulationFault, TierSimError, TraceParseError
from .prefetch import PrefetchConfig, SpatialPrefetcher
from .report import RunConfig, build_report, compare, emit, load_config
from .trace import (MemoryRequest, Origin, RequestKind, TraceGenSpec,
                    TracePattern, generate_trace, parse_trace, serialize_trace)

__version__ = "0.1.0"
