"""Memory-access trace parsing, serialization, and synthetic workload generation.

Trace text format: one record per line, ``<cycle> <pc-hex> <addr-hex> <R|W>``,
whitespace separated. Hex fields accept an optional ``0x`` prefix. Lines that
are blank or start with ``#`` are skipped. Arrival cycles must be
non-decreasing in trace order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .errors import TraceParseError

MASK64 = (1 << 64) - 1


class RequestKind(enum.Enum):
    READ = "R"
    WRITE = "W"


class Origin(enum.Enum):
    DEMAND = "demand"
    PREFETCH_LLC = "prefetch_llc"
    MIGRATION = "migration"


@dataclass
class MemoryRequest:
    """One trace record. Parsed records are always DEMAND origin; the
    controller generates PREFETCH_LLC and MIGRATION traffic internally."""

    id: int
    arrival_cycle: int
    pc: int
    address: int
    kind: RequestKind
    origin: Origin = Origin.DEMAND


class TracePattern(enum.Enum):
    STRIDE = "stride"
    RANDOM = "random"
    FOOTPRINT_REPEAT = "footprint"
    THRASH = "thrash"


@dataclass
class TraceGenSpec:
    pattern: TracePattern
    count: int = 1
    base_address: int = 0
    stride_bytes: int = 64
    region_count: int = 1
    iterations: int = 1
    seed: int = 1
    inter_arrival: int = 1
    # Extra generator knobs beyond the core fields: RANDOM draws addresses
    # from [base, base + span_bytes); FOOTPRINT_REPEAT regions are
    # region_bytes wide and each region visit makes touches_per_region
    # accesses (0 = one touch per selected block).
    span_bytes: int = 1 << 30
    region_bytes: int = 2048
    touches_per_region: int = 0
    base_pc: int = 0x400000


class Xorshift64Star:
    """Deterministic 64-bit generator. Recurrence (all ops mod 2^64):

        x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27;  out = x * 0x2545F4914F6CDD1D

    A zero seed is remapped to 0x9E3779B97F4A7C15 since the all-zero state
    is a fixed point. Equal seeds give bit-identical streams.
    """

    MULT = 0x2545F4914F6CDD1D

    def __init__(self, seed: int):
        self.state = (seed & MASK64) or 0x9E3779B97F4A7C15

    def next(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * self.MULT) & MASK64

    def below(self, bound: int) -> int:
        return self.next() % bound

    def shuffle(self, items: list) -> None:
        # Fisher-Yates, fixed order for a fixed seed
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def _parse_int(text: str, what: str, line_no: int, hex_field: bool) -> int:
    try:
        return int(text, 16 if hex_field else 10)
    except ValueError:
        raise TraceParseError(f"non-numeric {what} '{text}'", line_no) from None


def parse_trace_line(line: str, line_no: int = 0,
                     prev_cycle: Optional[int] = None,
                     next_id: int = 0) -> Optional[MemoryRequest]:
    """Parse one trace line. Returns None for comments and blank lines."""
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    fields = stripped.split()
    if len(fields) != 4:
        raise TraceParseError(
            f"expected 4 fields, got {len(fields)}", line_no)
    cycle = _parse_int(fields[0], "cycle", line_no, hex_field=False)
    if cycle < 0:
        raise TraceParseError(f"negative cycle {cycle}", line_no)
    pc = _parse_int(fields[1], "pc", line_no, hex_field=True)
    address = _parse_int(fields[2], "address", line_no, hex_field=True)
    if fields[3] == "R":
        kind = RequestKind.READ
    elif fields[3] == "W":
        kind = RequestKind.WRITE
    else:
        raise TraceParseError(f"kind must be R or W, got '{fields[3]}'", line_no)
    if prev_cycle is not None and cycle < prev_cycle:
        raise TraceParseError(
            f"cycle {cycle} decreases below previous {prev_cycle}", line_no)
    return MemoryRequest(id=next_id, arrival_cycle=cycle, pc=pc,
                         address=address, kind=kind)


def parse_trace(lines: Iterable[str]) -> list[MemoryRequest]:
    """Parse a whole trace. Raises TraceParseError naming the bad line."""
    requests: list[MemoryRequest] = []
    prev_cycle: Optional[int] = None
    for line_no, line in enumerate(lines, start=1):
        req = parse_trace_line(line, line_no, prev_cycle, len(requests))
        if req is None:
            continue
        prev_cycle = req.arrival_cycle
        requests.append(req)
    return requests


def serialize_request(req: MemoryRequest) -> str:
    return f"{req.arrival_cycle} 0x{req.pc:x} 0x{req.address:x} {req.kind.value}"


def serialize_trace(requests: Iterable[MemoryRequest]) -> str:
    return "".join(serialize_request(r) + "\n" for r in requests)


def _validate_spec(spec: TraceGenSpec) -> None:
    if spec.pattern is not TracePattern.FOOTPRINT_REPEAT and spec.count < 1:
        raise ValueError("count must be >= 1")
    if spec.inter_arrival < 1:
        raise ValueError("inter_arrival must be >= 1")
    if spec.pattern is TracePattern.STRIDE and spec.stride_bytes == 0:
        raise ValueError("stride of 0 is not a stride")
    if spec.pattern is TracePattern.FOOTPRINT_REPEAT:
        if spec.region_count < 1 or spec.iterations < 1:
            raise ValueError("region_count and iterations must be >= 1")
        if spec.region_bytes < spec.stride_bytes:
            raise ValueError("region_bytes smaller than one block")


def _footprint_sequence(spec: TraceGenSpec, region: int) -> list[int]:
    """Fixed per-region block-offset sequence, derived from (seed, region).

    A pseudo-random subset of the region's blocks, visited in a fixed
    shuffled order; when touches_per_region exceeds the subset size the
    tail revisits subset members. Identical for every pass by construction.
    """
    blocks = spec.region_bytes // spec.stride_bytes
    rng = Xorshift64Star(spec.seed ^ ((region + 1) * 0x9E3779B97F4A7C15))
    subset_size = blocks // 2 + rng.below(blocks - blocks // 2) + 1
    subset_size = min(subset_size, blocks)
    offsets = list(range(blocks))
    rng.shuffle(offsets)
    subset = offsets[:subset_size]
    length = spec.touches_per_region or subset_size
    seq = [subset[i % subset_size] for i in range(min(length, subset_size))]
    while len(seq) < length:
        seq.append(subset[rng.below(subset_size)])
    return seq


def generate_trace(spec: TraceGenSpec, dram_config=None) -> list[MemoryRequest]:
    """Synthesize a deterministic workload. Byte-identical output for equal
    spec (and config, for THRASH which spaces touches one DRAM row apart)."""
    _validate_spec(spec)
    requests: list[MemoryRequest] = []
    cycle = 0

    def emit(pc: int, address: int) -> None:
        nonlocal cycle
        requests.append(MemoryRequest(
            id=len(requests), arrival_cycle=cycle, pc=pc,
            address=address, kind=RequestKind.READ))
        cycle += spec.inter_arrival

    if spec.pattern is TracePattern.STRIDE:
        for i in range(spec.count):
            emit(spec.base_pc, spec.base_address + i * spec.stride_bytes)

    elif spec.pattern is TracePattern.RANDOM:
        rng = Xorshift64Star(spec.seed)
        line = spec.stride_bytes
        slots = max(1, spec.span_bytes // line)
        for _ in range(spec.count):
            emit(spec.base_pc, spec.base_address + rng.below(slots) * line)

    elif spec.pattern is TracePattern.FOOTPRINT_REPEAT:
        sequences = [_footprint_sequence(spec, r) for r in range(spec.region_count)]
        for _ in range(spec.iterations):
            for r in range(spec.region_count):
                base = spec.base_address + r * spec.region_bytes
                pc = spec.base_pc + 4 * r
                for offset in sequences[r]:
                    emit(pc, base + offset * spec.stride_bytes)

    elif spec.pattern is TracePattern.THRASH:
        if dram_config is None:
            raise ValueError("THRASH needs a DramConfig to space rows")
        emitted = 0
        combined = spec.base_address >> dram_config.row_shift
        limit = dram_config.subarrays_per_bank * dram_config.rows_per_subarray
        while emitted < spec.count:
            if combined >= limit:
                raise ValueError(
                    f"config has only {limit} rows per bank, "
                    f"cannot emit {spec.count} distinct-row touches")
            row = combined & (dram_config.rows_per_subarray - 1)
            if dram_config.is_near_reserved(row):
                combined += 1
                continue
            emit(spec.base_pc, combined << dram_config.row_shift)
            combined += 1
            emitted += 1

    else:  # pragma: no cover
        raise ValueError(f"unknown pattern {spec.pattern}")
    return requests
