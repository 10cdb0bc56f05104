"""Two-phase spatial prefetcher.

Per aligned region, the footprint of touched blocks accumulates from the
first (trigger) access until the region's generation ends by table eviction
or timeout; the finished footprint is stored once in a history table slot
indexed by the short event, tagged with the full long event.

A later trigger probes that slot with both key lengths:
  long match  (PC + trigger block address)  -> block prefetches into the LLC
  short match (PC + trigger block offset)   -> far-to-near row migrations

One stored entry serves both lookup lengths, so a long hit implies the
short probe would have hit the same slot.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .dram import DramConfig, DramCoord, Mode, Segment, map_address, segment_of
from .errors import ConfigError

MASK64 = (1 << 64) - 1


@dataclass
class PrefetchConfig:
    enabled: bool = False
    region_bytes: int = 2048
    history_slots: int = 4096
    accumulation_capacity: int = 64
    gen_timeout: int = 100_000
    max_prefetch_blocks: int = 32
    max_migrations: int = 2
    inflight_limit: int = 32

    def __post_init__(self):
        for name in ("region_bytes", "history_slots"):
            value = getattr(self, name)
            if value < 1 or (value & (value - 1)):
                raise ConfigError(f"prefetch.{name} must be a power of two")
        for name in ("accumulation_capacity", "gen_timeout",
                     "max_prefetch_blocks", "max_migrations", "inflight_limit"):
            if getattr(self, name) < 1:
                raise ConfigError(f"prefetch.{name} must be >= 1")


def event_hash(pc: int, offset: int) -> int:
    """Short-event hash: multiplicative mixing, identical everywhere.

        h = (pc * 0x9E3779B97F4A7C15) XOR (offset * 0xBF58476D1CE4E5B9)   mod 2^64
        h ^= h >> 33;  h = h * 0xFF51AFD7ED558CCD mod 2^64;  h ^= h >> 29
    """
    h = ((pc * 0x9E3779B97F4A7C15) & MASK64) ^ ((offset * 0xBF58476D1CE4E5B9) & MASK64)
    h ^= h >> 33
    h = (h * 0xFF51AFD7ED558CCD) & MASK64
    h ^= h >> 29
    return h


class DecisionKind(enum.Enum):
    NONE = "none"
    LONG_HIT = "long_hit"
    SHORT_HIT = "short_hit"


@dataclass
class PrefetchDecision:
    kind: DecisionKind
    region_base: int = 0
    trigger_pc: int = 0
    footprint_offsets: tuple[int, ...] = ()
    # LONG_HIT: block addresses to prefetch (footprint rebased, degree-clamped)
    block_addresses: tuple[int, ...] = ()
    # SHORT_HIT: far rows covering the footprint in the trigger's region
    migration_rows: tuple[DramCoord, ...] = ()


NO_DECISION = PrefetchDecision(DecisionKind.NONE)


@dataclass
class AccumulationEntry:
    region_base: int
    pc: int
    trigger_block: int     # absolute block address of the trigger access
    footprint: int         # bit per block in the region
    last_touch_cycle: int
    lru_stamp: int


@dataclass
class HistoryEntry:
    pc: int
    trigger_block: int
    trigger_offset: int
    footprint: int
    lru_stamp: int


@dataclass
class PrefetchMetrics:
    """Prefetch lifecycle counters and the ratios derived from them.

    useful: prefetched LLC lines or migrated rows demand-touched before
    eviction. late: the demand arrived while the prefetch or migration was
    still in flight (every late prefetch is also useful). Zero denominators
    report 0.
    """

    issued: int = 0
    useful: int = 0
    late: int = 0
    merged_dropped: int = 0   # decisions skipped: target resident or in flight
    uncovered_misses: int = 0  # demand DRAM misses with no prefetch involvement

    @property
    def accuracy(self) -> float:
        return self.useful / self.issued if self.issued else 0.0

    @property
    def lateness(self) -> float:
        return self.late / self.useful if self.useful else 0.0

    @property
    def coverage(self) -> float:
        denom = self.useful + self.uncovered_misses
        return self.useful / denom if denom else 0.0


class SpatialPrefetcher:
    def __init__(self, config: PrefetchConfig, dram: DramConfig,
                 line_bytes: int):
        self.config = config
        self.dram = dram
        self.line_bytes = line_bytes
        self.blocks_per_region = config.region_bytes // line_bytes
        if self.blocks_per_region < 1 or self.blocks_per_region > 64:
            raise ConfigError(
                f"region of {config.region_bytes}B / {line_bytes}B lines gives "
                f"{self.blocks_per_region} blocks; must be in 1..64")
        self.accumulation: dict[int, AccumulationEntry] = {}
        self.history: list[Optional[HistoryEntry]] = [None] * config.history_slots
        self.metrics = PrefetchMetrics()
        self._clock = 0
        self.generations_committed = 0

    # -- region arithmetic -------------------------------------------------

    def region_of(self, address: int) -> int:
        return address & ~(self.config.region_bytes - 1)

    def offset_of(self, address: int) -> int:
        return (address & (self.config.region_bytes - 1)) // self.line_bytes

    def block_of(self, address: int) -> int:
        return address & ~(self.line_bytes - 1)

    # -- generation bookkeeping --------------------------------------------

    def observe(self, pc: int, address: int, now: int) -> PrefetchDecision:
        """Record one demand access at the observation point.

        Accesses inside an accumulating region only extend its footprint.
        A generation-starting access probes history first, then opens a new
        generation (committing the LRU entry if the table is full).
        """
        self._commit_timeouts(now)
        region = self.region_of(address)
        entry = self.accumulation.get(region)
        if entry is not None:
            entry.footprint |= 1 << self.offset_of(address)
            entry.last_touch_cycle = now
            self._clock += 1
            entry.lru_stamp = self._clock
            return NO_DECISION

        decision = self.lookup(pc, address)
        if len(self.accumulation) >= self.config.accumulation_capacity:
            lru_region = min(self.accumulation,
                             key=lambda r: self.accumulation[r].lru_stamp)
            self.commit_generation(self.accumulation.pop(lru_region))
        self._clock += 1
        self.accumulation[region] = AccumulationEntry(
            region_base=region, pc=pc, trigger_block=self.block_of(address),
            footprint=1 << self.offset_of(address),
            last_touch_cycle=now, lru_stamp=self._clock)
        return decision

    def _commit_timeouts(self, now: int) -> None:
        expired = [r for r, e in self.accumulation.items()
                   if now - e.last_touch_cycle > self.config.gen_timeout]
        for region in expired:
            self.commit_generation(self.accumulation.pop(region))

    def commit_generation(self, entry: AccumulationEntry) -> None:
        """Store a finished footprint under its short-event slot."""
        offset = self.offset_of(entry.trigger_block)
        slot = event_hash(entry.pc, offset) & (self.config.history_slots - 1)
        self._clock += 1
        self.history[slot] = HistoryEntry(
            pc=entry.pc, trigger_block=entry.trigger_block,
            trigger_offset=offset, footprint=entry.footprint,
            lru_stamp=self._clock)
        self.generations_committed += 1

    # -- lookup --------------------------------------------------------------

    def lookup(self, pc: int, address: int) -> PrefetchDecision:
        region = self.region_of(address)
        offset = self.offset_of(address)
        block = self.block_of(address)
        slot = event_hash(pc, offset) & (self.config.history_slots - 1)
        entry = self.history[slot]
        if entry is None:
            return NO_DECISION
        offsets = tuple(i for i in range(self.blocks_per_region)
                        if entry.footprint >> i & 1)
        if entry.pc == pc and entry.trigger_block == block:
            blocks = tuple(region + i * self.line_bytes
                           for i in offsets[: self.config.max_prefetch_blocks])
            return PrefetchDecision(
                kind=DecisionKind.LONG_HIT, region_base=region, trigger_pc=pc,
                footprint_offsets=offsets, block_addresses=blocks)
        rows = self._footprint_rows(region, offsets)
        return PrefetchDecision(
            kind=DecisionKind.SHORT_HIT, region_base=region, trigger_pc=pc,
            footprint_offsets=offsets,
            migration_rows=tuple(rows[: self.config.max_migrations]))

    def _footprint_rows(self, region: int, offsets: tuple[int, ...]) -> list[DramCoord]:
        """Rows covering the footprint blocks, rebased into `region`.

        TLDRAM keeps only far-segment rows (near rows need no migration);
        CROW keeps every row (copy-row duplication candidates); BASELINE has
        no migration target, so no rows.
        """
        if self.dram.mode is Mode.BASELINE:
            return []
        rows: list[DramCoord] = []
        seen = set()
        for i in offsets:
            address = region + i * self.line_bytes
            if address >= self.dram.total_bytes:
                continue
            coord = map_address(address, self.dram)
            key = (coord.bank_key, coord.subarray, coord.row)
            if key in seen:
                continue
            seen.add(key)
            if self.dram.mode is Mode.TLDRAM \
                    and segment_of(coord, self.dram) is not Segment.FAR:
                continue
            rows.append(coord)
        return rows
