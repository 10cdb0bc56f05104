"""Set-associative last-level cache with LRU replacement and pollution tracking.

Write-allocate, writeback: dirty evictions are reported to the caller,
which turns them into DRAM writes. Lines filled by prefetch carry a
`prefetched` flag until first demand touch (that touch counts one useful
prefetch). Blocks evicted by prefetch fills enter a bounded exact-membership
victim shadow; a later demand miss on a shadowed block is a pollution miss.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigError, SimulationFault
from .trace import Origin, RequestKind


@dataclass
class LlcConfig:
    size_bytes: int = 2 * 1024 * 1024
    associativity: int = 16
    line_bytes: int = 64
    enabled: bool = True
    hit_cycles: int = 12

    def __post_init__(self):
        for name in ("size_bytes", "associativity", "line_bytes"):
            value = getattr(self, name)
            if value < 1 or (value & (value - 1)):
                raise ConfigError(f"llc.{name} must be a power of two, got {value}")
        if self.size_bytes < self.associativity * self.line_bytes:
            raise ConfigError("llc.size_bytes must be >= associativity * line_bytes")
        if self.hit_cycles < 0:
            raise ConfigError("llc.hit_cycles must be >= 0")


class LlcLine:
    __slots__ = ("block", "dirty", "prefetched", "by_prefetch", "lru_stamp")

    def __init__(self, block: int, prefetched: bool, stamp: int):
        self.block = block           # block address (byte address of line start)
        self.dirty = False
        self.prefetched = prefetched  # filled by prefetch, not yet demand-touched
        self.by_prefetch = prefetched  # install origin, survives demand touches
        self.lru_stamp = stamp


class VictimShadow:
    """Bounded FIFO of blocks evicted by prefetch fills; exact membership."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.fifo: deque[int] = deque()
        self.counts: dict[int, int] = {}

    def push(self, block: int) -> None:
        if len(self.fifo) == self.capacity:
            old = self.fifo.popleft()
            self.counts[old] -= 1
            if not self.counts[old]:
                del self.counts[old]
        self.fifo.append(block)
        self.counts[block] = self.counts.get(block, 0) + 1

    def take(self, block: int) -> bool:
        """Remove one instance of `block` if present."""
        if self.counts.get(block, 0):
            self.fifo.remove(block)
            self.counts[block] -= 1
            if not self.counts[block]:
                del self.counts[block]
            return True
        return False


@dataclass
class EvictedLine:
    block: int
    dirty: bool
    was_unused_prefetch: bool


@dataclass
class AccessResult:
    hit: bool
    first_prefetch_touch: bool = False


class Llc:
    def __init__(self, config: LlcConfig):
        self.config = config
        self.sets_count = config.size_bytes // (config.associativity * config.line_bytes)
        self.sets: list[list[LlcLine]] = [[] for _ in range(self.sets_count)]
        self.shadow = VictimShadow(self.sets_count * config.associativity)
        self._clock = 0
        # counters (demand traffic only, except prefetch_fills)
        self.demand_accesses = 0
        self.demand_hits = 0
        self.demand_misses = 0
        self.prefetch_fills = 0
        self.demand_fills = 0
        self.useful_prefetches = 0
        self.pollution_misses = 0

    def _block_of(self, address: int) -> int:
        return address & ~(self.config.line_bytes - 1)

    def _set_of(self, block: int) -> list[LlcLine]:
        index = (block // self.config.line_bytes) & (self.sets_count - 1)
        return self.sets[index]

    def _find(self, block: int) -> Optional[LlcLine]:
        for line in self._set_of(block):
            if line.block == block:
                return line
        return None

    def contains(self, address: int) -> bool:
        return self._find(self._block_of(address)) is not None

    def access(self, address: int, kind: RequestKind, now: int) -> AccessResult:
        """One demand access. Hits refresh LRU and consume the prefetched
        flag; misses are checked against the victim shadow for pollution."""
        self.demand_accesses += 1
        block = self._block_of(address)
        line = self._find(block)
        if line is not None:
            self.demand_hits += 1
            self._clock += 1
            line.lru_stamp = self._clock
            first_touch = line.prefetched
            if first_touch:
                line.prefetched = False
                self.useful_prefetches += 1
            if kind is RequestKind.WRITE:
                line.dirty = True
            return AccessResult(hit=True, first_prefetch_touch=first_touch)
        self.demand_misses += 1
        if self.shadow.take(block):
            self.pollution_misses += 1
        return AccessResult(hit=False)

    def fill(self, address: int, origin: Origin, now: int,
             make_dirty: bool = False,
             demand_claimed: bool = False) -> Optional[EvictedLine]:
        """Install a line after a miss; returns the eviction, if any.

        demand_claimed marks prefetch fills whose block was demanded while
        in flight: they install without the prefetched flag (the useful
        touch was already credited at merge time).
        """
        block = self._block_of(address)
        cache_set = self._set_of(block)
        if any(line.block == block for line in cache_set):
            raise SimulationFault(f"double fill of resident block 0x{block:x}")
        is_prefetch = origin is Origin.PREFETCH_LLC
        evicted = None
        if len(cache_set) == self.config.associativity:
            victim = min(cache_set, key=lambda l: l.lru_stamp)
            cache_set.remove(victim)
            evicted = EvictedLine(victim.block, victim.dirty,
                                  was_unused_prefetch=victim.prefetched)
            if is_prefetch and not victim.by_prefetch:
                self.shadow.push(victim.block)
        self._clock += 1
        line = LlcLine(block, prefetched=is_prefetch and not demand_claimed,
                       stamp=self._clock)
        line.by_prefetch = is_prefetch
        if make_dirty:
            line.dirty = True
        cache_set.append(line)
        if is_prefetch:
            self.prefetch_fills += 1
        else:
            self.demand_fills += 1
        return evicted
