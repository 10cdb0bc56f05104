"""Deterministic event-driven simulation core.

Requests enter open-loop at their trace arrival cycles, filter through the
LLC, and queue per bank. Each bank serializes its work in priority order
(refresh, then demand, then migrations, then prefetch reads); a work item
executes as a precharge/activate/read-write command walk against the bank
state machine, with completion effects (cache fills, near-segment installs,
copy-row installs) applied at their completion cycles through the event
queue. Events are dispatched in (cycle, sequence) order, so replay is
bit-identical for identical inputs.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

from .cachemodel import Llc, LlcConfig
from .dram import (BankCommand, BankState, CommandKind, CopyRowTable,
                   DramConfig, DramCoord, Mode, activate_latency,
                   earliest_issue, issue_command, map_address,
                   refresh_deadline_reached, refresh_due)
from .errors import SimulationFault
from .prefetch import (DecisionKind, PrefetchConfig, PrefetchDecision,
                       SpatialPrefetcher)
from .trace import MemoryRequest, Origin, RequestKind


class SchedulerPolicy(enum.Enum):
    FCFS = "fcfs"
    FRFCFS = "frfcfs"


@dataclass
class SimOptions:
    scheduler: SchedulerPolicy = SchedulerPolicy.FCFS
    starvation_limit: int = 1000
    collect_requests: bool = False
    collect_decisions: bool = False
    collect_audit: bool = False


class Serviced(enum.Enum):
    LLC = "llc"
    NEAR = "near"
    NEAR_NATIVE = "near_native"
    FAR = "far"
    CROW_COPY = "crow_copy"
    MERGED = "merged"


DRAM_SERVICED = {Serviced.NEAR, Serviced.NEAR_NATIVE, Serviced.FAR,
                 Serviced.CROW_COPY}


@dataclass
class RequestRecord:
    id: int
    arrival_cycle: int
    completion_cycle: int
    kind: RequestKind
    address: int
    serviced: Serviced


@dataclass
class DecisionRecord:
    request_id: int
    cycle: int
    kind: DecisionKind
    region_base: int
    footprint_offsets: tuple[int, ...]
    block_addresses: tuple[int, ...]
    migration_rows: tuple[tuple, ...]


@dataclass
class SimStats:
    demand_accesses: int = 0
    demand_reads: int = 0
    demand_writes: int = 0
    completed: int = 0
    cycles_simulated: int = 0
    demand_read_latency_sum: int = 0
    demand_read_count: int = 0
    dram_read_latency_hist: dict = field(default_factory=dict)
    llc_demand_hits: int = 0
    llc_demand_misses: int = 0
    llc_prefetch_fills: int = 0
    llc_useful_prefetches: int = 0
    llc_pollution_misses: int = 0
    near_hits: int = 0
    near_misses: int = 0
    near_native_hits: int = 0
    migrations_demand: int = 0
    migrations_prefetch: int = 0
    crow_dups_demand: int = 0
    crow_dups_prefetch: int = 0
    writebacks: int = 0
    prefetch_reads: int = 0
    refreshes_scheduled: int = 0
    refreshes_performed: int = 0
    refreshes_skipped: int = 0
    pf_issued: int = 0
    pf_useful: int = 0
    pf_late: int = 0
    pf_dropped: int = 0
    pf_uncovered_misses: int = 0
    requests: list = field(default_factory=list)
    decisions: list = field(default_factory=list)

    @property
    def avg_demand_read_latency(self) -> Optional[float]:
        if not self.demand_read_count:
            return None
        return self.demand_read_latency_sum / self.demand_read_count

    @property
    def llc_hit_rate(self) -> float:
        total = self.llc_demand_hits + self.llc_demand_misses
        return self.llc_demand_hits / total if total else 0.0

    @property
    def near_hit_rate(self) -> float:
        total = self.near_hits + self.near_misses
        return self.near_hits / total if total else 0.0

    @property
    def pf_accuracy(self) -> float:
        return self.pf_useful / self.pf_issued if self.pf_issued else 0.0

    @property
    def pf_lateness(self) -> float:
        return self.pf_late / self.pf_useful if self.pf_useful else 0.0

    @property
    def pf_coverage(self) -> float:
        denom = self.pf_useful + self.pf_uncovered_misses
        return self.pf_useful / denom if denom else 0.0

    @property
    def pollution_ratio(self) -> float:
        if not self.llc_demand_misses:
            return 0.0
        return self.llc_pollution_misses / self.llc_demand_misses


class NearCache:
    """Near-segment slots of one subarray, used as an LRU cache of far rows.

    Slot i is physical near row i. Slots being filled by an in-flight
    migration are never matched and never victimized.
    """

    class Slot:
        __slots__ = ("far_row", "dirty", "lru_stamp", "inflight", "pending",
                     "prefetched_untouched")

        def __init__(self):
            self.far_row: Optional[int] = None
            self.dirty = False
            self.lru_stamp = 0
            self.inflight = False
            self.pending: Optional[int] = None
            self.prefetched_untouched = False

    def __init__(self, capacity: int):
        self.slots = [NearCache.Slot() for _ in range(capacity)]
        self._clock = 0

    def occupancy(self) -> int:
        return sum(1 for s in self.slots if s.far_row is not None or s.inflight)

    def peek(self, far_row: int) -> Optional[int]:
        for i, slot in enumerate(self.slots):
            if not slot.inflight and slot.far_row == far_row:
                return i
        return None

    def lookup(self, far_row: int) -> Optional[int]:
        index = self.peek(far_row)
        if index is not None:
            self._clock += 1
            self.slots[index].lru_stamp = self._clock
        return index

    def contains(self, far_row: int) -> bool:
        return self.peek(far_row) is not None

    def reserve_victim(self, far_row: int) -> tuple[int, bool]:
        """Pick the migration target slot (empty first, else LRU) and mark it
        in flight. Returns (slot index, victim_was_dirty)."""
        candidates = [i for i, s in enumerate(self.slots) if not s.inflight]
        if not candidates:
            raise SimulationFault("no near slot available for migration")
        empty = [i for i in candidates if self.slots[i].far_row is None]
        if empty:
            index = empty[0]
        else:
            index = min(candidates, key=lambda i: self.slots[i].lru_stamp)
        slot = self.slots[index]
        victim_dirty = slot.far_row is not None and slot.dirty
        slot.far_row = None
        slot.dirty = False
        slot.prefetched_untouched = False
        slot.inflight = True
        slot.pending = far_row
        return index, victim_dirty

    def install(self, index: int, far_row: int, prefetched: bool) -> None:
        slot = self.slots[index]
        if not slot.inflight or slot.pending != far_row:
            raise SimulationFault(f"install of row {far_row} into unreserved slot")
        slot.far_row = far_row
        slot.inflight = False
        slot.pending = None
        slot.dirty = False
        slot.prefetched_untouched = prefetched
        self._clock += 1
        slot.lru_stamp = self._clock


# -- work items ---------------------------------------------------------------


class ItemKind(enum.Enum):
    DEMAND = "demand"
    WRITEBACK = "writeback"
    PREFETCH_READ = "prefetch_read"
    MIGRATION = "migration"
    CROW_DUP = "crow_dup"
    REFRESH = "refresh"


@dataclass
class WorkItem:
    kind: ItemKind
    enqueue_cycle: int
    coord: Optional[DramCoord] = None
    request: Optional[MemoryRequest] = None
    rw: RequestKind = RequestKind.READ
    block: Optional[int] = None
    origin: Origin = Origin.DEMAND
    duration: Optional[int] = None
    demanded: bool = False       # a demand touched this in-flight prefetch
    waiters: list = field(default_factory=list)
    promoted: bool = False
    target_slot: Optional[int] = None


class _BankQueues:
    __slots__ = ("refresh", "demand", "migration", "prefetch")

    def __init__(self):
        self.refresh: list[WorkItem] = []
        self.demand: list[WorkItem] = []
        self.migration: list[WorkItem] = []
        self.prefetch: list[WorkItem] = []

    def pending(self) -> bool:
        return bool(self.refresh or self.demand or self.migration or self.prefetch)


class _EventKind(enum.Enum):
    ARRIVE = 0
    FINISH = 1
    TRY_BANK = 2
    REFRESH_TICK = 3


class Simulation:
    def __init__(self, dram_cfg: DramConfig, llc_cfg: LlcConfig,
                 pf_cfg: PrefetchConfig, options: Optional[SimOptions] = None):
        self.cfg = dram_cfg
        self.llc_cfg = llc_cfg
        self.pf_cfg = pf_cfg
        self.opt = options or SimOptions()
        self.llc = Llc(llc_cfg) if llc_cfg.enabled else None
        self.prefetcher = (SpatialPrefetcher(pf_cfg, dram_cfg, llc_cfg.line_bytes)
                           if pf_cfg.enabled else None)
        self.banks: dict[tuple, BankState] = {}
        self.queues: dict[tuple, _BankQueues] = {}
        self.near: dict[tuple, NearCache] = {}
        self.copy: dict[tuple, CopyRowTable] = {}
        for ch in range(dram_cfg.channels):
            for rk in range(dram_cfg.ranks_per_channel):
                for bk in range(dram_cfg.banks_per_rank):
                    key = (ch, rk, bk)
                    self.banks[key] = BankState(label=key)
                    self.queues[key] = _BankQueues()
        self.stats = SimStats()
        self.events: list = []
        self._seq = 0
        self._now = 0
        self._wake_at: dict[tuple, Optional[int]] = {k: None for k in self.banks}
        self.inflight_blocks: dict[int, WorkItem] = {}
        self.inflight_migrations: dict[tuple, WorkItem] = {}
        self.inflight_dups: dict[tuple, WorkItem] = {}
        self.crow_pf_untouched: set = set()
        self.audit: list[tuple] = []
        self._pending_requests = 0
        self._refresh_armed: set = set()
        self._last_activity = 0

    # -- plumbing -------------------------------------------------------------

    def _push(self, cycle: int, kind: _EventKind, payload) -> None:
        heapq.heappush(self.events, (cycle, self._seq, kind.value, payload))
        self._seq += 1

    def _near_cache(self, bank_key, subarray) -> NearCache:
        cache = self.near.get((bank_key, subarray))
        if cache is None:
            cache = NearCache(self.cfg.near_rows_per_subarray)
            self.near[(bank_key, subarray)] = cache
        return cache

    def _copy_table(self, bank_key, subarray) -> CopyRowTable:
        table = self.copy.get((bank_key, subarray))
        if table is None:
            table = CopyRowTable(self.cfg.copy_rows_per_subarray)
            self.copy[(bank_key, subarray)] = table
        return table

    def _wake_bank(self, bank_key, cycle: int) -> None:
        ready = max(cycle, self.banks[bank_key].busy_until)
        pending = self._wake_at[bank_key]
        if pending is None or ready < pending:
            self._wake_at[bank_key] = ready
            self._push(ready, _EventKind.TRY_BANK, bank_key)

    def _audit(self, cycle, bank_key, cmd: CommandKind, row, origin: str,
               p1="-", p2="-") -> None:
        if self.opt.collect_audit:
            self.audit.append((cycle, bank_key, cmd.value, row, origin, p1, p2))

    # -- public entry -----------------------------------------------------------

    def run(self, requests: list[MemoryRequest]) -> SimStats:
        for req in requests:
            self.stats.demand_accesses += 1
            if req.kind is RequestKind.READ:
                self.stats.demand_reads += 1
            else:
                self.stats.demand_writes += 1
            self._push(req.arrival_cycle, _EventKind.ARRIVE, req)
        self._pending_requests = len(requests)
        if requests:
            for key in self.banks:
                self._arm_refresh(key, self.cfg.tREFI)
        while self.events:
            cycle, _, kind, payload = heapq.heappop(self.events)
            self._now = max(self._now, cycle)
            if kind == _EventKind.ARRIVE.value:
                self._on_arrive(payload, cycle)
            elif kind == _EventKind.FINISH.value:
                self._on_finish(payload, cycle)
            elif kind == _EventKind.TRY_BANK.value:
                self._on_try_bank(payload, cycle)
            else:
                self._on_refresh_tick(payload, cycle)
        self.stats.cycles_simulated = self._last_activity
        self._finalize()
        return self.stats

    def _finalize(self) -> None:
        st = self.stats
        if self.llc is not None:
            st.llc_demand_hits = self.llc.demand_hits
            st.llc_demand_misses = self.llc.demand_misses
            st.llc_prefetch_fills = self.llc.prefetch_fills
            st.llc_useful_prefetches = self.llc.useful_prefetches
            st.llc_pollution_misses = self.llc.pollution_misses
        if self.prefetcher is not None:
            m = self.prefetcher.metrics
            st.pf_issued = m.issued
            st.pf_useful = m.useful
            st.pf_late = m.late
            st.pf_dropped = m.merged_dropped
            st.pf_uncovered_misses = m.uncovered_misses
        if self.stats.completed != self.stats.demand_accesses:
            raise SimulationFault(
                f"{self.stats.demand_accesses} requests arrived but "
                f"{self.stats.completed} completed")

    # -- arrival path ------------------------------------------------------------

    def _on_arrive(self, req: MemoryRequest, now: int) -> None:
        if self.llc is not None:
            result = self.llc.access(req.address, req.kind, now)
            if result.hit:
                self._complete(req, now + self.llc_cfg.hit_cycles, Serviced.LLC)
                return
            block = req.address & ~(self.llc_cfg.line_bytes - 1)
            carrier = self.inflight_blocks.get(block)
            if carrier is not None:
                self._merge_into(carrier, req)
                return
        decision = None
        if self.prefetcher is not None:
            decision = self.prefetcher.observe(req.pc, req.address, now)
        item = WorkItem(kind=ItemKind.DEMAND, enqueue_cycle=now,
                        coord=map_address(req.address, self.cfg),
                        request=req, rw=req.kind,
                        block=req.address & ~(self.llc_cfg.line_bytes - 1))
        if self.llc is not None:
            self.inflight_blocks[item.block] = item
        key = item.coord.bank_key
        self.queues[key].demand.append(item)
        self._wake_bank(key, now)
        if decision is not None and decision.kind is not DecisionKind.NONE:
            self._execute_decision(decision, req, now)

    def _merge_into(self, carrier: WorkItem, req: MemoryRequest) -> None:
        carrier.waiters.append(req)
        metrics = self.prefetcher.metrics if self.prefetcher else None
        if carrier.kind is ItemKind.PREFETCH_READ:
            if metrics is not None and not carrier.demanded:
                metrics.late += 1
                metrics.useful += 1
            carrier.demanded = True
            self._promote_prefetch(carrier)
        elif metrics is not None:
            metrics.uncovered_misses += 1

    def _promote_prefetch(self, item: WorkItem) -> None:
        if item.promoted:
            return
        queues = self.queues[item.coord.bank_key]
        if item in queues.prefetch:
            queues.prefetch.remove(item)
            queues.demand.append(item)
        item.promoted = True

    def _execute_decision(self, decision: PrefetchDecision,
                          req: MemoryRequest, now: int) -> None:
        metrics = self.prefetcher.metrics
        if self.opt.collect_decisions:
            self.stats.decisions.append(DecisionRecord(
                request_id=req.id, cycle=now, kind=decision.kind,
                region_base=decision.region_base,
                footprint_offsets=decision.footprint_offsets,
                block_addresses=decision.block_addresses,
                migration_rows=tuple(
                    (c.bank_key, c.subarray, c.row) for c in decision.migration_rows)))
        if decision.kind is DecisionKind.LONG_HIT and self.llc is not None:
            for block in decision.block_addresses:
                if block >= self.cfg.total_bytes:
                    continue
                if self.llc.contains(block) or block in self.inflight_blocks:
                    metrics.merged_dropped += 1
                    continue
                inflight_pf = sum(1 for it in self.inflight_blocks.values()
                                  if it.kind is ItemKind.PREFETCH_READ)
                if inflight_pf >= self.pf_cfg.inflight_limit:
                    metrics.merged_dropped += 1
                    continue
                coord = map_address(block, self.cfg)
                item = WorkItem(kind=ItemKind.PREFETCH_READ, enqueue_cycle=now,
                                coord=coord, block=block,
                                origin=Origin.PREFETCH_LLC)
                metrics.issued += 1
                self.stats.prefetch_reads += 1
                self.inflight_blocks[block] = item
                self.queues[coord.bank_key].prefetch.append(item)
                self._wake_bank(coord.bank_key, now)
        elif decision.kind is DecisionKind.SHORT_HIT:
            for coord in decision.migration_rows:
                if self.cfg.mode is Mode.TLDRAM:
                    if self._enqueue_migration(coord, Origin.PREFETCH_LLC, now):
                        metrics.issued += 1
                    else:
                        metrics.merged_dropped += 1
                elif self.cfg.mode is Mode.CROW:
                    if self._enqueue_crow_dup(coord, Origin.PREFETCH_LLC, now):
                        metrics.issued += 1
                    else:
                        metrics.merged_dropped += 1

    def _enqueue_migration(self, coord: DramCoord, origin: Origin,
                           now: int) -> bool:
        key = (coord.bank_key, coord.subarray, coord.row)
        if key in self.inflight_migrations:
            return False
        if self._near_cache(coord.bank_key, coord.subarray).contains(coord.row):
            return False
        item = WorkItem(kind=ItemKind.MIGRATION, enqueue_cycle=now,
                        coord=coord, origin=origin)
        self.inflight_migrations[key] = item
        self.queues[coord.bank_key].migration.append(item)
        self._wake_bank(coord.bank_key, now)
        return True

    def _enqueue_crow_dup(self, coord: DramCoord, origin: Origin,
                          now: int) -> bool:
        if self.cfg.copy_rows_per_subarray == 0:
            return False
        key = (coord.bank_key, coord.subarray, coord.row)
        if key in self.inflight_dups:
            return False
        if self._copy_table(coord.bank_key, coord.subarray).contains(coord.row):
            return False
        item = WorkItem(kind=ItemKind.CROW_DUP, enqueue_cycle=now,
                        coord=coord, origin=origin)
        self.inflight_dups[key] = item
        self.queues[coord.bank_key].migration.append(item)
        self._wake_bank(coord.bank_key, now)
        return True

    # -- bank scheduling -----------------------------------------------------------

    def _peek_target_row(self, item: WorkItem) -> tuple[int, int]:
        coord = item.coord
        if self.cfg.mode is Mode.TLDRAM \
                and coord.row >= self.cfg.near_rows_per_subarray:
            slot = self._near_cache(coord.bank_key, coord.subarray).peek(coord.row)
            if slot is not None:
                return (coord.subarray, slot)
        return (coord.subarray, coord.row)

    def schedule(self, bank_key, now: int) -> Optional[WorkItem]:
        """Pick the next work item: refresh, then demand (row hits may bypass
        under FR-FCFS until the head ages out), then migrations, then
        prefetch reads."""
        queues = self.queues[bank_key]
        if queues.refresh:
            return queues.refresh.pop(0)
        if queues.demand:
            bank = self.banks[bank_key]
            if (self.opt.scheduler is SchedulerPolicy.FRFCFS
                    and bank.open_row is not None and len(queues.demand) > 1):
                head = queues.demand[0]
                if now - head.enqueue_cycle <= self.opt.starvation_limit:
                    for item in queues.demand:
                        if self._peek_target_row(item) == bank.open_row:
                            queues.demand.remove(item)
                            return item
            return queues.demand.pop(0)
        if queues.migration:
            return queues.migration.pop(0)
        if queues.prefetch:
            return queues.prefetch.pop(0)
        return None

    def _on_try_bank(self, bank_key, now: int) -> None:
        self._wake_at[bank_key] = None
        bank = self.banks[bank_key]
        if now < bank.busy_until:
            self._wake_bank(bank_key, bank.busy_until)
            return
        item = self.schedule(bank_key, now)
        if item is None:
            return
        if item.kind in (ItemKind.DEMAND, ItemKind.WRITEBACK,
                         ItemKind.PREFETCH_READ):
            self._service_rw(bank_key, item, now)
        elif item.kind is ItemKind.MIGRATION:
            self._service_migration(bank_key, item, now)
        elif item.kind is ItemKind.CROW_DUP:
            self._service_crow_dup(bank_key, item, now)
        else:
            self._service_refresh(bank_key, item, now)
        self._last_activity = max(self._last_activity, bank.busy_until)
        if self.queues[bank_key].pending():
            self._wake_bank(bank_key, bank.busy_until)

    # -- command walks -----------------------------------------------------------

    def _close_open_row(self, bank_key, now: int, origin: str) -> int:
        bank = self.banks[bank_key]
        cycle = earliest_issue(bank, CommandKind.PRECHARGE, now)
        issue_command(bank, BankCommand(CommandKind.PRECHARGE), cycle, self.cfg)
        self._audit(cycle, bank_key, CommandKind.PRECHARGE, bank.open_row, origin)
        return bank.busy_until

    def _open_row(self, bank_key, row_key, trcd, tras, now, origin: str) -> int:
        bank = self.banks[bank_key]
        cycle = earliest_issue(bank, CommandKind.ACTIVATE, now)
        issue_command(bank, BankCommand(CommandKind.ACTIVATE, row=row_key,
                                        trcd=trcd, tras=tras), cycle, self.cfg)
        self._audit(cycle, bank_key, CommandKind.ACTIVATE, row_key, origin,
                    trcd, tras)
        return bank.busy_until

    def _resolve_demand_target(self, bank_key, item: WorkItem, now: int):
        """Where a read/write lands: (row key, trcd, tras, serviced tag).

        TLDRAM far rows go through the near cache; misses of demand items
        start a far-to-near migration (the LRU-cache policy). CROW rows use
        factored timings once duplicated.
        """
        coord = item.coord
        cfg = self.cfg
        is_demand = item.kind is ItemKind.DEMAND
        metrics = self.prefetcher.metrics if self.prefetcher else None
        if cfg.mode is Mode.TLDRAM:
            if coord.row < cfg.near_rows_per_subarray:
                if is_demand:
                    self.stats.near_native_hits += 1
                    if metrics is not None:
                        metrics.uncovered_misses += 1
                return ((coord.subarray, coord.row), cfg.tRCD_near,
                        cfg.tRAS_near, Serviced.NEAR_NATIVE)
            cache = self._near_cache(bank_key, coord.subarray)
            slot = cache.lookup(coord.row)
            if slot is not None:
                if is_demand:
                    self.stats.near_hits += 1
                    entry = cache.slots[slot]
                    if entry.prefetched_untouched:
                        entry.prefetched_untouched = False
                        if metrics is not None:
                            metrics.useful += 1
                    elif metrics is not None:
                        metrics.uncovered_misses += 1
                if item.rw is RequestKind.WRITE:
                    cache.slots[slot].dirty = True
                return ((coord.subarray, slot), cfg.tRCD_near, cfg.tRAS_near,
                        Serviced.NEAR)
            if is_demand:
                self.stats.near_misses += 1
                mig_key = (bank_key, coord.subarray, coord.row)
                inflight = self.inflight_migrations.get(mig_key)
                if inflight is not None:
                    if metrics is not None \
                            and inflight.origin is Origin.PREFETCH_LLC \
                            and not inflight.demanded:
                        metrics.late += 1
                        metrics.useful += 1
                    elif metrics is not None:
                        metrics.uncovered_misses += 1
                    inflight.demanded = True
                else:
                    if metrics is not None:
                        metrics.uncovered_misses += 1
                    self._enqueue_migration(coord, Origin.DEMAND, now)
            return ((coord.subarray, coord.row), cfg.tRCD_far, cfg.tRAS_far,
                    Serviced.FAR)
        if cfg.mode is Mode.CROW:
            table = self._copy_table(bank_key, coord.subarray)
            trcd, tras = activate_latency(coord, cfg, table)
            if table.contains(coord.row):
                if is_demand:
                    key = (bank_key, coord.subarray, coord.row)
                    if key in self.crow_pf_untouched:
                        self.crow_pf_untouched.discard(key)
                        if metrics is not None:
                            metrics.useful += 1
                    elif metrics is not None:
                        metrics.uncovered_misses += 1
                return ((coord.subarray, coord.row), trcd, tras,
                        Serviced.CROW_COPY)
            if is_demand:
                key = (bank_key, coord.subarray, coord.row)
                inflight = self.inflight_dups.get(key)
                if inflight is not None:
                    if metrics is not None \
                            and inflight.origin is Origin.PREFETCH_LLC \
                            and not inflight.demanded:
                        metrics.late += 1
                        metrics.useful += 1
                    elif metrics is not None:
                        metrics.uncovered_misses += 1
                    inflight.demanded = True
                elif metrics is not None:
                    metrics.uncovered_misses += 1
            return ((coord.subarray, coord.row), trcd, tras, Serviced.FAR)
        if is_demand and metrics is not None:
            metrics.uncovered_misses += 1
        return ((coord.subarray, coord.row), cfg.tRCD_far, cfg.tRAS_far,
                Serviced.FAR)

    def _service_rw(self, bank_key, item: WorkItem, now: int) -> None:
        bank = self.banks[bank_key]
        cfg = self.cfg
        origin = {ItemKind.DEMAND: "demand", ItemKind.WRITEBACK: "writeback",
                  ItemKind.PREFETCH_READ: "prefetch"}[item.kind]
        row_key, trcd, tras, serviced = self._resolve_demand_target(
            bank_key, item, now)
        t = now
        activated = False
        if bank.open_row is not None and bank.open_row != row_key:
            t = self._close_open_row(bank_key, t, origin)
        if bank.open_row is None:
            t = self._open_row(bank_key, row_key, trcd, tras, t, origin)
            activated = True
        if activated and cfg.mode is Mode.CROW:
            self._after_crow_activate(bank_key, item.coord, row_key, t)
        reads_line = (item.kind is not ItemKind.WRITEBACK
                      and (self.llc is not None
                           or item.rw is RequestKind.READ))
        cmd = CommandKind.READ if reads_line else CommandKind.WRITE
        cycle = earliest_issue(bank, cmd, t)
        completion = issue_command(bank, BankCommand(cmd, row=row_key),
                                   cycle, cfg)
        self._audit(cycle, bank_key, cmd, row_key, origin)
        item.duration = None
        self._push(completion, _EventKind.FINISH, (item, serviced))

    def _after_crow_activate(self, bank_key, coord: DramCoord, row_key,
                             now: int) -> None:
        table = self._copy_table(bank_key, coord.subarray)
        bank = self.banks[bank_key]
        if table.contains(coord.row):
            table.touch(coord.row, now)
            slot = table.rows.index(coord.row)
            vrow = (coord.subarray, self.cfg.rows_per_subarray + slot)
            bank.last_access_cycle[vrow] = now
            return
        count = bank.activation_count.get(row_key, 0)
        if count >= self.cfg.hot_activation_threshold:
            self._enqueue_crow_dup(coord, Origin.DEMAND, now)

    def _service_migration(self, bank_key, item: WorkItem, now: int) -> None:
        bank = self.banks[bank_key]
        coord = item.coord
        cache = self._near_cache(bank_key, coord.subarray)
        if cache.contains(coord.row):
            raise SimulationFault(f"migrating already-cached row {coord.row}")
        slot, victim_dirty = cache.reserve_victim(coord.row)
        item.target_slot = slot
        # dirty victims pay a write-back before the fill
        duration = self.cfg.tMIG * (2 if victim_dirty else 1)
        t = now
        if bank.open_row is not None:
            t = self._close_open_row(bank_key, t, "migration")
        cycle = earliest_issue(bank, CommandKind.MIGRATE, t)
        completion = issue_command(
            bank, BankCommand(CommandKind.MIGRATE, duration=duration),
            cycle, self.cfg)
        label = ("mig_prefetch" if item.origin is Origin.PREFETCH_LLC
                 else "mig_demand")
        self._audit(cycle, bank_key, CommandKind.MIGRATE,
                    (coord.subarray, coord.row), label, duration)
        self._push(completion, _EventKind.FINISH, (item, None))

    def _service_crow_dup(self, bank_key, item: WorkItem, now: int) -> None:
        bank = self.banks[bank_key]
        coord = item.coord
        table = self._copy_table(bank_key, coord.subarray)
        if table.contains(coord.row):
            raise SimulationFault(f"duplicating already-copied row {coord.row}")
        t = now
        if bank.open_row is not None:
            t = self._close_open_row(bank_key, t, "crow")
        cycle = earliest_issue(bank, CommandKind.MIGRATE, t)
        completion = issue_command(
            bank, BankCommand(CommandKind.MIGRATE, duration=self.cfg.tMIG),
            cycle, self.cfg)
        label = ("crow_prefetch" if item.origin is Origin.PREFETCH_LLC
                 else "crow_demand")
        self._audit(cycle, bank_key, CommandKind.MIGRATE,
                    (coord.subarray, coord.row), label, self.cfg.tMIG)
        self._push(completion, _EventKind.FINISH, (item, None))

    def _service_refresh(self, bank_key, item: WorkItem, now: int) -> None:
        bank = self.banks[bank_key]
        t = now
        if bank.open_row is not None:
            t = self._close_open_row(bank_key, t, "refresh")
        cycle = earliest_issue(bank, CommandKind.REFRESH, t)
        issue_command(bank, BankCommand(CommandKind.REFRESH,
                                        duration=item.duration), cycle, self.cfg)
        self._audit(cycle, bank_key, CommandKind.REFRESH, None, "refresh",
                    item.duration)

    # -- completions ------------------------------------------------------------

    def _on_finish(self, payload, now: int) -> None:
        item, serviced = payload
        self._last_activity = max(self._last_activity, now)
        if item.kind is ItemKind.MIGRATION:
            self._finish_migration(item, now)
            return
        if item.kind is ItemKind.CROW_DUP:
            self._finish_crow_dup(item, now)
            return
        if item.kind is ItemKind.WRITEBACK:
            return
        if item.block is not None and self.llc is not None:
            self.inflight_blocks.pop(item.block, None)
            origin = (Origin.PREFETCH_LLC
                      if item.kind is ItemKind.PREFETCH_READ else Origin.DEMAND)
            make_dirty = (item.kind is ItemKind.DEMAND
                          and item.rw is RequestKind.WRITE)
            evicted = self.llc.fill(item.block, origin, now,
                                    make_dirty=make_dirty,
                                    demand_claimed=item.demanded)
            if evicted is not None and evicted.dirty:
                self._enqueue_writeback(evicted.block, now)
        if item.request is not None:
            self._complete(item.request, now, serviced)
        for waiter in item.waiters:
            self._complete(waiter, now, Serviced.MERGED)

    def _finish_migration(self, item: WorkItem, now: int) -> None:
        coord = item.coord
        key = (coord.bank_key, coord.subarray, coord.row)
        self.inflight_migrations.pop(key)
        cache = self._near_cache(coord.bank_key, coord.subarray)
        prefetched = (item.origin is Origin.PREFETCH_LLC and not item.demanded)
        cache.install(item.target_slot, coord.row, prefetched)
        bank = self.banks[coord.bank_key]
        slot_key = (coord.subarray, item.target_slot)
        bank.cached_slot_rows.add(slot_key)
        bank.last_access_cycle[slot_key] = now
        if item.origin is Origin.PREFETCH_LLC:
            self.stats.migrations_prefetch += 1
        else:
            self.stats.migrations_demand += 1

    def _finish_crow_dup(self, item: WorkItem, now: int) -> None:
        coord = item.coord
        key = (coord.bank_key, coord.subarray, coord.row)
        self.inflight_dups.pop(key)
        table = self._copy_table(coord.bank_key, coord.subarray)
        evicted = table.install(coord.row, now)
        if evicted is not None:
            self.crow_pf_untouched.discard(
                (coord.bank_key, coord.subarray, evicted))
        slot = table.rows.index(coord.row)
        bank = self.banks[coord.bank_key]
        vrow = (coord.subarray, self.cfg.rows_per_subarray + slot)
        bank.copy_slot_rows.add(vrow)
        bank.last_access_cycle[vrow] = now
        if item.origin is Origin.PREFETCH_LLC:
            self.stats.crow_dups_prefetch += 1
            if not item.demanded:
                self.crow_pf_untouched.add(key)
        else:
            self.stats.crow_dups_demand += 1

    def _enqueue_writeback(self, block: int, now: int) -> None:
        coord = map_address(block, self.cfg)
        item = WorkItem(kind=ItemKind.WRITEBACK, enqueue_cycle=now,
                        coord=coord, rw=RequestKind.WRITE, block=None)
        self.stats.writebacks += 1
        self.queues[coord.bank_key].demand.append(item)
        self._wake_bank(coord.bank_key, now)

    def _complete(self, req: MemoryRequest, cycle: int,
                  serviced: Serviced) -> None:
        self.stats.completed += 1
        self._pending_requests -= 1
        self._last_activity = max(self._last_activity, cycle)
        if req.kind is RequestKind.READ:
            latency = cycle - req.arrival_cycle
            self.stats.demand_read_latency_sum += latency
            self.stats.demand_read_count += 1
            if serviced in DRAM_SERVICED:
                hist = self.stats.dram_read_latency_hist
                hist[latency] = hist.get(latency, 0) + 1
        if self.opt.collect_requests:
            self.stats.requests.append(RequestRecord(
                id=req.id, arrival_cycle=req.arrival_cycle,
                completion_cycle=cycle, kind=req.kind,
                address=req.address, serviced=serviced))

    # -- refresh -----------------------------------------------------------------

    def _arm_refresh(self, bank_key, cycle: int) -> None:
        if bank_key not in self._refresh_armed:
            self._refresh_armed.add(bank_key)
            self._push(cycle, _EventKind.REFRESH_TICK, bank_key)

    def _on_refresh_tick(self, bank_key, now: int) -> None:
        self._refresh_armed.discard(bank_key)
        if now >= self.cfg.refresh_window:
            self._sweep_refresh(bank_key, now)
        if self._pending_requests > 0:
            self._arm_refresh(bank_key, now + self.cfg.tREFI)

    def _sweep_refresh(self, bank_key, now: int) -> None:
        """All-rows-due sweep. Rows at their retention deadline are
        scheduled; recently accessed cache-slot and copy rows are skipped;
        the rest refresh in one batch whose bank-busy time scales linearly
        with the refreshed fraction of the batch."""
        bank = self.banks[bank_key]
        cfg = self.cfg
        due = 0
        performed = 0
        for subarray in range(cfg.subarrays_per_bank):
            copy_table = self.copy.get((bank_key, subarray))
            copy_slots = copy_table.capacity if copy_table else 0
            for row in range(cfg.rows_per_subarray + copy_slots):
                row_key = (subarray, row)
                if not refresh_deadline_reached(row_key, now, cfg, bank):
                    continue
                due += 1
                if refresh_due(row_key, now, cfg, bank):
                    performed += 1
                bank.last_refresh[row_key] = now
        if not due:
            return
        self.stats.refreshes_scheduled += due
        self.stats.refreshes_performed += performed
        self.stats.refreshes_skipped += due - performed
        if performed:
            duration = math.ceil(cfg.tRFC * performed / due)
            item = WorkItem(kind=ItemKind.REFRESH, enqueue_cycle=now,
                            duration=duration)
            self.queues[bank_key].refresh.append(item)
            self._wake_bank(bank_key, now)

    # -- spec surface used directly by tests ---------------------------------------

    def near_lookup(self, bank_key, subarray: int, far_row: int) -> Optional[int]:
        """Slot index holding far_row, or None on miss. Hits refresh LRU."""
        return self._near_cache(bank_key, subarray).lookup(far_row)


def run_simulation(dram_cfg: DramConfig, llc_cfg: LlcConfig,
                   pf_cfg: PrefetchConfig, requests: list[MemoryRequest],
                   options: Optional[SimOptions] = None) -> SimStats:
    sim = Simulation(dram_cfg, llc_cfg, pf_cfg, options)
    return sim.run(requests)
