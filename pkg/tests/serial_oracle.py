"""Closed-form serial-latency reference for non-overlapping request streams.

Independent of the event-driven core: it does its own address bit-slicing,
its own LRU structures, and straight-line timing arithmetic. Valid only
when every request (and the work it triggers) finishes before the next
arrival, and only for read-only traces with prefetching off.
"""

import math


def _log2(n):
    bits = n.bit_length() - 1
    assert 1 << bits == n, f"{n} is not a power of two"
    return bits


class _NearSet:
    """Near-segment slots of one subarray: slot i is physical near row i."""

    def __init__(self, capacity):
        self.rows = [None] * capacity
        self.stamps = [0] * capacity
        self.clock = 0

    def lookup(self, far_row):
        if far_row in self.rows:
            slot = self.rows.index(far_row)
            self.clock += 1
            self.stamps[slot] = self.clock
            return slot
        return None

    def install(self, far_row):
        if None in self.rows:
            slot = self.rows.index(None)
        else:
            slot = min(range(len(self.rows)), key=lambda s: self.stamps[s])
        self.rows[slot] = far_row
        self.clock += 1
        self.stamps[slot] = self.clock
        return slot


class SerialOracle:
    def __init__(self, dram_cfg, llc_cfg):
        self.cfg = dram_cfg
        self.llc_cfg = llc_cfg
        self.offset_bits = _log2(dram_cfg.cacheline_bytes)
        self.column_bits = _log2(dram_cfg.columns_per_row)
        self.channel_bits = _log2(dram_cfg.channels)
        self.bank_bits = _log2(dram_cfg.banks_per_rank)
        self.rank_bits = _log2(dram_cfg.ranks_per_channel)
        self.row_bits = _log2(dram_cfg.rows_per_subarray)
        # per-bank timing state
        self.busy = {}
        self.open_row = {}
        self.act_cycle = {}
        self.act_trcd = {}
        self.act_tras = {}
        self.act_count = {}
        # near caches (exact slots) and copy tables (most-recent-first lists)
        self.near = {}
        self.copy = {}
        if llc_cfg.enabled:
            self.llc_sets = llc_cfg.size_bytes // (
                llc_cfg.associativity * llc_cfg.line_bytes)
            self.llc = [[] for _ in range(self.llc_sets)]

    def decompose(self, address):
        bits = address >> self.offset_bits
        column = bits & (self.cfg.columns_per_row - 1)
        bits >>= self.column_bits
        channel = bits & (self.cfg.channels - 1)
        bits >>= self.channel_bits
        bank = bits & (self.cfg.banks_per_rank - 1)
        bits >>= self.bank_bits
        rank = bits & (self.cfg.ranks_per_channel - 1)
        bits >>= self.rank_bits
        row = bits & (self.cfg.rows_per_subarray - 1)
        subarray = bits >> self.row_bits
        return (channel, rank, bank), subarray, row, column

    # -- LLC ----------------------------------------------------------------

    def llc_lookup_fill(self, address):
        """True on hit. Misses install the block (LRU eviction, clean)."""
        block = address & ~(self.llc_cfg.line_bytes - 1)
        index = (block // self.llc_cfg.line_bytes) & (self.llc_sets - 1)
        entries = self.llc[index]
        if block in entries:
            entries.remove(block)
            entries.insert(0, block)
            return True
        if len(entries) == self.llc_cfg.associativity:
            entries.pop()
        entries.insert(0, block)
        return False

    # -- bank command walks -----------------------------------------------------

    def _walk_access(self, bank, target, trcd, tras, start):
        """Precharge/activate as needed, then read.
        Returns (data cycle, whether an activate was needed)."""
        t = max(start, self.busy.get(bank, 0))
        open_row = self.open_row.get(bank)
        if open_row is not None and open_row != target:
            pre_at = max(t, self.act_cycle[bank] + self.act_tras[bank])
            t = pre_at + self.cfg.tRP
            self.open_row[bank] = None
            open_row = None
        activated = open_row is None
        if activated:
            act_at = t
            self.open_row[bank] = target
            self.act_cycle[bank] = act_at
            self.act_trcd[bank] = trcd
            self.act_tras[bank] = tras
            self.act_count[(bank, target)] = \
                self.act_count.get((bank, target), 0) + 1
            t = act_at + trcd
        rw_at = max(t, self.act_cycle[bank] + self.act_trcd[bank])
        completion = rw_at + self.cfg.tCL + self.cfg.tBUS
        self.busy[bank] = completion
        return completion, activated

    def _walk_blocking(self, bank, duration):
        """Precharge if open, then hold the bank busy (migration, copy fill)."""
        t = self.busy.get(bank, 0)
        if self.open_row.get(bank) is not None:
            pre_at = max(t, self.act_cycle[bank] + self.act_tras[bank])
            t = pre_at + self.cfg.tRP
            self.open_row[bank] = None
        self.busy[bank] = t + duration

    # -- request processing ---------------------------------------------------

    def process(self, requests):
        """Per-request completion cycles for a serial read-only trace."""
        cfg = self.cfg
        completions = []
        for req in requests:
            assert req.kind.value == "R", "oracle covers read-only traces"
            if self.llc_cfg.enabled and self.llc_lookup_fill(req.address):
                completions.append(req.arrival_cycle + self.llc_cfg.hit_cycles)
                continue
            bank, subarray, row, _ = self.decompose(req.address)
            migrate = False
            if cfg.mode.value == "tldram" and row >= cfg.near_rows_per_subarray:
                near = self.near.setdefault(
                    (bank, subarray), _NearSet(cfg.near_rows_per_subarray))
                slot = near.lookup(row)
                if slot is not None:
                    target, trcd, tras = ((subarray, slot),
                                          cfg.tRCD_near, cfg.tRAS_near)
                else:
                    target, trcd, tras = ((subarray, row),
                                          cfg.tRCD_far, cfg.tRAS_far)
                    migrate = True
            elif cfg.mode.value == "tldram":
                target, trcd, tras = (subarray, row), cfg.tRCD_near, cfg.tRAS_near
            elif cfg.mode.value == "crow":
                table = self.copy.setdefault((bank, subarray), [])
                if row in table:
                    table.remove(row)
                    table.insert(0, row)
                    trcd = math.ceil(cfg.tRCD_far * cfg.crow_trcd_factor)
                    tras = math.ceil(cfg.tRAS_far * cfg.crow_tras_factor)
                else:
                    trcd, tras = cfg.tRCD_far, cfg.tRAS_far
                target = (subarray, row)
            else:
                target, trcd, tras = (subarray, row), cfg.tRCD_far, cfg.tRAS_far
            completion, activated = self._walk_access(
                bank, target, trcd, tras, req.arrival_cycle)
            completions.append(completion)

            if migrate:
                # demand-triggered far-to-near caching; clean victims only,
                # since read-only traces never dirty a slot
                self.near[(bank, subarray)].install(row)
                self._walk_blocking(bank, cfg.tMIG)
            elif cfg.mode.value == "crow" and cfg.copy_rows_per_subarray > 0 \
                    and activated:
                table = self.copy[(bank, subarray)]
                count = self.act_count.get((bank, (subarray, row)), 0)
                if row not in table and count >= cfg.hot_activation_threshold:
                    if len(table) == cfg.copy_rows_per_subarray:
                        table.pop()
                    table.insert(0, row)
                    self._walk_blocking(bank, cfg.tMIG)
        return completions
