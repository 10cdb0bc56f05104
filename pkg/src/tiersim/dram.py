"""DRAM geometry, address mapping, per-bank timing state machine, copy rows.

Address bits are sliced low to high as

    [block offset | column | channel | bank | rank | subarray+row]

where the top region of the combined subarray+row field selects the
subarray. The mapping is bijective over the configured address space.

A bank serializes all its subarrays: one open row, one busy window. The
open row is identified as a (subarray, row) pair and all per-row maps are
keyed the same way. Copy rows are reserved (not addressable); for refresh
bookkeeping they get virtual row ids >= rows_per_subarray.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError, SimulationFault


class Mode(enum.Enum):
    BASELINE = "baseline"
    TLDRAM = "tldram"
    CROW = "crow"


class Segment(enum.Enum):
    NEAR = "near"
    FAR = "far"


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass
class DramConfig:
    # geometry (powers of two)
    channels: int = 1
    ranks_per_channel: int = 1
    banks_per_rank: int = 8
    subarrays_per_bank: int = 4
    rows_per_subarray: int = 512
    near_rows_per_subarray: int = 16
    columns_per_row: int = 128
    cacheline_bytes: int = 64
    copy_rows_per_subarray: int = 8
    # timing, in memory cycles (DDR3-1600-plausible placeholders, all overridable)
    tRCD_near: int = 6
    tRCD_far: int = 11
    tRAS_near: int = 19
    tRAS_far: int = 28
    tRP: int = 11
    tCL: int = 11
    tBUS: int = 4
    tMIG: int = 40
    tRFC: int = 208
    tREFI: int = 6240
    refresh_window: int = 64_000_000
    crow_trcd_factor: float = 0.62
    crow_tras_factor: float = 0.79
    mode: Mode = Mode.BASELINE
    hot_activation_threshold: int = 2

    def __post_init__(self):
        self.validate()
        self.offset_bits = (self.cacheline_bytes - 1).bit_length()
        self.column_bits = (self.columns_per_row - 1).bit_length()
        self.channel_bits = (self.channels - 1).bit_length()
        self.bank_bits = (self.banks_per_rank - 1).bit_length()
        self.rank_bits = (self.ranks_per_channel - 1).bit_length()
        self.row_bits = (self.rows_per_subarray - 1).bit_length()
        self.subarray_bits = (self.subarrays_per_bank - 1).bit_length()
        self.row_shift = (self.offset_bits + self.column_bits
                          + self.channel_bits + self.bank_bits + self.rank_bits)
        self.total_bytes = (self.channels * self.ranks_per_channel
                            * self.banks_per_rank * self.subarrays_per_bank
                            * self.rows_per_subarray * self.columns_per_row
                            * self.cacheline_bytes)

    def validate(self) -> None:
        geometry = {
            "channels": self.channels,
            "ranks_per_channel": self.ranks_per_channel,
            "banks_per_rank": self.banks_per_rank,
            "subarrays_per_bank": self.subarrays_per_bank,
            "rows_per_subarray": self.rows_per_subarray,
            "near_rows_per_subarray": self.near_rows_per_subarray,
            "columns_per_row": self.columns_per_row,
            "cacheline_bytes": self.cacheline_bytes,
        }
        for name, value in geometry.items():
            if not _is_pow2(value):
                raise ConfigError(f"{name} must be a power of two, got {value}")
        if self.near_rows_per_subarray >= self.rows_per_subarray:
            raise ConfigError("near_rows_per_subarray must be < rows_per_subarray")
        if self.copy_rows_per_subarray >= self.rows_per_subarray:
            raise ConfigError("copy_rows_per_subarray must be < rows_per_subarray")
        if self.copy_rows_per_subarray < 0:
            raise ConfigError("copy_rows_per_subarray must be >= 0")
        timings = ["tRCD_near", "tRCD_far", "tRAS_near", "tRAS_far", "tRP",
                   "tCL", "tBUS", "tMIG", "tRFC", "tREFI", "refresh_window"]
        for name in timings:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("crow_trcd_factor", "crow_tras_factor"):
            factor = getattr(self, name)
            if not (0.0 < factor <= 1.0):
                raise ConfigError(f"{name} must be in (0, 1], got {factor}")
        if self.hot_activation_threshold < 1:
            raise ConfigError("hot_activation_threshold must be >= 1")
        if self.mode is Mode.TLDRAM:
            if self.tRCD_near >= self.tRCD_far:
                raise ConfigError("tldram mode needs tRCD_near < tRCD_far")
            if self.tRAS_near > self.tRAS_far:
                raise ConfigError("tldram mode needs tRAS_near <= tRAS_far")

    def is_near_reserved(self, row: int) -> bool:
        """True when the row is a near-segment cache slot in this mode."""
        return self.mode is Mode.TLDRAM and row < self.near_rows_per_subarray


@dataclass(frozen=True)
class DramCoord:
    channel: int
    rank: int
    bank: int
    subarray: int
    row: int
    column: int

    @property
    def bank_key(self):
        return (self.channel, self.rank, self.bank)


def map_address(address: int, config: DramConfig) -> DramCoord:
    """Decode a physical byte address into coordinates. Bijective."""
    if address < 0 or address >= config.total_bytes:
        raise ValueError(
            f"address 0x{address:x} outside 0..0x{config.total_bytes:x}")
    bits = address >> config.offset_bits
    column = bits & (config.columns_per_row - 1)
    bits >>= config.column_bits
    channel = bits & (config.channels - 1)
    bits >>= config.channel_bits
    bank = bits & (config.banks_per_rank - 1)
    bits >>= config.bank_bits
    rank = bits & (config.ranks_per_channel - 1)
    bits >>= config.rank_bits
    row = bits & (config.rows_per_subarray - 1)
    subarray = bits >> config.row_bits
    return DramCoord(channel, rank, bank, subarray, row, column)


def encode_coord(coord: DramCoord, config: DramConfig) -> int:
    """Inverse of map_address."""
    bits = (coord.subarray << config.row_bits) | coord.row
    bits = (bits << config.rank_bits) | coord.rank
    bits = (bits << config.bank_bits) | coord.bank
    bits = (bits << config.channel_bits) | coord.channel
    bits = (bits << config.column_bits) | coord.column
    return bits << config.offset_bits


def segment_of(coord: DramCoord, config: DramConfig) -> Segment:
    """Near/far classification of a row. Only meaningful in TLDRAM mode."""
    if config.mode is not Mode.TLDRAM:
        raise SimulationFault("segment_of called outside tldram mode")
    if coord.row < config.near_rows_per_subarray:
        return Segment.NEAR
    return Segment.FAR


class CopyRowTable:
    """Copy-row slots of one subarray: LRU map slot -> duplicated row id.

    A regular row appears in at most one slot; at most `slots` valid entries.
    """

    def __init__(self, slots: int):
        self.capacity = slots
        self.rows: list[Optional[int]] = [None] * slots
        self.stamps: list[int] = [0] * slots
        self._clock = 0

    def contains(self, row: int) -> bool:
        return row in self.rows if self.capacity else False

    def touch(self, row: int, now: int) -> None:
        self._clock += 1
        self.stamps[self.rows.index(row)] = self._clock

    def install(self, row: int, now: int) -> Optional[int]:
        """Duplicate `row` into the LRU slot; returns the displaced row."""
        if self.capacity == 0:
            return None
        if self.contains(row):
            raise SimulationFault(f"row {row} already has a copy-row entry")
        if None in self.rows:
            slot = self.rows.index(None)
        else:
            slot = min(range(self.capacity), key=lambda s: self.stamps[s])
        evicted = self.rows[slot]
        self.rows[slot] = row
        self._clock += 1
        self.stamps[slot] = self._clock
        return evicted

    def occupied_slots(self) -> list[int]:
        return [s for s in range(self.capacity) if self.rows[s] is not None]


def activate_latency(coord: DramCoord, config: DramConfig,
                     copy_table: Optional[CopyRowTable] = None) -> tuple[int, int]:
    """Effective (tRCD, tRAS) for activating this row.

    TLDRAM: near rows use the near timings, far rows the far timings.
    CROW: a duplicated row is activated together with its copy, which
    reaches a readable sense-amplifier state sooner; both timings shrink
    by the configured factors (ceiling). BASELINE: far timings always.
    """
    if config.mode is Mode.TLDRAM:
        if segment_of(coord, config) is Segment.NEAR:
            return config.tRCD_near, config.tRAS_near
        return config.tRCD_far, config.tRAS_far
    if config.mode is Mode.CROW and copy_table is not None \
            and copy_table.contains(coord.row):
        return (math.ceil(config.tRCD_far * config.crow_trcd_factor),
                math.ceil(config.tRAS_far * config.crow_tras_factor))
    return config.tRCD_far, config.tRAS_far


class CommandKind(enum.Enum):
    ACTIVATE = "ACT"
    READ = "RD"
    WRITE = "WR"
    PRECHARGE = "PRE"
    REFRESH = "REF"
    MIGRATE = "MIG"


class Phase(enum.Enum):
    IDLE = "idle"
    ACTIVATING = "activating"
    ACTIVE = "active"
    PRECHARGING = "precharging"
    MIGRATING = "migrating"
    REFRESHING = "refreshing"


_SETTLED = {
    Phase.ACTIVATING: Phase.ACTIVE,
    Phase.PRECHARGING: Phase.IDLE,
    Phase.MIGRATING: Phase.IDLE,
    Phase.REFRESHING: Phase.IDLE,
}


@dataclass
class BankCommand:
    kind: CommandKind
    row: Optional[tuple[int, int]] = None  # (subarray, row)
    trcd: Optional[int] = None             # ACTIVATE only
    tras: Optional[int] = None             # ACTIVATE only
    duration: Optional[int] = None         # REFRESH / MIGRATE override


class BankState:
    """Timing state machine of one bank.

    Commands are legal only at cycles >= busy_until; transitional phases
    settle once busy_until passes. Per-row maps are bounded to rows touched.
    The cached_slot_rows / copy_slot_rows sets mark physical rows currently
    holding duplicated data (maintained by the controller, consumed by the
    refresh skip rule).
    """

    def __init__(self, label=None):
        self.label = label
        self.phase = Phase.IDLE
        self.open_row: Optional[tuple[int, int]] = None
        self.busy_until = 0
        self.act_cycle = 0
        self.act_trcd = 0
        self.act_tras = 0
        self.last_access_cycle: dict[tuple[int, int], int] = {}
        self.activation_count: dict[tuple[int, int], int] = {}
        self.last_refresh: dict[tuple[int, int], int] = {}
        self.cached_slot_rows: set[tuple[int, int]] = set()
        self.copy_slot_rows: set[tuple[int, int]] = set()

    def phase_at(self, cycle: int) -> Phase:
        if cycle >= self.busy_until:
            return _SETTLED.get(self.phase, self.phase)
        return self.phase

    def settle(self, cycle: int) -> None:
        self.phase = self.phase_at(cycle)

    def _fault(self, message: str) -> SimulationFault:
        return SimulationFault(
            f"bank {self.label}: {message} "
            f"(phase={self.phase.value}, open_row={self.open_row}, "
            f"busy_until={self.busy_until}, act_cycle={self.act_cycle})")


def earliest_issue(bank: BankState, kind: CommandKind, now: int) -> int:
    """First cycle >= now at which `kind` violates no timing constraint.

    Always returns a cycle. If the bank's phase can never reach the
    command's required phase by waiting (e.g. ACTIVATE while a row is
    open), the returned cycle is where the timing constraints alone are
    met; issue_command will fault there, which is a caller bug.
    """
    base = max(now, bank.busy_until)
    if kind in (CommandKind.READ, CommandKind.WRITE):
        return max(base, bank.act_cycle + bank.act_trcd)
    if kind is CommandKind.PRECHARGE:
        return max(base, bank.act_cycle + bank.act_tras)
    return base


def issue_command(bank: BankState, command: BankCommand, cycle: int,
                  config: DramConfig) -> int:
    """Apply one command to the bank state machine; returns completion cycle.

    Faults (never an input condition) when issued before earliest_issue or
    in a phase the command is not legal in.
    """
    if cycle < earliest_issue(bank, command.kind, cycle):
        raise bank._fault(f"{command.kind.value} at {cycle} before earliest issue")
    if cycle < bank.busy_until:
        raise bank._fault(f"{command.kind.value} at {cycle} inside busy window")
    bank.settle(cycle)
    kind = command.kind

    if kind is CommandKind.ACTIVATE:
        if bank.phase is not Phase.IDLE:
            raise bank._fault(f"ACT at {cycle} while not idle")
        if command.row is None or command.trcd is None or command.tras is None:
            raise bank._fault("ACT needs row and effective timings")
        bank.open_row = command.row
        bank.act_cycle = cycle
        bank.act_trcd = command.trcd
        bank.act_tras = command.tras
        bank.phase = Phase.ACTIVATING
        bank.busy_until = cycle + command.trcd
        bank.last_access_cycle[command.row] = cycle
        bank.activation_count[command.row] = \
            bank.activation_count.get(command.row, 0) + 1
        return bank.busy_until

    if kind in (CommandKind.READ, CommandKind.WRITE):
        if bank.phase is not Phase.ACTIVE:
            raise bank._fault(f"{kind.value} at {cycle} without active row")
        if cycle < bank.act_cycle + bank.act_trcd:
            raise bank._fault(f"{kind.value} at {cycle} violates tRCD")
        if command.row is not None and command.row != bank.open_row:
            raise bank._fault(f"{kind.value} row {command.row} != open {bank.open_row}")
        completion = cycle + config.tCL + config.tBUS
        bank.busy_until = completion
        bank.last_access_cycle[bank.open_row] = cycle
        return completion

    if kind is CommandKind.PRECHARGE:
        if bank.phase is not Phase.ACTIVE:
            raise bank._fault(f"PRE at {cycle} without active row")
        if cycle < bank.act_cycle + bank.act_tras:
            raise bank._fault(f"PRE at {cycle} violates tRAS")
        bank.open_row = None
        bank.phase = Phase.PRECHARGING
        bank.busy_until = cycle + config.tRP
        return bank.busy_until

    if kind in (CommandKind.REFRESH, CommandKind.MIGRATE):
        if bank.phase is not Phase.IDLE:
            raise bank._fault(f"{kind.value} at {cycle} while not idle")
        default = config.tRFC if kind is CommandKind.REFRESH else config.tMIG
        duration = command.duration if command.duration is not None else default
        bank.phase = (Phase.REFRESHING if kind is CommandKind.REFRESH
                      else Phase.MIGRATING)
        bank.busy_until = cycle + duration
        return bank.busy_until

    raise bank._fault(f"unknown command {kind}")  # pragma: no cover


def refresh_due(row: tuple[int, int], now: int, config: DramConfig,
                bank: BankState) -> bool:
    """Whether `row` must be refreshed now.

    True once the retention window has elapsed since the last refresh,
    unless the row is a near-segment cache slot or a copy row whose data
    was accessed within the window; activations restore charge, so those
    refreshes can be skipped.
    """
    if now - bank.last_refresh.get(row, 0) < config.refresh_window:
        return False
    if row in bank.cached_slot_rows or row in bank.copy_slot_rows:
        last_access = bank.last_access_cycle.get(row)
        if last_access is not None and now - last_access < config.refresh_window:
            return False
    return True


def refresh_deadline_reached(row: tuple[int, int], now: int,
                             config: DramConfig, bank: BankState) -> bool:
    """Retention deadline test alone, ignoring the skip rule."""
    return now - bank.last_refresh.get(row, 0) >= config.refresh_window
