import itertools

import pytest

from tiersim.dram import (BankCommand, BankState, CommandKind, CopyRowTable,
                          DramConfig, DramCoord, Mode, Phase, Segment,
                          activate_latency, earliest_issue, encode_coord,
                          issue_command, map_address, refresh_due, segment_of)
from tiersim.errors import ConfigError, SimulationFault
from tiersim.trace import Xorshift64Star


SMALL = dict(cacheline_bytes=64, columns_per_row=128, channels=1,
             banks_per_rank=4, ranks_per_channel=1)


def test_map_zero_is_zero():
    coord = map_address(0, DramConfig(**SMALL))
    assert coord == DramCoord(0, 0, 0, 0, 0, 0)


def test_map_one_block_step():
    coord = map_address(64, DramConfig(**SMALL))
    assert coord.column == 1
    assert (coord.channel, coord.bank, coord.rank, coord.subarray, coord.row) \
        == (0, 0, 0, 0, 0)


def test_map_first_bit_above_column_is_bank():
    # derived against an independent bit decomposition of the layout:
    # 0x2000 >> 6 = 128 column slots; 128 >> 7 = 1 -> bank bit 0
    coord = map_address(0x2000, DramConfig(**SMALL))
    assert coord.column == 0
    assert coord.bank == 1


def test_map_out_of_range():
    cfg = DramConfig(**SMALL)
    with pytest.raises(ValueError):
        map_address(cfg.total_bytes, cfg)


def test_map_bijection_random_sample():
    # coordinates carry no byte offset, so the round trip is exact at
    # cacheline granularity
    cfg = DramConfig()
    rng = Xorshift64Star(2024)
    for _ in range(100_000):
        address = rng.below(cfg.total_bytes) & ~(cfg.cacheline_bytes - 1)
        assert encode_coord(map_address(address, cfg), cfg) == address


def test_map_bijection_structured_sample():
    cfg = DramConfig(**SMALL)
    for coord in [DramCoord(0, 0, 3, 1, 510, 127), DramCoord(0, 0, 0, 3, 0, 1)]:
        assert map_address(encode_coord(coord, cfg), cfg) == coord


def test_segment_boundaries():
    cfg = DramConfig(mode=Mode.TLDRAM, near_rows_per_subarray=16)

    def seg(row):
        return segment_of(DramCoord(0, 0, 0, 0, row, 0), cfg)

    assert seg(0) is Segment.NEAR
    assert seg(15) is Segment.NEAR
    assert seg(16) is Segment.FAR
    assert seg(cfg.rows_per_subarray - 1) is Segment.FAR


def test_segment_contract_outside_tldram():
    cfg = DramConfig(mode=Mode.BASELINE)
    with pytest.raises(SimulationFault):
        segment_of(DramCoord(0, 0, 0, 0, 0, 0), cfg)


def test_activate_latency_baseline_echo():
    cfg = DramConfig(tRCD_far=11, tRAS_far=28)
    assert activate_latency(DramCoord(0, 0, 0, 0, 100, 0), cfg) == (11, 28)


def test_activate_latency_crow_ceiling():
    # hand ceiling arithmetic: ceil(11*0.62)=7, ceil(28*0.79)=23
    cfg = DramConfig(mode=Mode.CROW, tRCD_far=11, tRAS_far=28,
                     crow_trcd_factor=0.62, crow_tras_factor=0.79)
    table = CopyRowTable(4)
    table.install(40, now=0)
    assert activate_latency(DramCoord(0, 0, 0, 0, 40, 0), cfg, table) == (7, 23)
    assert activate_latency(DramCoord(0, 0, 0, 0, 41, 0), cfg, table) == (11, 28)


def test_activate_latency_tldram_near_echo():
    cfg = DramConfig(mode=Mode.TLDRAM, tRCD_near=6, tRAS_near=19)
    assert activate_latency(DramCoord(0, 0, 0, 0, 3, 0), cfg) == (6, 19)


def test_crow_factor_one_gives_equality_otherwise_less():
    base = DramConfig(mode=Mode.CROW, crow_trcd_factor=1.0, crow_tras_factor=1.0)
    table = CopyRowTable(1)
    table.install(5, now=0)
    coord = DramCoord(0, 0, 0, 0, 5, 0)
    assert activate_latency(coord, base, table) == (base.tRCD_far, base.tRAS_far)
    faster = DramConfig(mode=Mode.CROW, crow_trcd_factor=0.9,
                        crow_tras_factor=0.9)
    trcd, tras = activate_latency(coord, faster, table)
    assert trcd <= faster.tRCD_far and tras <= faster.tRAS_far
    assert (trcd, tras) != (faster.tRCD_far, faster.tRAS_far)


def test_config_validation():
    with pytest.raises(ConfigError):
        DramConfig(rows_per_subarray=500)  # not a power of two
    with pytest.raises(ConfigError):
        DramConfig(near_rows_per_subarray=512, rows_per_subarray=512)
    with pytest.raises(ConfigError):
        DramConfig(mode=Mode.TLDRAM, tRCD_near=11, tRCD_far=11)
    with pytest.raises(ConfigError):
        DramConfig(crow_trcd_factor=0.0)


# -- bank state machine ------------------------------------------------------


def _activate(bank, cfg, row=(0, 7), cycle=0, trcd=None, tras=None):
    return issue_command(
        bank, BankCommand(CommandKind.ACTIVATE, row=row,
                          trcd=trcd or cfg.tRCD_far, tras=tras or cfg.tRAS_far),
        cycle, cfg)


def test_earliest_issue_idle_activate():
    bank = BankState()
    assert earliest_issue(bank, CommandKind.ACTIVATE, 5) == 5


def test_earliest_issue_read_after_activate():
    cfg = DramConfig()
    bank = BankState()
    _activate(bank, cfg, cycle=10, trcd=11)
    assert earliest_issue(bank, CommandKind.READ, 12) == 21


def test_earliest_issue_precharge_respects_tras():
    cfg = DramConfig()
    bank = BankState()
    _activate(bank, cfg, cycle=10, tras=28)
    assert earliest_issue(bank, CommandKind.PRECHARGE, 15) == 38


def test_issue_activate_transitions():
    cfg = DramConfig()
    bank = BankState()
    completion = _activate(bank, cfg, row=(0, 7), cycle=100, trcd=11)
    assert completion == 111
    assert bank.open_row == (0, 7)
    assert bank.busy_until == 111
    assert bank.phase_at(111) is Phase.ACTIVE
    assert bank.activation_count[(0, 7)] == 1


def test_issue_read_completion():
    cfg = DramConfig(tCL=11, tBUS=4)
    bank = BankState()
    _activate(bank, cfg, cycle=100, trcd=11)
    completion = issue_command(bank, BankCommand(CommandKind.READ), 111, cfg)
    assert completion == 126


def test_issue_precharge_goes_idle():
    cfg = DramConfig()
    bank = BankState()
    _activate(bank, cfg, cycle=0)
    cycle = earliest_issue(bank, CommandKind.PRECHARGE, 0)
    issue_command(bank, BankCommand(CommandKind.PRECHARGE), cycle, cfg)
    assert bank.open_row is None
    assert bank.phase_at(bank.busy_until) is Phase.IDLE


def test_issue_before_earliest_faults():
    cfg = DramConfig()
    bank = BankState()
    _activate(bank, cfg, cycle=10, trcd=11)
    with pytest.raises(SimulationFault):
        issue_command(bank, BankCommand(CommandKind.READ), 15, cfg)


def test_activate_on_active_bank_faults():
    cfg = DramConfig()
    bank = BankState()
    _activate(bank, cfg, cycle=0)
    with pytest.raises(SimulationFault):
        _activate(bank, cfg, row=(0, 9), cycle=earliest_issue(
            bank, CommandKind.ACTIVATE, 0))


def test_migrate_refresh_need_idle():
    cfg = DramConfig()
    bank = BankState()
    _activate(bank, cfg, cycle=0)
    with pytest.raises(SimulationFault):
        issue_command(bank, BankCommand(CommandKind.MIGRATE),
                      earliest_issue(bank, CommandKind.MIGRATE, 50), cfg)


def _reachable_states(cfg):
    """Small enumeration of reachable bank states with their legal commands."""
    states = []
    bank = BankState()
    states.append(("fresh", bank, [CommandKind.ACTIVATE, CommandKind.REFRESH,
                                   CommandKind.MIGRATE]))
    bank = BankState()
    _activate(bank, cfg, cycle=3)
    states.append(("activated", bank, [CommandKind.READ, CommandKind.WRITE,
                                       CommandKind.PRECHARGE]))
    bank = BankState()
    _activate(bank, cfg, cycle=3)
    issue_command(bank, BankCommand(CommandKind.READ),
                  earliest_issue(bank, CommandKind.READ, 0), cfg)
    states.append(("after_read", bank, [CommandKind.READ, CommandKind.WRITE,
                                        CommandKind.PRECHARGE]))
    bank = BankState()
    _activate(bank, cfg, cycle=3)
    issue_command(bank, BankCommand(CommandKind.PRECHARGE),
                  earliest_issue(bank, CommandKind.PRECHARGE, 0), cfg)
    states.append(("precharged", bank, [CommandKind.ACTIVATE,
                                        CommandKind.REFRESH,
                                        CommandKind.MIGRATE]))
    bank = BankState()
    issue_command(bank, BankCommand(CommandKind.REFRESH), 0, cfg)
    states.append(("refreshing", bank, [CommandKind.ACTIVATE,
                                        CommandKind.REFRESH,
                                        CommandKind.MIGRATE]))
    bank = BankState()
    issue_command(bank, BankCommand(CommandKind.MIGRATE, duration=80), 0, cfg)
    states.append(("migrating", bank, [CommandKind.ACTIVATE,
                                       CommandKind.REFRESH,
                                       CommandKind.MIGRATE]))
    return states


@pytest.mark.parametrize("now", [0, 1, 7, 100])
def test_issue_at_earliest_never_faults(now):
    cfg = DramConfig()
    for name, bank, commands in _reachable_states(cfg):
        for kind in commands:
            cycle = earliest_issue(bank, kind, now)
            clone = BankState()
            clone.__dict__.update({
                k: (dict(v) if isinstance(v, dict) else
                    set(v) if isinstance(v, set) else v)
                for k, v in bank.__dict__.items()})
            command = BankCommand(kind, row=(0, 5), trcd=cfg.tRCD_far,
                                  tras=cfg.tRAS_far)
            if kind in (CommandKind.READ, CommandKind.WRITE):
                command = BankCommand(kind, row=clone.open_row)
            issue_command(clone, command, cycle, cfg)  # must not raise


# -- copy-row table -----------------------------------------------------------


def test_copy_table_lru_and_uniqueness():
    table = CopyRowTable(2)
    assert table.install(10, now=0) is None
    assert table.install(11, now=1) is None
    table.touch(10, now=2)
    assert table.install(12, now=3) == 11  # 11 was LRU
    assert table.contains(10) and table.contains(12)
    with pytest.raises(SimulationFault):
        table.install(10, now=4)


def test_copy_table_zero_capacity():
    table = CopyRowTable(0)
    assert not table.contains(1)
    assert table.install(1, now=0) is None


# -- refresh rule ------------------------------------------------------------


def test_refresh_due_base_rule():
    cfg = DramConfig(refresh_window=1000)
    bank = BankState()
    assert refresh_due((0, 50), 1000, cfg, bank)
    assert not refresh_due((0, 50), 999, cfg, bank)


def test_refresh_skip_for_recent_copy_row():
    cfg = DramConfig(refresh_window=1000)
    bank = BankState()
    vrow = (0, cfg.rows_per_subarray)  # virtual id of copy slot 0
    bank.copy_slot_rows.add(vrow)
    bank.last_access_cycle[vrow] = 1999
    assert not refresh_due(vrow, 2000, cfg, bank)  # accessed 1 cycle ago


def test_refresh_skip_lapses():
    cfg = DramConfig(refresh_window=1000)
    bank = BankState()
    slot = (0, 3)
    bank.cached_slot_rows.add(slot)
    bank.last_access_cycle[slot] = 0
    assert refresh_due(slot, 2000, cfg, bank)  # untouched for 2 windows
