"""Command audit log: serialization and an independent constraint checker.

One line per issued command:

    <cycle> <channel>.<rank>.<bank> <CMD> <subarray>:<row> <origin> <p1> <p2>

ACT carries its effective (tRCD, tRAS) in p1/p2; REF and MIG carry their
bank-busy duration in p1; other commands carry "-". The validator below
re-derives every timing constraint from the log and the config alone; it
shares no state with the simulation core.
"""

from __future__ import annotations

import math

from .dram import DramConfig, Mode


def format_entry(entry: tuple) -> str:
    cycle, bank_key, cmd, row, origin, p1, p2 = entry
    ch, rank, bank = bank_key
    row_text = "-" if row is None else f"{row[0]}:{row[1]}"
    return f"{cycle} {ch}.{rank}.{bank} {cmd} {row_text} {origin} {p1} {p2}"


def format_log(entries: list[tuple]) -> str:
    ordered = sorted(entries, key=lambda e: e[0])  # stable: per-bank order kept
    return "".join(format_entry(e) + "\n" for e in ordered)


class _BankCheck:
    __slots__ = ("busy_until", "open_row", "act_cycle", "act_trcd", "act_tras")

    def __init__(self):
        self.busy_until = 0
        self.open_row = None
        self.act_cycle = 0
        self.act_trcd = 0
        self.act_tras = 0


def _expected_act_timings(row: int, config: DramConfig) -> list[tuple[int, int]]:
    if config.mode is Mode.TLDRAM:
        if row < config.near_rows_per_subarray:
            return [(config.tRCD_near, config.tRAS_near)]
        return [(config.tRCD_far, config.tRAS_far)]
    if config.mode is Mode.CROW:
        return [(config.tRCD_far, config.tRAS_far),
                (math.ceil(config.tRCD_far * config.crow_trcd_factor),
                 math.ceil(config.tRAS_far * config.crow_tras_factor))]
    return [(config.tRCD_far, config.tRAS_far)]


def validate_log(lines, config: DramConfig) -> list[str]:
    """Replay an audit log against the timing rules; returns violations."""
    banks: dict[str, _BankCheck] = {}
    violations: list[str] = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 7:
            violations.append(f"line {line_no}: expected 7 fields")
            continue
        cycle = int(fields[0])
        bank_id = fields[1]
        cmd = fields[2]
        row = None if fields[3] == "-" else tuple(
            int(x) for x in fields[3].split(":"))
        p1 = None if fields[5] == "-" else int(fields[5])
        p2 = None if fields[6] == "-" else int(fields[6])
        bank = banks.setdefault(bank_id, _BankCheck())

        def flag(message):
            violations.append(f"line {line_no} ({cmd} bank {bank_id}): {message}")

        if cycle < bank.busy_until:
            flag(f"issued at {cycle} inside busy window ending {bank.busy_until}")
        if cmd == "ACT":
            if bank.open_row is not None:
                flag("activate with a row already open")
            if p1 is None or p2 is None:
                flag("activate without effective timings")
                continue
            expected = _expected_act_timings(row[1], config)
            if (p1, p2) not in expected:
                flag(f"effective timings ({p1},{p2}) not one of {expected}")
            bank.open_row = row
            bank.act_cycle = cycle
            bank.act_trcd = p1
            bank.act_tras = p2
            bank.busy_until = cycle + p1
        elif cmd in ("RD", "WR"):
            if bank.open_row is None:
                flag("read/write with no open row")
            elif row != bank.open_row:
                flag(f"row {row} does not match open row {bank.open_row}")
            if cycle < bank.act_cycle + bank.act_trcd:
                flag(f"issued at {cycle} before tRCD "
                     f"({bank.act_cycle}+{bank.act_trcd})")
            bank.busy_until = cycle + config.tCL + config.tBUS
        elif cmd == "PRE":
            if bank.open_row is None:
                flag("precharge with no open row")
            if cycle < bank.act_cycle + bank.act_tras:
                flag(f"issued at {cycle} before tRAS "
                     f"({bank.act_cycle}+{bank.act_tras})")
            bank.open_row = None
            bank.busy_until = cycle + config.tRP
        elif cmd in ("REF", "MIG"):
            if bank.open_row is not None:
                flag("refresh/migrate with a row open")
            duration = p1 if p1 is not None else (
                config.tRFC if cmd == "REF" else config.tMIG)
            if cmd == "MIG" and duration not in (config.tMIG, 2 * config.tMIG):
                flag(f"migrate duration {duration} is not tMIG or 2*tMIG")
            bank.busy_until = cycle + duration
        else:
            flag(f"unknown command {cmd}")
    return violations
