"""Run configuration, metric computation, and report emission.

Config files are plain text, one ``section.key = value`` per line with
``#`` comments. Unknown keys are errors; missing keys take the documented
defaults. Reports render as JSON (stable key order), CSV (header + one
row), or human-readable text. Rates are reported to 6 decimal places and
latencies to 2; the stored metric values are pre-rounded to the same
precision, so parsing an emitted JSON report recovers every metric exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields as dc_fields
from typing import Optional

from .cachemodel import LlcConfig
from .controller import (SchedulerPolicy, SimOptions, SimStats, Simulation)
from .dram import DramConfig, Mode
from .errors import ConfigError
from .prefetch import PrefetchConfig
from .trace import MemoryRequest


@dataclass
class RunConfig:
    dram: DramConfig = field(default_factory=DramConfig)
    llc: LlcConfig = field(default_factory=LlcConfig)
    prefetch: PrefetchConfig = field(default_factory=PrefetchConfig)
    sim: SimOptions = field(default_factory=SimOptions)
    trace: Optional[str] = None
    output: str = "text"
    seed: int = 1


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


def _parse_int(text: str) -> int:
    return int(text.replace("_", ""), 0)


_DRAM_INT_KEYS = [
    "channels", "ranks_per_channel", "banks_per_rank", "subarrays_per_bank",
    "rows_per_subarray", "near_rows_per_subarray", "columns_per_row",
    "cacheline_bytes", "copy_rows_per_subarray",
]
_TIMING_KEYS = [
    "tRCD_near", "tRCD_far", "tRAS_near", "tRAS_far", "tRP", "tCL", "tBUS",
    "tMIG", "tRFC", "tREFI", "refresh_window",
]
_LLC_KEYS = ["size_bytes", "associativity", "line_bytes", "hit_cycles"]
_PF_KEYS = ["region_bytes", "history_slots", "accumulation_capacity",
            "gen_timeout", "max_prefetch_blocks", "max_migrations",
            "inflight_limit"]


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    dram_kw: dict = {}
    llc_kw: dict = {}
    pf_kw: dict = {}
    sim_kw: dict = {}
    top: dict = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            _apply_key(key, value, dram_kw, llc_kw, pf_kw, sim_kw, top)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{path}:{line_no}: bad value for {key}: {exc}")
    try:
        dram = DramConfig(**dram_kw)
        llc = LlcConfig(**llc_kw)
        prefetch = PrefetchConfig(**pf_kw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}")
    sim = SimOptions(**sim_kw)
    return RunConfig(dram=dram, llc=llc, prefetch=prefetch, sim=sim,
                     trace=top.get("trace"), output=top.get("output", "text"),
                     seed=top.get("seed", 1))


def _apply_key(key, value, dram_kw, llc_kw, pf_kw, sim_kw, top) -> None:
    if key == "mode":
        try:
            dram_kw["mode"] = Mode(value.lower())
        except ValueError:
            raise ConfigError(f"unknown mode '{value}'")
        return
    if key == "trace":
        top["trace"] = value
        return
    if key == "output":
        if value not in ("json", "csv", "text"):
            raise ConfigError(f"output must be json, csv, or text, not '{value}'")
        top["output"] = value
        return
    if key == "seed":
        top["seed"] = _parse_int(value)
        return
    section, _, name = key.partition(".")
    if section == "geometry" and name in _DRAM_INT_KEYS:
        dram_kw[name] = _parse_int(value)
    elif section == "timing" and name in _TIMING_KEYS:
        dram_kw[name] = _parse_int(value)
    elif section == "timing" and name in ("crow_trcd_factor", "crow_tras_factor"):
        dram_kw[name] = float(value)
    elif section == "crow" and name == "hot_activation_threshold":
        dram_kw[name] = _parse_int(value)
    elif section == "llc" and name in _LLC_KEYS:
        llc_kw[name] = _parse_int(value)
    elif section == "llc" and name == "enabled":
        llc_kw[name] = _parse_bool(value)
    elif section == "prefetch" and name in _PF_KEYS:
        pf_kw[name] = _parse_int(value)
    elif section == "prefetch" and name == "enabled":
        pf_kw[name] = _parse_bool(value)
    elif section == "sim" and name == "scheduler":
        try:
            sim_kw["scheduler"] = SchedulerPolicy(value.lower())
        except ValueError:
            raise ConfigError(f"scheduler must be fcfs or frfcfs, not '{value}'")
    elif section == "sim" and name == "starvation_limit":
        sim_kw["starvation_limit"] = _parse_int(value)
    else:
        raise ConfigError(f"unknown config key '{key}'")


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    return parse_config(text, path)


# -- metrics -------------------------------------------------------------------

RATE_DIGITS = 6
LATENCY_DIGITS = 2

_RATE_KEYS = {"hit_rate", "accuracy", "coverage", "lateness", "pollution_ratio"}
_LATENCY_KEYS = {"avg_demand_read_latency"}


@dataclass
class Report:
    mode: str
    metrics: dict
    stats: SimStats


def build_report(config: RunConfig, stats: SimStats) -> Report:
    """Derive the reported metric tree. Rates pre-rounded to 6 decimals,
    latencies to 2, so emitted values round-trip exactly."""
    avg = stats.avg_demand_read_latency
    hist = stats.dram_read_latency_hist
    metrics = {
        "mode": config.dram.mode.value,
        "requests": {
            "arrived": stats.demand_accesses,
            "completed": stats.completed,
            "reads": stats.demand_reads,
            "writes": stats.demand_writes,
        },
        "latency": {
            "avg_demand_read_latency": (
                None if avg is None else round(avg, LATENCY_DIGITS)),
            "min_dram_read_latency": min(hist) if hist else None,
            "max_dram_read_latency": max(hist) if hist else None,
        },
        "llc": {
            "hit_rate": round(stats.llc_hit_rate, RATE_DIGITS),
            "demand_hits": stats.llc_demand_hits,
            "demand_misses": stats.llc_demand_misses,
            "prefetch_fills": stats.llc_prefetch_fills,
            "useful_prefetches": stats.llc_useful_prefetches,
            "pollution_misses": stats.llc_pollution_misses,
            "writebacks": stats.writebacks,
        },
        "near_segment": {
            "hit_rate": round(stats.near_hit_rate, RATE_DIGITS),
            "hits": stats.near_hits,
            "misses": stats.near_misses,
            "native_hits": stats.near_native_hits,
        },
        "migrations": {
            "demand": stats.migrations_demand,
            "prefetch": stats.migrations_prefetch,
            "crow_dups_demand": stats.crow_dups_demand,
            "crow_dups_prefetch": stats.crow_dups_prefetch,
        },
        "refresh": {
            "scheduled": stats.refreshes_scheduled,
            "performed": stats.refreshes_performed,
            "skipped": stats.refreshes_skipped,
        },
        "prefetcher": {
            "issued": stats.pf_issued,
            "useful": stats.pf_useful,
            "late": stats.pf_late,
            "dropped": stats.pf_dropped,
            "accuracy": round(stats.pf_accuracy, RATE_DIGITS),
            "coverage": round(stats.pf_coverage, RATE_DIGITS),
            "lateness": round(stats.pf_lateness, RATE_DIGITS),
            "pollution_ratio": round(stats.pollution_ratio, RATE_DIGITS),
        },
        "cycles_simulated": stats.cycles_simulated,
    }
    return Report(mode=config.dram.mode.value, metrics=metrics, stats=stats)


def _render_value(key: str, value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        digits = RATE_DIGITS if key in _RATE_KEYS else LATENCY_DIGITS
        return f"{value:.{digits}f}"
    if isinstance(value, int):
        return str(value)
    return json.dumps(value)


def _render_json(node, indent: int, key: str = "") -> str:
    pad = "  " * indent
    if isinstance(node, dict):
        if not node:
            return "{}"
        parts = []
        for child_key, child in node.items():
            rendered = _render_json(child, indent + 1, child_key)
            parts.append(f'{pad}  "{child_key}": {rendered}')
        return "{\n" + ",\n".join(parts) + f"\n{pad}}}"
    return _render_value(key, node)


def _flatten(node, prefix: str = "") -> list[tuple[str, object]]:
    leaves = []
    for key, value in node.items():
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            leaves.extend(_flatten(value, path))
        else:
            leaves.append((path, value))
    return leaves


def emit(report: Report, fmt: str) -> str:
    if fmt == "json":
        return _render_json(report.metrics, 0) + "\n"
    if fmt == "csv":
        leaves = _flatten(report.metrics)
        header = ",".join(path for path, _ in leaves)
        row = ",".join(
            _render_value(path.rsplit(".", 1)[-1], value)
            if not isinstance(value, str) else value
            for path, value in leaves)
        return header + "\n" + row + "\n"
    if fmt == "text":
        lines = []
        for path, value in _flatten(report.metrics):
            rendered = (value if isinstance(value, str)
                        else _render_value(path.rsplit(".", 1)[-1], value))
            lines.append(f"{path:40s} {rendered}")
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown output format '{fmt}'")


# -- runs and comparisons --------------------------------------------------------


def run(config: RunConfig, requests: list[MemoryRequest],
        collect_requests: bool = False, collect_decisions: bool = False,
        collect_audit: bool = False) -> tuple[Report, Simulation]:
    options = SimOptions(
        scheduler=config.sim.scheduler,
        starvation_limit=config.sim.starvation_limit,
        collect_requests=collect_requests,
        collect_decisions=collect_decisions,
        collect_audit=collect_audit)
    sim = Simulation(config.dram, config.llc, config.prefetch, options)
    stats = sim.run(requests)
    return build_report(config, stats), sim


@dataclass
class Comparison:
    report_a: Report
    report_b: Report
    deltas: dict


def compare(config_a: RunConfig, config_b: RunConfig,
            requests: list[MemoryRequest]) -> Comparison:
    """Run the same trace under two configs and report signed metric deltas
    (b minus a). Identical configs give exactly zero deltas."""
    report_a, _ = run(config_a, requests)
    report_b, _ = run(config_b, requests)
    flat_a = dict(_flatten(report_a.metrics))
    flat_b = dict(_flatten(report_b.metrics))
    deltas = {}
    for path, value_a in flat_a.items():
        value_b = flat_b[path]
        if isinstance(value_a, (int, float)) and not isinstance(value_a, bool) \
                and isinstance(value_b, (int, float)):
            digits = (RATE_DIGITS if path.rsplit(".", 1)[-1] in _RATE_KEYS
                      else LATENCY_DIGITS)
            deltas[path] = round(value_b - value_a, digits)
    return Comparison(report_a=report_a, report_b=report_b, deltas=deltas)


def emit_comparison(comparison: Comparison) -> str:
    lines = []
    flat_a = dict(_flatten(comparison.report_a.metrics))
    flat_b = dict(_flatten(comparison.report_b.metrics))
    lines.append(f"{'metric':40s} {'A':>16s} {'B':>16s} {'delta (B-A)':>16s}")
    for path, value_a in flat_a.items():
        key = path.rsplit(".", 1)[-1]
        value_b = flat_b[path]
        ra = value_a if isinstance(value_a, str) else _render_value(key, value_a)
        rb = value_b if isinstance(value_b, str) else _render_value(key, value_b)
        delta = comparison.deltas.get(path)
        rd = "" if delta is None else _render_value(key, delta)
        lines.append(f"{path:40s} {ra:>16s} {rb:>16s} {rd:>16s}")
    return "\n".join(lines) + "\n"
