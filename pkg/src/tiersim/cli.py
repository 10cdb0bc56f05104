"""Command-line interface.

    tiersim run --config C --trace T [--out json|csv|text] [--audit-log PATH]
    tiersim gen --pattern P [generator flags] --out PATH
    tiersim compare --config-a A --config-b B --trace T

Exit codes: 0 success, 1 input error, 2 internal invariant fault.
"""

from __future__ import annotations

import argparse
import sys

from . import audit as audit_mod
from . import report as report_mod
from .errors import SimulationFault, TierSimError
from .trace import (TraceGenSpec, TracePattern, generate_trace, parse_trace,
                    serialize_trace)


def _read_trace(path: str):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return parse_trace(handle)
    except OSError as exc:
        raise TierSimError(f"cannot read trace {path}: {exc}")


def _cmd_run(args) -> int:
    config = report_mod.load_config(args.config)
    trace_path = args.trace or config.trace
    if not trace_path:
        raise TierSimError("no trace given (use --trace or the config's trace key)")
    requests = _read_trace(trace_path)
    report, sim = report_mod.run(config, requests,
                                 collect_audit=bool(args.audit_log))
    fmt = args.out or config.output
    sys.stdout.write(report_mod.emit(report, fmt))
    if args.audit_log:
        with open(args.audit_log, "w", encoding="utf-8") as handle:
            handle.write(audit_mod.format_log(sim.audit))
    return 0


def _cmd_gen(args) -> int:
    spec = TraceGenSpec(
        pattern=TracePattern(args.pattern),
        count=args.count,
        base_address=args.base_address,
        stride_bytes=args.stride_bytes,
        region_count=args.region_count,
        iterations=args.iterations,
        seed=args.seed,
        inter_arrival=args.inter_arrival,
        span_bytes=args.span_bytes,
        region_bytes=args.region_bytes,
        touches_per_region=args.touches_per_region,
        base_pc=args.base_pc)
    dram_config = None
    if args.config:
        dram_config = report_mod.load_config(args.config).dram
    try:
        requests = generate_trace(spec, dram_config)
    except ValueError as exc:
        raise TierSimError(str(exc))
    text = serialize_trace(requests)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    return 0


def _cmd_compare(args) -> int:
    config_a = report_mod.load_config(args.config_a)
    config_b = report_mod.load_config(args.config_b)
    requests = _read_trace(args.trace)
    comparison = report_mod.compare(config_a, config_b, requests)
    sys.stdout.write(report_mod.emit_comparison(comparison))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiersim",
        description="Tiered-latency DRAM simulator with a two-phase "
                    "spatial prefetcher")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="replay a trace under one config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--trace")
    p_run.add_argument("--out", choices=["json", "csv", "text"])
    p_run.add_argument("--audit-log")
    p_run.set_defaults(func=_cmd_run)

    p_gen = sub.add_parser("gen", help="generate a synthetic trace")
    p_gen.add_argument("--pattern", required=True,
                       choices=[p.value for p in TracePattern])
    p_gen.add_argument("--count", type=int, default=1)
    p_gen.add_argument("--base-address", type=lambda s: int(s, 0), default=0)
    p_gen.add_argument("--stride-bytes", type=int, default=64)
    p_gen.add_argument("--region-count", type=int, default=1)
    p_gen.add_argument("--region-bytes", type=int, default=2048)
    p_gen.add_argument("--touches-per-region", type=int, default=0)
    p_gen.add_argument("--iterations", type=int, default=1)
    p_gen.add_argument("--seed", type=int, default=1)
    p_gen.add_argument("--inter-arrival", type=int, default=1)
    p_gen.add_argument("--span-bytes", type=lambda s: int(s, 0),
                       default=1 << 30)
    p_gen.add_argument("--base-pc", type=lambda s: int(s, 0), default=0x400000)
    p_gen.add_argument("--config", help="config supplying the DRAM mapping "
                                        "(required for thrash)")
    p_gen.add_argument("--out", required=True, help="output path, - for stdout")
    p_gen.set_defaults(func=_cmd_gen)

    p_cmp = sub.add_parser("compare", help="A/B comparison on one trace")
    p_cmp.add_argument("--config-a", required=True)
    p_cmp.add_argument("--config-b", required=True)
    p_cmp.add_argument("--trace", required=True)
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimulationFault as exc:
        print(f"internal fault: {exc}", file=sys.stderr)
        return 2
    except TierSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
