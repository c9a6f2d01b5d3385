"""Command-line entry point: ``woin-sim run`` and ``woin-sim validate``.

Exit status is 0 only when every run passes its invariant audits; audit
failures, invalid configs and failed runs exit with 1, usage errors with 2.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import ConfigError, build_config, load_overlay
from .metrics import aggregate_rows, emit, merge_tables
from .presets import PRESETS, ScenarioError, get_preset, run_scenario


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise argparse.ArgumentTypeError("need at least one non-negative seed")
    return seeds


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="woin-sim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario preset over one or more seeds")
    r.add_argument("--preset", required=True, choices=sorted(PRESETS))
    r.add_argument("--seeds", type=_seeds, default=[1], help="comma-separated, e.g. 1,2,3")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--format", choices=["csv", "json"], default="csv")
    r.add_argument("--trace-la", action="store_true", help="write per-decision learning traces")
    r.add_argument("--trace-auction", action="store_true", help="write the per-cycle auction log")
    r.add_argument("--config", help="JSON overlay applied on top of the preset")
    r.add_argument("-q", "--quiet", action="store_true")

    v = sub.add_parser("validate", help="check a JSON config overlay against the defaults")
    v.add_argument("--config", required=True)
    return ap


def _config_errors(err: ConfigError) -> None:
    for loc, msg in err.errors:
        print(f"  {loc}: {msg}", file=sys.stderr)


def cmd_validate(args) -> int:
    try:
        cfg = build_config(load_overlay(args.config))
    except ConfigError as err:
        print(f"invalid config {args.config}:", file=sys.stderr)
        _config_errors(err)
        return 1
    print(f"{args.config}: ok ({cfg.onu_count} ONUs, {cfg.link_rate_bps:g} b/s, "
          f"{cfg.scheduler_mode.value}, load {cfg.load:g})")
    return 0


def _tag(meta: dict) -> str:
    return f"{meta['mode']}_load{meta['load']:g}_seed{meta['seed']}"


def cmd_run(args) -> int:
    preset = get_preset(args.preset)
    try:
        overlay = load_overlay(args.config) if args.config else {}
        preset.configs(overlay)  # fail fast, before any simulation starts
    except ConfigError as err:
        print(f"invalid config for preset {preset.name}:", file=sys.stderr)
        _config_errors(err)
        return 1
    try:
        result = run_scenario(preset, args.seeds, overlay, trace_la=args.trace_la,
                              trace_auction=args.trace_auction)
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    tables = merge_tables(result.reports)
    traces = {}
    for pt in result.points:
        meta = pt.reports[0].meta
        key = {"scenario": preset.name, "mode": meta["mode"], "load": meta["load"]}
        tables["aggregate"].extend(aggregate_rows(key, pt.aggregate, len(pt.reports)))
        for rep in pt.reports:
            for name, rows in rep.traces.items():
                traces[f"{name}.{_tag(rep.meta)}"] = rows
    try:
        files = emit(tables, args.format, args.out, traces=traces)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    failed = [(r.meta, name) for r in result.reports for name, ok in r.audits.items() if not ok]
    if not args.quiet:
        for pt in result.points:
            meta, agg = pt.reports[0].meta, pt.aggregate
            sla, sd = agg.get("sla_drop_ratio", (float("nan"), 0.0))
            print(f"{meta['mode']:<11} load {meta['load']:<4g} sla_drop_ratio {sla:.4f} ± {sd:.4f}  "
                  f"forwarded {agg['forwarded'][0]:.0f}  delay_mean_ms {agg['delay_mean_ms'][0]:.3f}")
        print(f"wrote {len(files)} files to {args.out}")
    for meta, name in failed:
        print(f"audit failed: {name} ({_tag(meta)})", file=sys.stderr)
    return 1 if failed else 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args)
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
