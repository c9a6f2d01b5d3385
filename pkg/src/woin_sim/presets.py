"""Named experiment presets and the multi-seed scenario runner.

A preset is a base overlay on the defaults plus a list of sweep points (each
a further overlay, typically a load and a scheduler mode).  Running a preset
simulates every point once per seed and aggregates each point over seeds.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .config import RunConfig, build_config
from .metrics import MetricsReport, aggregate
from .network import run

# Desk-scale network: 4 ONUs on a 100 Mb/s tree, one of them backhauling an
# LTE cell that gets the usual 10 % share of the upstream.
DESK = {"onu_count": 4, "lte_onus": 1, "link_rate_bps": 1e8, "sim_duration_s": 2.0}

SWEEP_LOADS = [round(0.1 * k, 1) for k in range(1, 13)]
PROFIT_LOADS = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2]
MODES = ["AUORA_LASA", "IPACT"]

# Two learning UEs in the LTE cell against unmarked UEs at 20 % or 70 % load.
MARKED = {**DESK, "sim_duration_s": 20.0, "cell": {"marked_ues": 2, "marked_load": 0.5}}


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    base: dict
    points: list[dict] = field(default_factory=lambda: [{}])

    def configs(self, overlay: Optional[dict] = None, seed: int = 1) -> list[RunConfig]:
        """Resolved config of every sweep point; ``overlay`` applies last."""
        return [build_config(self.base, p, overlay or {}, {"seed": seed}) for p in self.points]


def _sweep(loads: Sequence[float], modes: Sequence[str]) -> list[dict]:
    return [{"scheduler_mode": m, "load": x} for m in modes for x in loads]


PRESETS: dict[str, Preset] = {p.name: p for p in [
    Preset("load_sweep_sla10", "Desk-scale load sweep, both schedulers, SLA at 10 % of capacity.",
           {**DESK, "sla_fraction": 0.1}, _sweep(SWEEP_LOADS, MODES)),
    Preset("load_sweep_sla50", "Desk-scale load sweep, both schedulers, SLA at 50 % of capacity.",
           {**DESK, "sla_fraction": 0.5}, _sweep(SWEEP_LOADS, MODES)),
    Preset("marked_ue_low_bg", "Two learning UEs, unmarked traffic at 20 % network load.",
           MARKED, [{"load": 0.2}]),
    Preset("marked_ue_high_bg", "Two learning UEs, unmarked traffic at 70 % network load.",
           MARKED, [{"load": 0.7}]),
    Preset("profit_share_sweep", "ONU profit share and OLT revenue against load, auction scheduler.",
           DESK, _sweep(PROFIT_LOADS, ["AUORA_LASA"])),
    Preset("full_scale", "16 ONUs on a 1 Gb/s tree, ten LTE cells, 10 s at full load.",
           {"onu_count": 16, "lte_onus": 10, "link_rate_bps": 1e9, "sim_duration_s": 10.0, "load": 1.0}),
]}


class ScenarioError(RuntimeError):
    def __init__(self, seed: int, point: dict, cause: BaseException):
        self.seed, self.point, self.cause = seed, point, cause
        super().__init__(f"run failed for seed {seed} at {point or 'the base point'}: "
                         f"{type(cause).__name__}: {cause}")


@dataclass
class PointResult:
    point: dict
    reports: list[MetricsReport]
    aggregate: dict[str, tuple[float, float]]


@dataclass
class ScenarioResult:
    preset: str
    seeds: list[int]
    points: list[PointResult]

    @property
    def reports(self) -> list[MetricsReport]:
        return [r for p in self.points for r in p.reports]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.reports)


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def worker_count() -> int:
    raw = os.environ.get("WOIN_SIM_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"WOIN_SIM_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"WOIN_SIM_THREADS must be a positive integer, got {raw!r}")
    return n


def _job(args) -> MetricsReport:
    cfg, scenario, trace_la, trace_auction = args
    return run(cfg, scenario, trace_la=trace_la, trace_auction=trace_auction)


def run_scenario(preset: str | Preset, seeds: Sequence[int], overlay: Optional[dict] = None,
                 trace_la: bool = False, trace_auction: bool = False,
                 points: Optional[Callable[[dict], bool]] = None) -> ScenarioResult:
    """Run every sweep point of ``preset`` once per seed.

    ``points`` optionally filters the sweep.  Runs may execute in worker
    processes (at most WOIN_SIM_THREADS); results are collected in
    point-then-seed order whatever order they finish in.
    """
    p = get_preset(preset) if isinstance(preset, str) else preset
    if not seeds:
        raise ValueError("at least one seed is required")
    chosen = [pt for pt in p.points if points is None or points(pt)]
    jobs, keys = [], []
    for pt in chosen:
        for s in seeds:
            cfg = build_config(p.base, pt, overlay or {}, {"seed": s})
            jobs.append((cfg, p.name, trace_la, trace_auction))
            keys.append((pt, s))
    workers = min(worker_count(), len(jobs))
    reports: list[MetricsReport] = []
    if workers <= 1:
        for job, (pt, s) in zip(jobs, keys):
            try:
                reports.append(_job(job))
            except Exception as exc:
                raise ScenarioError(s, pt, exc) from exc
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_job, job) for job in jobs]
            for fut, (pt, s) in zip(futures, keys):
                try:
                    reports.append(fut.result())
                except Exception as exc:
                    for f in futures:
                        f.cancel()
                    raise ScenarioError(s, pt, exc) from exc
    out, i = [], 0
    for pt in chosen:
        group = reports[i:i + len(seeds)]
        i += len(seeds)
        out.append(PointResult(pt, group, aggregate(group)))
    return ScenarioResult(p.name, list(seeds), out)
