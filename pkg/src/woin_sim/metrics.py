"""Run metrics, seed aggregation and CSV/JSON emission."""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .config import RunConfig

SCHEMA_VERSION = 1

# Columns of each emitted table, in order.  The header row of every CSV
# carries these names; docs/scenarios.md describes them.
TABLE_COLUMNS: dict[str, list[str]] = {
    "end_to_end": [
        "scenario", "mode", "load", "seed", "generated", "forwarded", "forwarded_sla", "forwarded_asla",
        "dropped_lte_deadline", "dropped_onu_deadline", "dropped_overflow", "in_flight",
        "sla_dropped", "sla_drop_ratio", "asla_drop_ratio", "transmission_ratio",
        "delay_mean_ms", "delay_p95_ms", "lte_delay_mean_ms", "lte_delay_p95_ms",
        "cycles", "sla_oversubscribed_cycles",
    ],
    "learning": [
        "scenario", "mode", "load", "seed", "ue", "marked", "payment_per_byte", "late_payment_per_asla_byte",
        "mean_delay_ms", "transmission_ratio", "decisions", "expected_price",
    ],
    "profit": [
        "scenario", "mode", "load", "seed", "olt_revenue", "onu_profit", "onu_gross", "profit_share",
    ],
    "per_ue": [
        "scenario", "mode", "load", "seed", "ue", "cell", "marked", "learner", "generated", "forwarded",
        "dropped", "forwarded_bytes", "payment_per_byte", "mean_delay_ms",
    ],
    "per_onu": [
        "scenario", "mode", "load", "seed", "onu", "kind", "prop_us", "granted_bytes", "forwarded",
        "forwarded_bytes", "dropped_onu_deadline", "dropped_overflow", "income", "refunds",
        "payments", "discounts", "profit_share",
    ],
    # One row per sweep point and summary metric: mean and sample stdev over seeds.
    "aggregate": ["scenario", "mode", "load", "metric", "mean", "stdev", "seeds"],
}


@dataclass
class MetricsReport:
    meta: dict
    tables: dict[str, list[dict]] = field(default_factory=lambda: {k: [] for k in TABLE_COLUMNS})
    audits: dict[str, bool] = field(default_factory=dict)
    traces: dict[str, list] = field(default_factory=dict)

    @property
    def summary(self) -> dict:
        rows = self.tables["end_to_end"]
        out = dict(rows[0]) if rows else {}
        if self.tables["profit"]:
            out.update(self.tables["profit"][0])
        marked = [r for r in self.tables["learning"] if r["marked"]]
        if marked:
            out["marked_payment_per_byte"] = _mean([r["late_payment_per_asla_byte"] for r in marked])
        return out

    @property
    def ok(self) -> bool:
        return all(self.audits.values())

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "meta": self.meta, "audits": self.audits,
                "tables": self.tables}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _mean(xs: Sequence[float]) -> float:
    xs = [x for x in xs if not math.isnan(x)]
    return math.fsum(xs) / len(xs) if xs else math.nan


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def _ms(us) -> float:
    return float(us) / 1000.0


def build_report(net, scenario: str = "custom") -> MetricsReport:
    cfg: RunConfig = net.cfg
    t = net.tally
    key = {"scenario": scenario, "mode": cfg.scheduler_mode.value, "load": cfg.load, "seed": cfg.seed}
    meta = dict(key, duration_s=cfg.sim_duration_s, onu_count=cfg.onu_count, lte_onus=cfg.lte_onus,
                link_rate_bps=cfg.link_rate_bps, lte_scheduler=cfg.effective_lte_scheduler.value,
                ue_count=len(net.ues), config=cfg.model_dump(mode="json"))
    rep = MetricsReport(meta)
    delays = np.frombuffer(t.delays_us, dtype=np.int64) if len(t.delays_us) else np.zeros(0, np.int64)
    lte = np.frombuffer(t.lte_delays_us, dtype=np.int64) if len(t.lte_delays_us) else np.zeros(0, np.int64)
    sla_drop = t.dropped(True)
    asla_drop = t.dropped(False)
    dropped = sla_drop + asla_drop
    rep.tables["end_to_end"].append(dict(
        key,
        generated=t.generated, forwarded=t.forwarded_total,
        forwarded_sla=t.forwarded[True], forwarded_asla=t.forwarded[False],
        dropped_lte_deadline=sum(t.drops["lte_deadline"].values()),
        dropped_onu_deadline=sum(t.drops["onu_deadline"].values()),
        dropped_overflow=sum(t.drops["overflow"].values()),
        in_flight=net.in_flight(),
        sla_dropped=sla_drop,
        sla_drop_ratio=_ratio(sla_drop, sla_drop + t.forwarded[True]),
        asla_drop_ratio=_ratio(asla_drop, asla_drop + t.forwarded[False]),
        transmission_ratio=_ratio(t.forwarded_total, t.forwarded_total + dropped),
        delay_mean_ms=_ms(delays.mean()) if len(delays) else 0.0,
        delay_p95_ms=_ms(np.percentile(delays, 95)) if len(delays) else 0.0,
        lte_delay_mean_ms=_ms(lte.mean()) if len(lte) else 0.0,
        lte_delay_p95_ms=_ms(np.percentile(lte, 95)) if len(lte) else 0.0,
        cycles=net.cycles, sla_oversubscribed_cycles=net.sla_oversubscribed,
    ))
    onu_profit = math.fsum(o.discounts for o in net.onus)
    revenue = net.olt_revenue
    rep.tables["profit"].append(dict(
        key, olt_revenue=revenue, onu_profit=onu_profit, onu_gross=math.fsum(o.gross for o in net.onus),
        profit_share=_ratio(onu_profit, onu_profit + revenue) if (onu_profit + revenue) else 1.0,
    ))
    for ue in net.ues:
        lost = ue.forwarded + ue.dropped
        row = dict(key, ue=ue.id, cell=ue.cell, marked=ue.marked, learner=ue.learner is not None,
                   generated=ue.generated, forwarded=ue.forwarded, dropped=ue.dropped,
                   forwarded_bytes=ue.forwarded_bytes,
                   payment_per_byte=_ratio(ue.paid, ue.forwarded_bytes),
                   mean_delay_ms=_ms(_ratio(ue.delay_sum_us, ue.forwarded)))
        rep.tables["per_ue"].append(row)
        if ue.learner is not None:
            probs = ue.learner.probs[1:]
            levels = np.asarray(ue.learner.levels)
            rep.tables["learning"].append(dict(
                key, ue=ue.id, marked=ue.marked, payment_per_byte=row["payment_per_byte"],
                late_payment_per_asla_byte=(ue.late_asla_paid / ue.late_asla_bytes
                                            if ue.late_asla_bytes else math.nan),
                mean_delay_ms=row["mean_delay_ms"], transmission_ratio=_ratio(ue.forwarded, lost),
                decisions=ue.decisions, expected_price=float((probs @ levels).mean()),
            ))
    for o in net.onus:
        q = o.queues
        share = o.discounts + o.payments
        rep.tables["per_onu"].append(dict(
            key, onu=o.id, kind="lte" if o.cell is not None else "background", prop_us=o.prop_us,
            granted_bytes=o.granted_bytes, forwarded=o.forwarded, forwarded_bytes=o.forwarded_bytes,
            dropped_onu_deadline=o.drops["onu_deadline"], dropped_overflow=o.drops["overflow"],
            income=q.income, refunds=q.refunds, payments=o.payments, discounts=o.discounts,
            profit_share=_ratio(o.discounts, share) if share else 1.0,
        ))
    for rows in rep.tables.values():
        for row in rows:
            for k, v in row.items():
                if isinstance(v, np.generic):
                    row[k] = v.item()
    rep.audits = net.audits()
    if net.trace_la is not None:
        rep.traces["la"] = net.trace_la
    if net.trace_auction is not None:
        rep.traces["auction"] = net.trace_auction
    return rep


def aggregate(reports: Sequence[MetricsReport], metrics: Iterable[str] | None = None) -> dict[str, tuple[float, float]]:
    """Mean and sample standard deviation of each numeric summary metric.

    Sums use ``math.fsum`` over sorted values so the result does not depend
    on the order the seeds were run in.
    """
    if not reports:
        return {}
    summaries = [r.summary for r in reports]
    names = metrics or [k for k, v in summaries[0].items()
                        if isinstance(v, (int, float)) and not isinstance(v, bool) and k != "seed"]
    out = {}
    for name in names:
        xs = sorted(s[name] for s in summaries if name in s and not _isnan(s[name]))
        if not xs:
            out[name] = (math.nan, math.nan)
            continue
        mean = math.fsum(xs) / len(xs)
        sd = math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / (len(xs) - 1)) if len(xs) > 1 else 0.0
        out[name] = (mean, sd)
    return out


def aggregate_rows(key: dict, agg: dict[str, tuple[float, float]], seeds: int) -> list[dict]:
    return [dict(key, metric=name, mean=m, stdev=sd, seeds=seeds) for name, (m, sd) in sorted(agg.items())]


def _isnan(x) -> bool:
    return isinstance(x, float) and math.isnan(x)


TRACE_COLUMNS = {
    "la": ["time_us", "tti", "ue", "state", "action", "failed", "delivered"],
    "auction": ["cycle", "onu", "r_sla", "r_asla", "v", "granted", "discount", "payment"],
}


def _csv_text(columns: list[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in columns})
    return buf.getvalue()


def _fmt(v: Any) -> Any:
    if isinstance(v, float):
        return repr(v)
    return v


def merge_tables(reports: Sequence[MetricsReport]) -> dict[str, list[dict]]:
    tables = {k: [] for k in TABLE_COLUMNS}
    for r in reports:
        for k in tables:
            tables[k].extend(r.tables[k])
    return tables


def emit(tables: dict[str, list[dict]], fmt: str, path: str | Path, extra: dict | None = None,
         traces: dict[str, list[list]] | None = None) -> list[Path]:
    """Write one file per table (plus optional traces) into directory ``path``."""
    if fmt not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from None
    written = []
    for name, columns in TABLE_COLUMNS.items():
        rows = tables.get(name, [])
        f = out / f"{name}.{fmt}"
        if fmt == "csv":
            text = _csv_text(columns, rows)
        else:
            doc = {"schema_version": SCHEMA_VERSION, "table": name, "columns": columns,
                   "rows": [{k: r.get(k) for k in columns} for r in rows]}
            if extra:
                doc.update(extra)
            text = json.dumps(doc, sort_keys=True, indent=1, allow_nan=True) + "\n"
        _write(f, text)
        written.append(f)
    for name, rows in (traces or {}).items():
        # "la" or "la.<run tag>": the part before the dot picks the columns
        f = out / f"trace_{name.replace('.', '_', 1)}.csv"
        cols = TRACE_COLUMNS[name.split(".")[0]]
        width = max((len(r) for r in rows), default=len(cols))
        cols = cols + [f"p{i}" for i in range(width - len(cols))]
        _write(f, _csv_text(cols, (dict(zip(cols, r)) for r in rows)))
        written.append(f)
    return written


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None


def read_table(path: str | Path) -> list[dict]:
    """Parse an emitted table back into rows with numbers restored."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())["rows"]
    with path.open() as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _parse(v: str) -> Any:
    if v in ("True", "False"):
        return v == "True"
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v
