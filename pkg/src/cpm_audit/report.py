"""Audit reports: one advantage row per metric, rendered as CSV/Markdown/JSON.

Percentages carry two decimals in the tabular renders; JSON keeps the full
floats. Rendering is pure, so identical reports always produce identical
bytes.
"""

from __future__ import annotations

import dataclasses
import json

from .cpm import CpmResult
from .threshold import AttackResult

METRIC_ORDER = ("msp", "ent", "ce", "me", "relaxloss", "mixup", "cpm")

RENDER_FORMATS = ("csv", "markdown", "json")


@dataclasses.dataclass(frozen=True)
class AuditReport:
    """Advantage table for one audited model."""

    model_tag: str
    rows: tuple[tuple[str, float], ...]  # (metric_name, advantage_percent)
    ablation: tuple[tuple[int, float], ...] | None = None
    metadata: dict | None = None


def build_report(results, model_tag: str, metadata: dict | None = None) -> AuditReport:
    """Collect attack and polytope results into a fixed-order report.

    Rows follow ``METRIC_ORDER``; each metric may appear at most once.
    Advantages are scaled to percent.
    """
    if not results:
        raise ValueError("need at least one result")
    by_name: dict[str, float] = {}
    for res in results:
        if isinstance(res, AttackResult):
            name, adv = res.score_name, res.evaluation_advantage
        elif isinstance(res, CpmResult):
            name, adv = "cpm", res.evaluation_advantage
        else:
            raise TypeError(f"unsupported result type {type(res).__name__}")
        if name not in METRIC_ORDER:
            raise ValueError(f"unknown metric {name!r}")
        if name in by_name:
            raise ValueError(f"duplicate metric {name!r}")
        by_name[name] = adv * 100.0
    rows = tuple((name, by_name[name]) for name in METRIC_ORDER if name in by_name)
    return AuditReport(model_tag, rows, None, metadata)


def with_ablation(report: AuditReport, ablation) -> AuditReport:
    """Attach a (K, advantage_percent) curve to a report."""
    curve = tuple((int(k), float(p)) for k, p in ablation)
    return dataclasses.replace(report, ablation=curve)


def render(report: AuditReport, format: str) -> str:
    """Render the report; CSV and Markdown use 2-decimal percents."""
    if format == "csv":
        lines = ["metric,advantage_percent"]
        lines += [f"{name},{pct:.2f}" for name, pct in report.rows]
        return "\n".join(lines) + "\n"
    if format == "markdown":
        lines = [
            f"# Audit report: {report.model_tag}",
            "",
            "| metric | advantage (%) |",
            "| --- | --- |",
        ]
        lines += [f"| {name} | {pct:.2f} |" for name, pct in report.rows]
        if report.ablation:
            lines += ["", "| K | advantage (%) |", "| --- | --- |"]
            lines += [f"| {k} | {pct:.2f} |" for k, pct in report.ablation]
        return "\n".join(lines) + "\n"
    if format == "json":
        obj = {
            "model_tag": report.model_tag,
            "rows": [
                {"metric": name, "advantage_percent": pct}
                for name, pct in report.rows
            ],
            "ablation": (
                None
                if report.ablation is None
                else [{"k": k, "advantage_percent": pct} for k, pct in report.ablation]
            ),
            "metadata": report.metadata,
        }
        return json.dumps(obj, sort_keys=True, indent=2) + "\n"
    raise ValueError(f"unknown format {format!r}; expected one of {RENDER_FORMATS}")


def report_from_json(text: str) -> AuditReport:
    obj = json.loads(text)
    return AuditReport(
        model_tag=obj["model_tag"],
        rows=tuple((r["metric"], r["advantage_percent"]) for r in obj["rows"]),
        ablation=(
            None
            if obj.get("ablation") is None
            else tuple((r["k"], r["advantage_percent"]) for r in obj["ablation"])
        ),
        metadata=obj.get("metadata"),
    )


def render_ablation_csv(ablation) -> str:
    """`k,advantage_percent` CSV for external plotters."""
    lines = ["k,advantage_percent"]
    lines += [f"{int(k)},{pct:.2f}" for k, pct in ablation]
    return "\n".join(lines) + "\n"
