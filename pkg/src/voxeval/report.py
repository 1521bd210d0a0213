"""Aggregate scores over metric tables and report rendering.

Averages are summed in decimal arithmetic from the printed values and rounded
half away from zero, so a mean that is exactly x.x5 in decimal rounds up the
way a reader would round it by hand.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, List, Optional, Sequence

from .errors import VoxEvalError

log = logging.getLogger(__name__)

HIGHER = "higher"
LOWER = "lower"
ARROW = {HIGHER: "↑", LOWER: "↓"}


class ReportError(VoxEvalError, ValueError):
    pass


@dataclass
class MetricTable:
    systems: List[str]
    metrics: List[str]
    directions: Dict[str, str]
    cells: List[List[Optional[float]]]
    name: str = "table"

    def __post_init__(self):
        if len(self.cells) != len(self.systems):
            raise ReportError("one cell row per system required")
        for row in self.cells:
            if len(row) != len(self.metrics):
                raise ReportError("table is not rectangular")
            for v in row:
                if v is not None and not math.isfinite(v):
                    raise ReportError("cells must be finite or missing")
        for m in self.metrics:
            if self.directions.get(m) not in (HIGHER, LOWER):
                raise ReportError(f"metric {m!r} needs direction 'higher' or 'lower'")

    def column(self, metric: str) -> List[Optional[float]]:
        j = self.metrics.index(metric)
        return [row[j] for row in self.cells]

    def row(self, system: str) -> List[Optional[float]]:
        return self.cells[self.systems.index(system)]

    def select(self, metrics: Sequence[str]) -> "MetricTable":
        idx = [self.metrics.index(m) for m in metrics]
        return MetricTable(list(self.systems), list(metrics),
                           {m: self.directions[m] for m in metrics},
                           [[row[j] for j in idx] for row in self.cells], self.name)


def round_half_away(x: float, ndigits: int = 1) -> float:
    q = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_UP))


def _decimal_mean(values: Sequence[float]) -> Decimal:
    values = list(values)
    if not values:
        raise ReportError("cannot average an empty list")
    return sum((Decimal(repr(float(v))) for v in values), Decimal(0)) / len(values)


def simple_avg(values: Sequence[float]) -> float:
    """Arithmetic mean reported to one decimal."""
    q = Decimal("0.1")
    return float(_decimal_mean(values).quantize(q, rounding=ROUND_HALF_UP))


def lp_avg(accuracies: Sequence[float]) -> float:
    """Linear-probing average: plain mean of the row's accuracies."""
    return simple_avg(accuracies)


def zs_avg(table: MetricTable) -> Dict[str, Optional[float]]:
    """100 * (1 - mean min-max normalized cell) per row.

    Min and max come from the present cells of the whole table (the
    normalization pool). Higher-better columns are flipped so that 0 is always
    the best value. Columns with fewer than two distinct present values are
    skipped; missing cells drop out of their row's mean.
    """
    norm_cols = []
    for j, metric in enumerate(table.metrics):
        present = [row[j] for row in table.cells if row[j] is not None]
        if len(present) < 2 or max(present) == min(present):
            log.warning("zs_avg: column %s has no spread; skipped", metric)
            continue
        lo, hi = min(present), max(present)
        flip = table.directions[metric] == HIGHER
        norm_cols.append((j, lo, hi, flip))
    out = {}
    for system, row in zip(table.systems, table.cells):
        vals = []
        for j, lo, hi, flip in norm_cols:
            if row[j] is None:
                continue
            x = (row[j] - lo) / (hi - lo)
            vals.append(1.0 - x if flip else x)
        out[system] = 100.0 * (1.0 - sum(vals) / len(vals)) if vals else None
    return out


def row_averages(table: MetricTable) -> Dict[str, Optional[float]]:
    """simple_avg per row; rows with missing cells get None."""
    return {s: (simple_avg(r) if all(v is not None for v in r) else None)
            for s, r in zip(table.systems, table.cells)}


# CSV

def read_table_csv(path, default_direction: str = LOWER, name: Optional[str] = None) -> MetricTable:
    """First column holds system ids; an optional '#direction' row follows the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ReportError(f"{path}: empty table")
    metrics = [c.strip() for c in rows[0][1:]]
    directions = {m: default_direction for m in metrics}
    body = rows[1:]
    if body and body[0][0].strip() == "#direction":
        directions = dict(zip(metrics, (c.strip() for c in body[0][1:])))
        body = body[1:]
    systems, cells = [], []
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(metrics) + 1:
            raise ReportError(f"{path}: row {lineno} has {len(r) - 1} cells, expected {len(metrics)}")
        systems.append(r[0].strip())
        cells.append([float(c) if c.strip() not in ("", "--", "NA") else None for c in r[1:]])
    return MetricTable(systems, metrics, directions, cells, name or str(path))


def write_table_csv(table: MetricTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["system"] + table.metrics)
        w.writerow(["#direction"] + [table.directions[m] for m in table.metrics])
        for s, row in zip(table.systems, table.cells):
            w.writerow([s] + ["" if v is None else repr(v) for v in row])


# rendering

@dataclass
class ReportSection:
    table: MetricTable
    aggregates: Dict[str, Dict[str, Optional[float]]] = field(default_factory=dict)


def default_aggregates(table: MetricTable) -> Dict[str, Dict[str, Optional[float]]]:
    higher = [m for m in table.metrics if table.directions[m] == HIGHER]
    lower = [m for m in table.metrics if table.directions[m] == LOWER]
    aggs = {}
    if higher:
        aggs["avg"] = row_averages(table.select(higher))
    if lower:
        aggs["zs_avg"] = zs_avg(table.select(lower))
    return aggs


def _fmt(v: Optional[float]) -> str:
    return "--" if v is None else f"{round_half_away(v):.1f}"


def _best(values: Sequence[Optional[float]], direction: str) -> Optional[float]:
    present = [round_half_away(v) for v in values if v is not None]
    if not present:
        return None
    return max(present) if direction == HIGHER else min(present)


def _markdown(section: ReportSection) -> List[str]:
    t = section.table
    agg_names = sorted(section.aggregates)
    head = ["system"] + [f"{m} {ARROW[t.directions[m]]}" for m in t.metrics] + [f"{a} ↑" for a in agg_names]
    lines = [f"## {t.name}", "", "| " + " | ".join(head) + " |",
             "|" + "|".join(["---"] * len(head)) + "|"]
    if not t.systems:
        lines.append("")
        return lines
    best = [_best(t.column(m), t.directions[m]) for m in t.metrics]
    best += [_best([section.aggregates[a].get(s) for s in t.systems], HIGHER) for a in agg_names]
    for s, row in zip(t.systems, t.cells):
        vals = list(row) + [section.aggregates[a].get(s) for a in agg_names]
        cells = []
        for v, b in zip(vals, best):
            txt = _fmt(v)
            cells.append(f"**{txt}**" if v is not None and round_half_away(v) == b else txt)
        lines.append("| " + " | ".join([s] + cells) + " |")
    lines.append("")
    return lines


def render_report(sections: Sequence[ReportSection], metadata: Optional[dict] = None):
    """Returns (json_text, markdown_text); both deterministic for equal inputs."""
    doc = {"metadata": metadata or {}, "tables": []}
    md = ["# Evaluation report", ""]
    if metadata:
        for k in sorted(metadata):
            md.append(f"- {k}: {json.dumps(metadata[k], sort_keys=True)}")
        md.append("")
    for sec in sections:
        t = sec.table
        doc["tables"].append({
            "name": t.name, "systems": t.systems, "metrics": t.metrics,
            "directions": {m: t.directions[m] for m in t.metrics},
            "cells": t.cells,
            "aggregates": {a: sec.aggregates[a] for a in sorted(sec.aggregates)},
        })
        md.extend(_markdown(sec))
    return json.dumps(doc, sort_keys=True, indent=2) + "\n", "\n".join(md).rstrip("\n") + "\n"
