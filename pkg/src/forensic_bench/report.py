"""Aggregate run results into benchmark tables; emit CSV and Markdown."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .errors import IoFailure, MissingGroup
from .protocols import Aggregate, ProtocolSpec


def aggregate(values: Mapping[str, float], aggregates: Sequence[Aggregate]) -> dict[str, float]:
    """Unweighted mean of the member groups for every aggregate column."""
    out = {}
    for agg in aggregates:
        missing = [g for g in agg.groups if values.get(g) is None]
        if missing:
            raise MissingGroup(f"aggregate {agg.name!r} needs groups {missing}")
        out[agg.name] = math.fsum(values[g] for g in agg.groups) / len(agg.groups)
    return out


@dataclass
class ReportTable:
    columns: list[str]
    rows: list[tuple[str, dict]] = field(default_factory=list)
    metric: str = ""
    threshold: Optional[float] = None
    averaging: Optional[str] = None

    def add_row(self, label: str, cells: Mapping[str, float]):
        self.rows.append((label, dict(cells)))

    def cell(self, row: str, column: str) -> Optional[float]:
        for label, cells in self.rows:
            if label == row:
                return cells.get(column)
        raise KeyError(row)


def build_row(values: Mapping[str, float], spec: ProtocolSpec) -> dict[str, float]:
    """Group cells followed by aggregate cells, in protocol column order."""
    row = {g: values[g] for g in spec.group_names if values.get(g) is not None}
    row.update(aggregate(values, spec.aggregates))
    return row


def table_columns(spec: ProtocolSpec) -> list[str]:
    return list(spec.group_names) + [a.name for a in spec.aggregates]


def table_from_results(results, spec: ProtocolSpec, metric: Optional[str] = None) -> ReportTable:
    metric = metric or spec.default_metric
    first = results[0] if results else None
    table = ReportTable(
        table_columns(spec), metric=metric,
        threshold=None if first is None else first.threshold,
        averaging=None if first is None else first.pixel_average,
    )
    for res in results:
        values = {g: res.value(g, metric) for g in spec.group_names}
        table.add_row(res.run_name, build_row(values, spec))
    return table


def format_cell(value: Optional[float]) -> str:
    """Four decimals, half away from zero, on the shortest decimal repr."""
    if value is None:
        return "-"
    return str(Decimal(repr(float(value))).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


def csv_text(table: ReportTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run"] + table.columns)
    for label, cells in table.rows:
        w.writerow([label] + ["" if cells.get(c) is None else repr(float(cells[c])) for c in table.columns])
    return buf.getvalue()


def markdown_text(table: ReportTable) -> str:
    lines = []
    meta = []
    if table.metric:
        meta.append(f"metric: {table.metric}")
    if table.threshold is not None:
        meta.append(f"threshold: {table.threshold:g}")
    if table.averaging:
        meta.append(f"pixel averaging: {table.averaging}")
    if meta:
        lines += ["<!-- " + "; ".join(meta) + " -->", ""]
    lines.append("| " + " | ".join(["run"] + table.columns) + " |")
    lines.append("|" + "|".join(["---"] + ["---:"] * len(table.columns)) + "|")
    for label, cells in table.rows:
        lines.append("| " + " | ".join([label] + [format_cell(cells.get(c)) for c in table.columns]) + " |")
    return "\n".join(lines) + "\n"


def _write(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def emit_csv(table: ReportTable, path) -> Path:
    return _write(path, csv_text(table))


def emit_markdown(table: ReportTable, path) -> Path:
    return _write(path, markdown_text(table))


def parse_csv(text: str) -> ReportTable:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0] != "run":
        raise ValueError("report CSV must start with a 'run' header column")
    columns = rows[0][1:]
    table = ReportTable(columns)
    for row in rows[1:]:
        table.add_row(row[0], {c: float(v) for c, v in zip(columns, row[1:]) if v != ""})
    return table


def read_csv(path) -> ReportTable:
    try:
        return parse_csv(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
