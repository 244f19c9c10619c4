"""Result tables (CSV / markdown) and eval CSV parsing."""

from __future__ import annotations

import csv
import io
from typing import Mapping

from .errors import ValidationError
from .metrics import METRIC_FIELDS, TABLE_HEADERS, TABLE_ORDER, MetricReport, confident

# columns where a Wilson comparison makes sense
PROPORTION_FIELDS = ("perr_h", "perr_a", "cf1_h", "cf1_a", "cacc")


def report_csv(report: MetricReport) -> str:
    return ",".join(METRIC_FIELDS) + "\n" + ",".join(repr(float(v)) for v in report.as_tuple()) + "\n"


def parse_report_csv(text: str) -> MetricReport:
    rows = list(csv.DictReader(io.StringIO(text)))
    if len(rows) != 1:
        raise ValidationError("metric CSV must contain exactly one data row")
    row = rows[0]
    try:
        return MetricReport(**{f: float(row[f]) for f in METRIC_FIELDS})
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad metric CSV: {exc}") from None


def per_event_csv(per_event: Mapping[str, MetricReport]) -> str:
    lines = ["event_id," + ",".join(METRIC_FIELDS)]
    for event, rep in per_event.items():
        lines.append(event + "," + ",".join(repr(float(v)) for v in rep.as_tuple()))
    return "\n".join(lines) + "\n"


def _stars(reports: Mapping[str, MetricReport], field: str) -> set:
    """Names whose column maximum is confidently above the runner-up."""
    vals = sorted(((getattr(r, field), name) for name, r in reports.items()), reverse=True)
    if len(vals) < 2:
        return set()
    (top, name), (second, other) = vals[0], vals[1]
    n1, n2 = reports[name].n_tweets, reports[other].n_tweets
    if top == second or n1 <= 0 or n2 <= 0:
        return set()
    return {name} if confident(top, n1, second, n2) else set()


def render_report(reports: Mapping[str, MetricReport], fmt: str = "markdown") -> str:
    if not reports:
        raise ValidationError("nothing to report")
    if fmt == "csv":
        lines = ["run," + ",".join(TABLE_ORDER)]
        for name, rep in reports.items():
            lines.append(name + "," + ",".join(repr(float(getattr(rep, f))) for f in TABLE_ORDER))
        return "\n".join(lines) + "\n"
    if fmt != "markdown":
        raise ValidationError(f"unknown report format {fmt!r}")

    col_max = {f: max(getattr(r, f) for r in reports.values()) for f in TABLE_ORDER}
    stars = {f: _stars(reports, f) for f in PROPORTION_FIELDS}
    lines = ["| Run | " + " | ".join(TABLE_HEADERS[f] for f in TABLE_ORDER) + " |",
             "|---|" + "---:|" * len(TABLE_ORDER)]
    for name, rep in reports.items():
        cells = []
        for f in TABLE_ORDER:
            v = getattr(rep, f)
            cell = f"{v:.4f}"
            if v == col_max[f]:
                cell = f"**{cell}**"
            if name in stars.get(f, ()):
                cell += "★"
            cells.append(cell)
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def parse_report_table_csv(text: str) -> dict[str, dict[str, float]]:
    """Read back ``render_report(..., 'csv')`` output."""
    return {row["run"]: {f: float(row[f]) for f in TABLE_ORDER} for row in csv.DictReader(io.StringIO(text))}
