"""Markdown and CSV tables in the rows = configurations, columns = actions + Avg
layout, with the per-column best value in bold."""
from __future__ import annotations

import csv
import io
from typing import Mapping, Sequence

from .metrics import MetricReport

__all__ = ["compare_reports", "table_rows", "to_markdown", "to_csv", "AVG"]

AVG = "Avg"


def _columns_of(report) -> dict[str, float | None]:
    if isinstance(report, MetricReport):
        raise TypeError("pass (report, metric) through table_rows")
    return {str(k): (None if v is None else float(v)) for k, v in report.items()}


def table_rows(reports, metric: str = "mpjpe") -> list[tuple[str, dict[str, float | None]]]:
    """Turn ``[(label, MetricReport | {column: value})]`` (or a dict) into rows.

    A MetricReport contributes one column per action plus ``Avg``. A plain
    mapping is taken as given.
    """
    items = list(reports.items()) if isinstance(reports, Mapping) else list(reports)
    rows = []
    for label, rep in items:
        if isinstance(rep, MetricReport):
            cols = {a: v.get(metric) for a, v in rep.per_action.items()}
            cols[AVG] = rep.get(metric)
        else:
            cols = _columns_of(rep)
        rows.append((str(label), cols))
    return rows


def _check_keys(rows) -> list[str]:
    if not rows:
        raise ValueError("no reports to compare")
    keys = list(rows[0][1])
    for label, cols in rows[1:]:
        if set(cols) != set(keys):
            missing = sorted(set(keys) ^ set(cols))
            raise ValueError(f"key mismatch between {rows[0][0]!r} and {label!r}: {missing}")
    # Avg always last, actions in first-report order
    if AVG in keys:
        keys = [k for k in keys if k != AVG] + [AVG]
    return keys


def _best(rows, keys, lower_is_better: bool) -> dict[str, float | None]:
    best = {}
    for k in keys:
        vals = [cols[k] for _, cols in rows if cols[k] is not None]
        best[k] = (min(vals) if lower_is_better else max(vals)) if vals else None
    return best


def _fmt(v: float | None, digits: int) -> str:
    return "-" if v is None else f"{v:.{digits}f}"


def to_markdown(rows, digits: int = 2, lower_is_better: bool = True, corner: str = "Method") -> str:
    keys = _check_keys(rows)
    bold = len(rows) > 1
    best = _best(rows, keys, lower_is_better)
    lines = [
        "| " + " | ".join([corner] + keys) + " |",
        "|" + "---|" * (len(keys) + 1),
    ]
    for label, cols in rows:
        cells = []
        for k in keys:
            s = _fmt(cols[k], digits)
            # compare at printed precision so visually tied cells are both bold
            if bold and cols[k] is not None and s == _fmt(best[k], digits):
                s = f"**{s}**"
            cells.append(s)
        lines.append("| " + " | ".join([label] + cells) + " |")
    return "\n".join(lines) + "\n"


def to_csv(rows, corner: str = "Method") -> str:
    keys = _check_keys(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([corner] + keys)
    for label, cols in rows:
        w.writerow([label] + ["" if cols[k] is None else repr(cols[k]) for k in keys])
    return buf.getvalue()


def compare_reports(
    reports: Sequence | Mapping, metric: str = "mpjpe", digits: int = 2, lower_is_better: bool = True
) -> str:
    """Side-by-side Markdown table, best value per column in bold.

    A single report is rendered without bolding. Reports must share the same
    action keys, otherwise ``ValueError``.
    """
    return to_markdown(table_rows(reports, metric), digits, lower_is_better)
