"""Cross-session comparison report: guided pipeline vs baseline, per machine.

Rows are machines, column groups are modes. Each cell pair shows completed
subtasks as x/y and the query count up to the deepest completed subtask.
The bottom block totals every column and derives the average number of
queries per completed subtask from the summed counts, not from averaging
the per-machine averages.
"""
from __future__ import annotations

import json
from pathlib import Path

from .errors import EmptyInput, StorageFailure
from .store import SessionMetrics, aggregate

MODES = ("guided", "baseline")
DASH = "—"


def load_metrics_dirs(paths: list[str | Path]) -> list[SessionMetrics]:
    rows = []
    for path in paths:
        metrics_file = Path(path) / "metrics.json"
        try:
            raw = json.loads(metrics_file.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise StorageFailure(f"cannot read {metrics_file}: {err}") from err
        rows.append(SessionMetrics.from_dict(raw))
    return rows


def build_report(rows: list[SessionMetrics]) -> dict:
    if not rows:
        raise EmptyInput("no session metrics to report on")
    machines: dict[str, dict] = {}
    order: list[str] = []
    for row in rows:
        name = row.name or "(unnamed)"
        if name not in machines:
            machines[name] = {"name": name, "guided": None, "baseline": None}
            order.append(name)
        mode = row.mode if row.mode in MODES else "guided"
        machines[name][mode] = row.to_dict()

    totals = {}
    for mode in MODES:
        mode_rows = [r for r in rows if (r.mode if r.mode in MODES else "guided") == mode]
        if not mode_rows:
            totals[mode] = None
            continue
        agg = aggregate(mode_rows)
        totals[mode] = {
            "sessions": len(mode_rows),
            "subtasks_completed": agg.subtasks_completed,
            "subtasks_total": agg.subtasks_total,
            "queries_total": agg.queries_total,
            "queries_to_deepest_subtask": agg.queries_to_deepest_subtask,
            "avg_queries_per_completed_subtask": agg.avg_queries_per_completed_subtask,
        }
    return {"machines": [machines[name] for name in order], "totals": totals}


def _subtask_cell(entry: dict | None) -> str:
    if entry is None:
        return DASH
    return f"{entry['subtasks_completed']}/{entry['subtasks_total']}"


def _query_cell(entry: dict | None) -> str:
    if entry is None:
        return DASH
    return str(entry["queries_to_deepest_subtask"])


def _avg_cell(entry: dict | None) -> str:
    if entry is None or entry["avg_queries_per_completed_subtask"] is None:
        return DASH
    return f"{entry['avg_queries_per_completed_subtask']:.2f}"


def render_table(report: dict) -> str:
    """Fixed-width text table for terminals and plain logs."""
    modes = [m for m in MODES if report["totals"].get(m) is not None]
    if not modes:
        modes = list(MODES)

    header1 = ["Machine"]
    header2 = [""]
    for mode in modes:
        header1 += [mode.capitalize(), ""]
        header2 += ["Subtasks", "Queries"]

    body = []
    for machine in report["machines"]:
        row = [machine["name"]]
        for mode in modes:
            row += [_subtask_cell(machine[mode]), _query_cell(machine[mode])]
        body.append(row)

    totals_row = ["All"]
    avg_row = ["Avg. queries/subtask"]
    for mode in modes:
        entry = report["totals"][mode]
        totals_row += [_subtask_cell(entry), _query_cell(entry)]
        avg_row += ["", _avg_cell(entry)]
    body_all = body + [totals_row, avg_row]

    columns = len(header2)
    widths = [0] * columns
    for row in [header1, header2] + body_all:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def fmt(row):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()

    rule = "-" * (sum(widths) + 2 * (columns - 1))
    lines = [fmt(header1), fmt(header2), rule]
    lines += [fmt(r) for r in body]
    lines.append(rule)
    lines.append(fmt(totals_row))
    lines.append(fmt(avg_row))
    return "\n".join(lines)
