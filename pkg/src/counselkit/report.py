"""Metrics reporting: delimited summaries plus rendered trend figures.

The metrics report path emits three artifacts per run: a line-delimited
JSON report (one record per client-day), a columnar CSV summary, and one PNG
trend chart per metric with a line per client across days.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .analytics import Message, compute_metrics, group_by_day
from .storage import Store

SUMMARY_COLUMNS = (
    "client_id",
    "day",
    "rounds",
    "avg_words",
    "entropy_bits",
    "informativeness",
    "session_length_min",
)

FIGURE_METRICS = (
    ("rounds", "Rounds"),
    ("informativeness", "Informativeness"),
    ("session_length_min", "Session length (min)"),
)


def collect_messages(store: Store) -> dict[str, list[Message]]:
    """All logged conversation messages per client, in log order."""
    per_client: dict[str, list[Message]] = {}
    for client_id, _session_id, _path in store.iter_event_logs():
        log = store.event_log(client_id, _session_id)
        for event in log.read_all():
            if event.kind in ("client_msg", "agent_msg"):
                role = "client" if event.kind == "client_msg" else "agent"
                per_client.setdefault(client_id, []).append(
                    Message(role, event.payload["text"], event.ts))
    for messages in per_client.values():
        messages.sort(key=lambda m: m.ts)
    return per_client


def daily_rows(per_client: dict[str, list[Message]], idle_threshold_min: float = 8.0,
               tz: str = "UTC") -> list[dict]:
    """One row per client-day with the full engagement metric set."""
    rows = []
    for client_id in sorted(per_client):
        for day, day_messages in sorted(group_by_day(per_client[client_id], tz=tz).items()):
            metrics = compute_metrics(day_messages, idle_threshold_min)
            rows.append({
                "client_id": client_id,
                "day": day,
                "rounds": metrics.rounds,
                "avg_words": metrics.avg_words_per_response,
                "entropy_bits": metrics.information_entropy_bits,
                "informativeness": metrics.informativeness,
                "session_length_min": metrics.session_length_min,
            })
    return rows


def write_report(rows: list[dict], out_dir: str | Path, render_figures: bool = True) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}

    report_path = out_dir / "report.jsonl"
    with open(report_path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    artifacts["report"] = report_path

    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row[key] for key in SUMMARY_COLUMNS})
    artifacts["summary"] = summary_path

    if render_figures:
        for key, label in FIGURE_METRICS:
            path = out_dir / f"{key}.png"
            _render_trend(rows, key, label, path)
            artifacts[key] = path
    return artifacts


def _render_trend(rows: list[dict], key: str, label: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    clients = sorted({row["client_id"] for row in rows})
    for client_id in clients:
        series = [(row["day"], row[key]) for row in rows if row["client_id"] == client_id]
        series.sort()
        ax.plot([day for day, _ in series], [value for _, value in series],
                marker="o", label=client_id)
    ax.set_xlabel("day")
    ax.set_ylabel(label)
    ax.set_title(f"{label} by day")
    if clients:
        ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.autofmt_xdate(rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
