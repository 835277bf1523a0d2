"""CSV series extracted from run logs, for external plotting."""

from __future__ import annotations

import csv
from pathlib import Path

from .harness import RunLog


def write_report_csvs(run_log: RunLog, out_dir: str | Path) -> list[Path]:
    """Emit the standard series; returns the paths written."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    written = []

    path = root / "mean_difficulty.csv"
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "mean_difficulty"])
        for record in run_log.records:
            values = [e.d_after for e in record.entries]
            writer.writerow([record.step, sum(values) / len(values) if values else ""])
    written.append(path)

    path = root / "env_difficulty.csv"
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "env_id", "difficulty", "accuracy", "effective"])
        for record in run_log.records:
            for e in record.entries:
                writer.writerow(
                    [record.step, e.env_id, e.d_after,
                     "" if e.accuracy is None else e.accuracy, int(e.effective)]
                )
    written.append(path)

    path = root / "effective_rate.csv"
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "step_rate", "cumulative_rate"])
        hits = total = 0
        for record in run_log.records:
            step_hits = sum(e.effective for e in record.entries)
            step_total = len(record.entries)
            hits += step_hits
            total += step_total
            writer.writerow(
                [record.step,
                 step_hits / step_total if step_total else "",
                 hits / total if total else ""]
            )
    written.append(path)

    path = root / "retirements.csv"
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "env_id", "cause", "slope", "replacement_id"])
        for record in run_log.records:
            for event in record.retirements:
                writer.writerow(
                    [event.step, event.env_id, event.cause,
                     "" if event.slope is None else event.slope, event.replacement_id]
                )
    written.append(path)
    return written
