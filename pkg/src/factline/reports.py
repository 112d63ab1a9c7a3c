"""Plot-ready CSV breakdowns of clustered records: over time, by site, by medium, by validity."""

from __future__ import annotations

import csv
import datetime as dt
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

from factline.corpus import StoryRecord

TIMESERIES_COLUMNS = {"week": ("iso_week", "cluster", "count"), "day": ("date", "cluster", "count")}
BREAKDOWN_COLUMNS = ("category", "cluster", "count", "proportion")


def iso_week(day: dt.date) -> str:
    year, week, _ = day.isocalendar()
    return f"{year}-W{week:02d}"


def timeseries_rows(
    records: Iterable[StoryRecord], assignments: Mapping[str, int], bucket: str = "week"
) -> tuple[list[dict[str, str]], int]:
    """Counts per (time bucket, cluster); returns the rows and the number of dateless records skipped."""
    if bucket not in ("week", "day"):
        raise ValueError(f"bucket must be 'week' or 'day', got {bucket!r}")
    counts: Counter[tuple[str, int]] = Counter()
    skipped = 0
    for rec in records:
        if rec.id not in assignments:
            continue
        if rec.date is None:
            skipped += 1
            continue
        key = iso_week(rec.date) if bucket == "week" else rec.date.isoformat()
        counts[(key, int(assignments[rec.id]))] += 1
    rows = [
        {TIMESERIES_COLUMNS[bucket][0]: b, "cluster": str(c + 1), "count": str(n)}
        for (b, c), n in sorted(counts.items())
    ]
    return rows, skipped


def breakdown_rows(
    records: Iterable[StoryRecord], assignments: Mapping[str, int], by: str
) -> list[dict[str, str]]:
    """Cluster distribution within each category (site, medium or validity).

    `proportion` is the share of the category's stories falling in the
    cluster, so proportions sum to 1 per category. Multi-medium stories count
    once under each of their mediums.
    """
    if by not in ("site", "medium", "validity"):
        raise ValueError(f"unknown breakdown {by!r}")
    counts: Counter[tuple[str, int]] = Counter()
    for rec in records:
        if rec.id not in assignments:
            continue
        cid = int(assignments[rec.id])
        if by == "site":
            cats: Sequence[str] = [rec.site]
        elif by == "medium":
            cats = sorted(rec.mediums) or ["none"]
        else:
            cats = [rec.validity.value]
        for cat in cats:
            counts[(cat, cid)] += 1
    totals: Counter[str] = Counter()
    for (cat, _), n in counts.items():
        totals[cat] += n
    return [
        {"category": cat, "cluster": str(cid + 1), "count": str(n), "proportion": f"{n / totals[cat]:.6f}"}
        for (cat, cid), n in sorted(counts.items())
    ]


def write_csv(rows: Iterable[Mapping[str, str]], columns: Sequence[str], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def timeseries_report(
    records: Iterable[StoryRecord], assignments: Mapping[str, int], out_dir: str | Path, bucket: str = "week"
) -> dict[str, Path]:
    out = Path(out_dir)
    records = list(records)
    rows, skipped = timeseries_rows(records, assignments, bucket)
    paths = {"timeseries": out / "timeseries.csv"}
    write_csv(rows, TIMESERIES_COLUMNS[bucket], paths["timeseries"])
    for by in ("site", "medium", "validity"):
        paths[f"by_{by}"] = out / f"clusters_by_{by}.csv"
        write_csv(breakdown_rows(records, assignments, by), BREAKDOWN_COLUMNS, paths[f"by_{by}"])
    notes = out / "timeseries_notes.txt"
    notes.write_text(f"dateless records excluded: {skipped}\n", encoding="utf-8")
    paths["notes"] = notes
    return paths
