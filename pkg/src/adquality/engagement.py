"""Engagement metrics from impression/click logs and percentile quality labels."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

LOG_COLUMNS = ("ad_id", "user_id", "event", "dwell_seconds", "timestamp")
STATS_COLUMNS = ("ad_id", "impressions", "long_clicks", "unique_users",
                 "unique_long_click_users", "lcr", "rlcr")
LABEL_COLUMNS = ("ad_id", "label", "metric", "metric_value")
EVENTS = ("impression", "click")
METRICS = ("LCR", "R-LCR")
DWELL_THRESHOLD = 5.0
MIN_IMPRESSIONS = 500
MIN_LONG = 2


class LogParseError(ValueError):
    def __init__(self, line: int, column: str, message: str):
        super().__init__(f"line {line}, column {column!r}: {message}")
        self.line = line
        self.column = column


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class EngagementRecord:
    ad_id: str
    user_id: str
    event: str
    dwell_seconds: float = 0.0
    timestamp: float = 0.0

    def __post_init__(self):
        if self.event not in EVENTS:
            raise ValueError(f"unknown event {self.event!r}")
        if not self.dwell_seconds >= 0:
            raise ValueError(f"dwell_seconds must be >= 0, got {self.dwell_seconds}")


@dataclass
class AdStats:
    ad_id: str
    impressions: int
    long_clicks: int
    unique_users_exposed: int
    unique_long_click_users: int
    lcr: float
    rlcr: float

    def metric(self, name: str) -> float:
        if name == "LCR":
            return self.lcr
        if name == "R-LCR":
            return self.rlcr
        raise ValueError(f"unknown metric {name!r}")


@dataclass
class QualityLabel:
    ad_id: str
    label: int
    metric_used: str
    metric_value: float


@dataclass
class StatsReport:
    """``compute_stats`` output plus its consistency findings."""

    stats: list[AdStats]
    omitted_ads: list[str] = field(default_factory=list)
    # (ad_id, user_id) pairs with a long click but no impression of that ad
    orphan_long_clicks: list[tuple[str, str]] = field(default_factory=list)


def _parse_float(value: str, line: int, column: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise LogParseError(line, column, f"not a number: {value!r}") from None
    if not math.isfinite(out):
        raise LogParseError(line, column, f"not finite: {value!r}")
    return out


def parse_event_log(path) -> list[EngagementRecord]:
    """Read an event-log CSV. Line numbers in errors count the header as line 1."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise LogParseError(1, "", "missing header")
        header = [h.strip() for h in header]
        missing = [c for c in LOG_COLUMNS if c not in header]
        if missing:
            raise LogParseError(1, missing[0], "missing column")
        pos = {c: header.index(c) for c in LOG_COLUMNS}
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) < len(header):
                raise LogParseError(line, header[len(row)], "missing value")
            event = row[pos["event"]].strip()
            if event not in EVENTS:
                raise LogParseError(line, "event", f"unknown event {event!r}")
            dwell = _parse_float(row[pos["dwell_seconds"]], line, "dwell_seconds")
            if dwell < 0:
                raise LogParseError(line, "dwell_seconds", f"negative dwell {dwell}")
            ts = _parse_float(row[pos["timestamp"]], line, "timestamp")
            records.append(EngagementRecord(row[pos["ad_id"]], row[pos["user_id"]], event,
                                            dwell if event == "click" else 0.0, ts))
    return records


def compute_stats(records: Iterable[EngagementRecord],
                  dwell_threshold: float = DWELL_THRESHOLD) -> StatsReport:
    """Per-ad LCR and R-LCR. A click is long when its dwell strictly exceeds the threshold."""
    if not dwell_threshold > 0:
        raise ValueError("dwell_threshold must be positive")
    imps: dict[str, int] = {}
    longs: dict[str, int] = {}
    exposed: dict[str, set] = {}
    clicked: dict[str, set] = {}
    for r in records:
        if r.event == "impression":
            imps[r.ad_id] = imps.get(r.ad_id, 0) + 1
            exposed.setdefault(r.ad_id, set()).add(r.user_id)
        elif r.dwell_seconds > dwell_threshold:
            longs[r.ad_id] = longs.get(r.ad_id, 0) + 1
            clicked.setdefault(r.ad_id, set()).add(r.user_id)

    stats, orphans = [], []
    for ad in sorted(imps):
        users = exposed[ad]
        lc_users = clicked.get(ad, set())
        orphans.extend((ad, u) for u in sorted(lc_users - users))
        n_lc = longs.get(ad, 0)
        stats.append(AdStats(ad, imps[ad], n_lc, len(users), len(lc_users),
                             n_lc / imps[ad], len(lc_users) / len(users)))
    omitted = sorted(set(longs) - set(imps))
    for ad in omitted:
        orphans.extend((ad, u) for u in sorted(clicked[ad]))
    return StatsReport(stats, omitted, sorted(orphans))


def filter_ads(stats: Sequence[AdStats], metric: str = "LCR",
               min_impressions: int = MIN_IMPRESSIONS, min_long: int = MIN_LONG) -> list[AdStats]:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    count = (lambda s: s.long_clicks) if metric == "LCR" else (lambda s: s.unique_long_click_users)
    return [s for s in stats if s.impressions >= min_impressions and count(s) >= min_long]


def percentile_label(stats: Sequence[AdStats], metric: str = "LCR",
                     top_pct: float = 30.0, bottom_pct: float = 30.0) -> list[QualityLabel]:
    """Label the top ``top_pct`` percent good (1) and the bottom ``bottom_pct`` bad (0).

    Ads are ranked by metric descending with ad_id ascending as tie-break;
    output is in that rank order with the good ads first.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if top_pct < 0 or bottom_pct < 0 or top_pct + bottom_pct > 100:
        raise ValueError("need top_pct, bottom_pct >= 0 and top_pct + bottom_pct <= 100")
    ranked = sorted(stats, key=lambda s: (-s.metric(metric), s.ad_id))
    n = len(ranked)
    # absorb float error in n * pct / 100 before taking the ceiling
    n_good = math.ceil(n * top_pct / 100 - 1e-9)
    n_bad = math.ceil(n * bottom_pct / 100 - 1e-9)
    if n_good + n_bad > n:
        raise LabelError(f"good ({n_good}) and bad ({n_bad}) sets overlap for n={n}")
    good = [QualityLabel(s.ad_id, 1, metric, s.metric(metric)) for s in ranked[:n_good]]
    bad = [QualityLabel(s.ad_id, 0, metric, s.metric(metric)) for s in ranked[n - n_bad:]]
    return good + bad


def write_stats(stats: Sequence[AdStats], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_COLUMNS)
        for s in stats:
            w.writerow([s.ad_id, s.impressions, s.long_clicks, s.unique_users_exposed,
                        s.unique_long_click_users, repr(s.lcr), repr(s.rlcr)])


def write_labels(labels: Sequence[QualityLabel], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_COLUMNS)
        for q in labels:
            w.writerow([q.ad_id, q.label, q.metric_used, repr(q.metric_value)])


def read_labels(path) -> dict[str, int]:
    """ad_id -> label from a label CSV (only ``ad_id`` and ``label`` are required)."""
    out = {}
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"ad_id", "label"} <= set(reader.fieldnames):
            raise LogParseError(1, "label", "label file needs ad_id and label columns")
        for row in reader:
            try:
                lab = int(row["label"])
            except ValueError:
                raise LogParseError(reader.line_num, "label", f"bad label {row['label']!r}") from None
            if lab not in (0, 1):
                raise LogParseError(reader.line_num, "label", f"label must be 0 or 1, got {lab}")
            out[row["ad_id"]] = lab
    return out


def write_event_log(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        w.writerows(rows)
