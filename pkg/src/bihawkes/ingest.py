"""Incident CSV ingestion, outcome classification and period splitting.

Input schema: ``source_id,date,outcome`` (header required, UTF-8, ISO-8601
dates). Canonical event export: ``t_days,mark,source_id,date``. Outcome
mapping: ``label,class`` with class ``die_at_scene`` or ``live``.

Time origin is the first incident date. Dates have day resolution; the
2nd, 3rd and 4th incident on the same day get +0.25, +0.5, +0.75 day
offsets in input order (``r / m`` for the r-th of m > 4 same-day incidents).
"""
from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from bihawkes.core import EventSequence

log = logging.getLogger(__name__)

DEFAULT_CUTOFF = dt.date(2000, 1, 1)
# full observation window of the 1966-08 .. 2024-09 incident record
FULL_PERIOD_HORIZON_DAYS = 21_219


class OutcomeClass(str, enum.Enum):
    DIE_AT_SCENE = "die_at_scene"
    LIVE = "live"

    @property
    def mark(self) -> int:
        return 1 if self is OutcomeClass.DIE_AT_SCENE else 2


class IngestError(ValueError):
    pass


def normalize_label(label: str) -> str:
    return " ".join(label.strip().lower().split())


def load_mapping(path=None) -> dict[str, OutcomeClass]:
    """Read a ``label,class`` mapping; ``None`` loads the bundled one."""
    if path is None:
        text = resources.files("bihawkes").joinpath("data/outcome_mapping.csv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    mapping = {}
    for row in csv.DictReader(io.StringIO(text)):
        try:
            mapping[normalize_label(row["label"])] = OutcomeClass(row["class"].strip())
        except (KeyError, ValueError) as exc:
            raise IngestError(f"bad mapping row {row}: {exc}") from None
    return mapping


_DEFAULT_MAPPING: dict[str, OutcomeClass] | None = None


def _default_mapping() -> dict[str, OutcomeClass]:
    global _DEFAULT_MAPPING
    if _DEFAULT_MAPPING is None:
        _DEFAULT_MAPPING = load_mapping()
    return _DEFAULT_MAPPING


def classify_outcome(outcome_raw: str, mapping: dict[str, OutcomeClass] | None = None) -> OutcomeClass:
    """Map a free-text outcome to its class.

    Death at the scene (suicide on site, killed by police or others during
    the attack) is ``DIE_AT_SCENE``; every other fate is ``LIVE``. Labels
    absent from the mapping raise rather than defaulting.
    """
    key = normalize_label(outcome_raw or "")
    if not key:
        raise IngestError("empty outcome label")
    table = _default_mapping() if mapping is None else mapping
    try:
        return table[key]
    except KeyError:
        raise IngestError(f"unmapped outcome label: {outcome_raw!r}") from None


@dataclass(frozen=True)
class IncidentRecord:
    date: dt.date
    outcome_raw: str
    outcome_class: OutcomeClass
    source_id: str


@dataclass
class IngestLog:
    records: list[IncidentRecord] = field(default_factory=list)
    rejected: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def warn(self, msg: str) -> None:
        log.warning(msg)
        self.warnings.append(msg)

    @property
    def counts(self) -> dict[str, int]:
        out = {c.value: 0 for c in OutcomeClass}
        for r in self.records:
            out[r.outcome_class.value] += 1
        return out


def _tie_offsets(dates: list[dt.date]) -> list[float]:
    """Within-day offsets for a date-sorted list (stable input order)."""
    offsets = []
    i = 0
    while i < len(dates):
        j = i
        while j < len(dates) and dates[j] == dates[i]:
            j += 1
        m = j - i
        step = 0.25 if m <= 4 else 1.0 / m
        offsets.extend(r * step for r in range(m))
        i = j
    return offsets


def sequence_from_records(
    records: list[IncidentRecord], horizon: float | None = None
) -> EventSequence:
    """Events sorted by date, ``t = 0`` at the first date, same-day ties offset."""
    records = sorted(records, key=lambda r: r.date)
    if not records:
        return EventSequence([], [], 0.0 if horizon is None else horizon, 2, None, ())
    origin = records[0].date
    dates = [r.date for r in records]
    offs = _tie_offsets(dates)
    times = np.array([(d - origin).days + o for d, o in zip(dates, offs)])
    marks = np.array([r.outcome_class.mark for r in records])
    last = float(times[-1])
    if horizon is None:
        horizon = last
    elif horizon < last:
        raise IngestError(f"horizon {horizon} is before the last event at t={last}")
    return EventSequence(times, marks, horizon, 2, origin, tuple(r.source_id for r in records))


def _data_lines(fh):
    for line in fh:
        if not line.lstrip().startswith("#"):
            yield line


def load_incidents(
    path,
    *,
    date_column: str = "date",
    outcome_column: str = "outcome",
    id_column: str = "source_id",
    mapping: dict[str, OutcomeClass] | None = None,
    horizon: float | None = None,
    end_date: dt.date | None = None,
) -> tuple[EventSequence, IngestLog]:
    """Read an incident CSV into an :class:`EventSequence`.

    Rows with unparseable dates or unmapped outcome labels are rejected and
    logged (with their line number) rather than aborting the load. The
    horizon defaults to the last event day; ``horizon`` (days) or
    ``end_date`` extend it to a longer observation window.
    """
    ilog = IngestLog()
    table = _default_mapping() if mapping is None else mapping
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(_data_lines(fh))
        if reader.fieldnames is None:
            ilog.warn(f"{path}: empty file; returning an empty sequence")
            return EventSequence([], [], 0.0, 2, None, ()), ilog
        missing = {date_column, outcome_column} - set(reader.fieldnames)
        if missing:
            raise IngestError(f"{path}: missing required columns {sorted(missing)}")
        seen: set[str] = set()
        for row_no, row in enumerate(reader, start=2):
            sid = (row.get(id_column) or f"row{row_no}").strip()
            raw_date = (row.get(date_column) or "").strip()
            try:
                date = dt.date.fromisoformat(raw_date)
            except ValueError:
                ilog.rejected.append((row_no, f"unparseable date {raw_date!r}"))
                log.warning("row %d rejected: unparseable date %r", row_no, raw_date)
                continue
            raw_outcome = row.get(outcome_column) or ""
            try:
                cls = classify_outcome(raw_outcome, table)
            except IngestError as exc:
                ilog.rejected.append((row_no, str(exc)))
                log.warning("row %d rejected: %s", row_no, exc)
                continue
            if sid in seen:
                ilog.warn(f"row {row_no}: duplicate source_id {sid!r}")
            seen.add(sid)
            ilog.records.append(IncidentRecord(date, raw_outcome.strip(), cls, sid))

    if not ilog.records:
        ilog.warn(f"{path}: no incidents loaded; returning an empty sequence")
        return EventSequence([], [], 0.0, 2, None, ()), ilog
    ilog.records.sort(key=lambda r: r.date)
    if end_date is not None:
        horizon = float((end_date - ilog.records[0].date).days)
    seq = sequence_from_records(ilog.records, horizon)
    log.info("loaded %d incidents %s from %s", len(seq), ilog.counts, path)
    return seq, ilog


def _subset(seq: EventSequence, mask: np.ndarray, horizon_end: float | None) -> EventSequence:
    times = seq.times[mask]
    ids = tuple(np.array(seq.source_ids, dtype=object)[mask]) if seq.source_ids else None
    if times.size == 0:
        return EventSequence([], [], 0.0, seq.k, None, () if ids is not None else None)
    shift = math.floor(times[0])
    origin = seq.origin_date + dt.timedelta(days=shift)
    new_times = times - shift
    horizon = float(new_times[-1]) if horizon_end is None else max(horizon_end - shift, float(new_times[-1]))
    return EventSequence(new_times, seq.marks[mask], horizon, seq.k, origin, ids)


def split_period(
    seq: EventSequence, cutoff: dt.date = DEFAULT_CUTOFF, pre_horizon: str = "last_event"
) -> tuple[EventSequence, EventSequence]:
    """Split at ``cutoff``: ``date < cutoff`` is pre, the rest (cutoff year included) is post.

    Each subset is re-anchored so its first event day is ``t = 0``; shifts
    are whole days so within-subset gaps are unchanged. The post subset
    keeps the original horizon end; the pre subset ends at its last event,
    or at the cutoff with ``pre_horizon="cutoff"``.
    """
    if seq.origin_date is None:
        raise ValueError("split_period needs a sequence with origin_date")
    if pre_horizon not in ("last_event", "cutoff"):
        raise ValueError(f"unknown pre_horizon {pre_horizon!r}")
    cut_t = float((cutoff - seq.origin_date).days)
    pre_mask = seq.times < cut_t
    pre = _subset(seq, pre_mask, cut_t if pre_horizon == "cutoff" else None)
    post = _subset(seq, ~pre_mask, seq.horizon)
    if len(pre) == 0 or len(post) == 0:
        log.warning("cutoff %s lies outside the data range: one subset is empty", cutoff)
    log.info(
        "split at %s: pre %d %s, post %d %s",
        cutoff, len(pre), pre.counts.tolist(), len(post), post.counts.tolist(),
    )
    return pre, post


def select_period(seq: EventSequence, period: str, cutoff: dt.date = DEFAULT_CUTOFF) -> EventSequence:
    if period == "all":
        return seq
    pre, post = split_period(seq, cutoff)
    if period == "pre2000":
        return pre
    if period == "post2000":
        return post
    raise ValueError(f"unknown period {period!r} (expected all, pre2000 or post2000)")


def write_events_csv(path, seq: EventSequence, header_comment: str | None = None) -> None:
    """Canonical export ``t_days,mark,source_id,date``."""
    dates = seq.event_dates() if seq.origin_date is not None else [None] * len(seq)
    ids = seq.source_ids or [""] * len(seq)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_days", "mark", "source_id", "date"])
        for t, m, sid, d in zip(seq.times, seq.marks, ids, dates):
            w.writerow([repr(float(t)), int(m), sid, d.isoformat() if d else ""])


def read_events_csv(path, horizon: float | None = None, k: int = 2) -> EventSequence:
    """Read the canonical export back; the horizon defaults to the last event time."""
    times, marks, ids, origin = [], [], [], None
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(_data_lines(fh)):
            t = float(row["t_days"])
            times.append(t)
            marks.append(int(row["mark"]))
            ids.append(row.get("source_id") or "")
            if origin is None and row.get("date"):
                origin = dt.date.fromisoformat(row["date"]) - dt.timedelta(days=math.floor(t))
    last = times[-1] if times else 0.0
    if horizon is None:
        horizon = last
    kk = max([k] + marks)
    return EventSequence(times, marks, horizon, kk, origin, tuple(ids))


def load_events(path, horizon: float | None = None, **kwargs) -> tuple[EventSequence, IngestLog | None]:
    """Load either schema, dispatching on the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(_data_lines(fh)), [])
    if "t_days" in header:
        return read_events_csv(path, horizon), None
    return load_incidents(path, horizon=horizon, **kwargs)
