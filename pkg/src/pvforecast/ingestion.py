"""Reading logger and station CSV files, resampling, and series alignment."""

from __future__ import annotations

import bisect
import csv
import enum
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

from pvforecast.core import (
    LOCAL_TZ,
    MEASURED_FIELDS,
    Dataset,
    Flag,
    MeasurementRecord,
    validate_record,
)
from pvforecast.errors import PipelineError

LOGICAL_FIELDS = ("timestamp",) + MEASURED_FIELDS
DEFAULT_COLUMNS = {name: name for name in LOGICAL_FIELDS}


@dataclass(frozen=True)
class CsvSchema:
    """How to find each logical field in a delimited text file.

    ``column_map`` values are header names (requires ``header=True``) or
    zero-based column indices. Fields left out are read as missing.
    ``timestamp_format`` is a ``strptime`` pattern; ``None`` means ISO-8601.
    """

    column_map: dict = field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    delimiter: str = ","
    decimal: str = "."
    header: bool = True
    timestamp_format: str | None = None

    def __post_init__(self):
        unknown = set(self.column_map) - set(LOGICAL_FIELDS)
        if unknown:
            raise PipelineError("INVALID_SCHEMA", f"unknown fields {sorted(unknown)}")
        if "timestamp" not in self.column_map:
            raise PipelineError("INVALID_SCHEMA", "timestamp column is mandatory")
        targets = list(self.column_map.values())
        if len(set(targets)) != len(targets):
            raise PipelineError("INVALID_SCHEMA", "two fields map to the same column")
        if not self.header and any(isinstance(v, str) for v in targets):
            raise PipelineError("INVALID_SCHEMA", "header names need header=True")
        if self.decimal == self.delimiter:
            raise PipelineError("INVALID_SCHEMA", "decimal separator equals delimiter")

    @classmethod
    def from_json(cls, path) -> CsvSchema:
        with open(path) as fh:
            raw = json.load(fh)
        return cls(**raw)


def _parse_timestamp(text: str, fmt: str | None) -> datetime:
    ts = datetime.fromisoformat(text) if fmt is None else datetime.strptime(text, fmt)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=LOCAL_TZ)
    return ts


def _parse_number(text: str, decimal: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    if decimal != ".":
        text = text.replace(decimal, ".")
    value = float(text)
    if value != value:
        return None
    return value


def load_csv(path, schema: CsvSchema | None = None) -> Dataset:
    """Parse a sensor log into a validated, time-sorted :class:`Dataset`.

    An optional ``flags`` column (as written by :func:`write_csv`) seeds
    each record's quality flags so round trips preserve them.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=schema.delimiter))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if schema.header:
        if not rows:
            raise PipelineError("EMPTY_FILE", str(path))
        header = [h.strip() for h in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise PipelineError("EMPTY_FILE", str(path))

    index = {}
    for name, col in schema.column_map.items():
        if isinstance(col, str):
            if col not in header:
                if name == "timestamp":
                    raise PipelineError("PARSE_ERROR", f"line 1: no column {col!r}")
                continue
            col = header.index(col)
        index[name] = col
    flags_col = header.index("flags") if schema.header and "flags" in header else None

    records = []
    for lineno, row in rows:
        values = {}
        for name, col in index.items():
            if col >= len(row):
                raise PipelineError("PARSE_ERROR", f"line {lineno}, column {col}: missing field")
            cell = row[col]
            try:
                if name == "timestamp":
                    values[name] = _parse_timestamp(cell.strip(), schema.timestamp_format)
                else:
                    values[name] = _parse_number(cell, schema.decimal)
            except ValueError as exc:
                raise PipelineError(
                    "PARSE_ERROR", f"line {lineno}, column {col} ({name}): {exc}"
                ) from None
        flags = frozenset()
        if flags_col is not None and flags_col < len(row) and row[flags_col].strip():
            try:
                flags = frozenset(Flag(f) for f in row[flags_col].strip().split("|"))
            except ValueError as exc:
                raise PipelineError("PARSE_ERROR", f"line {lineno}, flags: {exc}") from None
        records.append(validate_record(MeasurementRecord(quality_flags=flags, **values)))
    return Dataset.from_records(records)


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def write_csv(dataset: Dataset, path) -> None:
    """Write the default schema plus derived ``power`` and ``flags`` columns.

    Floats use ``repr`` so a reload reproduces them bit for bit.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(LOGICAL_FIELDS) + ["power", "flags"])
        for r in dataset.records:
            w.writerow(
                [r.timestamp.isoformat()]
                + [_fmt(getattr(r, f)) for f in MEASURED_FIELDS]
                + [_fmt(r.power), "|".join(sorted(f.value for f in r.quality_flags))]
            )


class GapPolicy(str, enum.Enum):
    DROP = "drop"
    HOLD_LAST = "hold"
    LINEAR = "linear"


def _lerp(a, b, w):
    if a is None or b is None:
        return None
    return a + (b - a) * w


def resample_to_grid(
    data: Dataset, period: timedelta, gap_policy: GapPolicy = GapPolicy.DROP
) -> Dataset:
    """Snap records onto a regular grid anchored at the first record.

    A grid point takes the nearest record within ``period / 2``. Empty grid
    points are dropped, or synthesized (flagged GAP_FILLED) by holding the
    previous value or interpolating linearly between neighbouring records.
    """
    if period <= timedelta(0):
        raise PipelineError("INVALID_CONFIG", "period must be positive")
    if len(data) == 0:
        raise PipelineError("EMPTY_INPUT", "no records to resample")
    gap_policy = GapPolicy(gap_policy)
    times = data.timestamps
    t0 = times[0]
    half = period / 2
    n_points = (times[-1] - t0) // period + 1
    # Extend past the final record only when it sits strictly nearer the next point.
    if t0 + n_points * period - times[-1] < half:
        n_points += 1
    out = []
    for k in range(n_points):
        t = t0 + k * period
        j = bisect.bisect_left(times, t)
        near = [i for i in (j - 1, j) if 0 <= i < len(times) and abs(times[i] - t) <= half]
        if near:
            i = min(near, key=lambda i: (abs(times[i] - t), i))
            out.append(_retime(data.records[i], t))
            continue
        if gap_policy is GapPolicy.DROP:
            continue
        if gap_policy is GapPolicy.HOLD_LAST:
            src = out[-1] if out else data.records[0]
            values = {f: getattr(src, f) for f in MEASURED_FIELDS}
        else:
            # j indexes the first record after t; j-1 the last before it.
            before, after = data.records[j - 1], data.records[j]
            w = (t - before.timestamp) / (after.timestamp - before.timestamp)
            values = {f: _lerp(getattr(before, f), getattr(after, f), w) for f in MEASURED_FIELDS}
        out.append(
            validate_record(MeasurementRecord(t, quality_flags={Flag.GAP_FILLED}, **values))
        )
    return Dataset(tuple(out), period)


def _retime(record: MeasurementRecord, t: datetime) -> MeasurementRecord:
    if record.timestamp == t:
        return record
    return MeasurementRecord(
        t,
        **{f: getattr(record, f) for f in MEASURED_FIELDS},
        quality_flags=record.quality_flags,
    )


@dataclass(frozen=True)
class AlignmentReport:
    matched_count: int
    dropped_left: int
    dropped_right: int
    max_time_skew: float  # seconds


def align_series(a: Dataset, b: Dataset, tolerance: timedelta):
    """Greedily pair records of ``a`` and ``b`` by nearest timestamp.

    Candidate pairs within ``tolerance`` are taken in order of increasing
    skew, each record used at most once. Ties are broken on the pair's
    (earlier, later) timestamps so swapping ``a`` and ``b`` yields the same
    matching.
    """
    if len(a) == 0 or len(b) == 0:
        raise PipelineError("EMPTY_INPUT", "both series must be non-empty")
    ta, tb = a.timestamps, b.timestamps
    candidates = []
    for i, t in enumerate(ta):
        lo = bisect.bisect_left(tb, t - tolerance)
        hi = bisect.bisect_right(tb, t + tolerance)
        for j in range(lo, hi):
            skew = abs(tb[j] - t)
            candidates.append((skew, min(t, tb[j]), max(t, tb[j]), i, j))
    candidates.sort(key=lambda c: c[:3])
    used_a, used_b, pairs = set(), set(), []
    max_skew = timedelta(0)
    for skew, _, _, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((a.records[i], b.records[j]))
        max_skew = max(max_skew, skew)
    if not pairs:
        raise PipelineError("NO_OVERLAP", "no timestamps match within tolerance")
    pairs.sort(key=lambda p: p[0].timestamp)
    report = AlignmentReport(
        matched_count=len(pairs),
        dropped_left=len(a) - len(pairs),
        dropped_right=len(b) - len(pairs),
        max_time_skew=max_skew.total_seconds(),
    )
    return pairs, report
