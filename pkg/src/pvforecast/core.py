"""Domain types shared by the whole pipeline.

Records are immutable; validation only ever adds quality flags.
"""

from __future__ import annotations

import enum
import statistics
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone

import numpy as np

from pvforecast.errors import PipelineError

# Naive timestamps are read as local standard time, UTC-6.
LOCAL_TZ = timezone(timedelta(hours=-6))

VARIABLES = ("illuminance", "temperature", "humidity")
MEASURED_FIELDS = ("illuminance", "temperature", "humidity", "voltage", "current")
TARGET = "power"

# Light sensor ceiling of 128 klux, scaled by 1.55 for the attenuating cover glass.
ILLUMINANCE_MAX = 128_000.0 * 1.55
TEMPERATURE_RANGE = (-40.0, 85.0)
HUMIDITY_RANGE = (0.0, 100.0)
HUMIDITY_SATURATION = 99.9

ALIASES = {
    "lux": "illuminance",
    "illuminance": "illuminance",
    "lighting": "illuminance",
    "temp": "temperature",
    "temperature": "temperature",
    "hum": "humidity",
    "humidity": "humidity",
    "power": "power",
}


def canonical_variable(name: str) -> str:
    try:
        return ALIASES[name.strip().lower()]
    except KeyError:
        raise PipelineError("UNKNOWN_VARIABLE", repr(name)) from None


def parse_variables(text: str) -> tuple[str, ...]:
    """Parse ``"lux,temp,hum"`` into canonical variable names."""
    names = tuple(canonical_variable(v) for v in text.split(",") if v.strip())
    if not names or len(set(names)) != len(names):
        raise PipelineError("UNKNOWN_VARIABLE", f"bad variable list {text!r}")
    return names


class Flag(str, enum.Enum):
    OK = "OK"
    HUMIDITY_SATURATED = "HUMIDITY_SATURATED"
    OUT_OF_RANGE = "OUT_OF_RANGE"
    GAP_FILLED = "GAP_FILLED"
    MISSING = "MISSING"


# GAP_FILLED is informational and does not disqualify a record from being OK.
PROBLEM_FLAGS = frozenset({Flag.HUMIDITY_SATURATED, Flag.OUT_OF_RANGE, Flag.MISSING})


@dataclass(frozen=True)
class MeasurementRecord:
    """One timestamped sample from the logger or the weather station.

    ``power`` is derived from voltage and current and is ``None`` when
    either is missing (station files carry no electrical channels).
    """

    timestamp: datetime
    illuminance: float | None = None
    temperature: float | None = None
    humidity: float | None = None
    voltage: float | None = None
    current: float | None = None
    quality_flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.timestamp.tzinfo is None:
            object.__setattr__(self, "timestamp", self.timestamp.replace(tzinfo=LOCAL_TZ))
        object.__setattr__(self, "quality_flags", frozenset(Flag(f) for f in self.quality_flags))

    @property
    def power(self) -> float | None:
        if self.voltage is None or self.current is None:
            return None
        return self.voltage * self.current

    @property
    def ok(self) -> bool:
        return Flag.OK in self.quality_flags

    def value(self, name: str) -> float | None:
        return self.power if name == TARGET else getattr(self, name)


def _missing(v) -> bool:
    return v is None or (isinstance(v, float) and np.isnan(v))


def validate_record(record: MeasurementRecord) -> MeasurementRecord:
    """Return ``record`` with quality flags set from the sensor ranges.

    Values are never clamped or altered. Flags already present are kept.
    """
    flags = set(record.quality_flags)
    if any(_missing(getattr(record, f)) for f in MEASURED_FIELDS):
        flags.add(Flag.MISSING)

    def outside(v, lo, hi):
        return not _missing(v) and not (lo <= v <= hi)

    if (
        outside(record.illuminance, 0.0, ILLUMINANCE_MAX)
        or outside(record.temperature, *TEMPERATURE_RANGE)
        or outside(record.humidity, *HUMIDITY_RANGE)
        or outside(record.voltage, 0.0, np.inf)
        or outside(record.current, 0.0, np.inf)
    ):
        flags.add(Flag.OUT_OF_RANGE)
    if not _missing(record.humidity) and record.humidity >= HUMIDITY_SATURATION:
        flags.add(Flag.HUMIDITY_SATURATED)
    if not flags & PROBLEM_FLAGS:
        flags.add(Flag.OK)
    return replace(record, quality_flags=frozenset(flags))


@dataclass(frozen=True)
class ColumnStats:
    min: float
    max: float
    mean: float
    count: int


def compute_column_stats(records) -> dict[str, ColumnStats]:
    stats = {}
    for name in MEASURED_FIELDS + (TARGET,):
        vals = [r.value(name) for r in records if r.ok and not _missing(r.value(name))]
        if vals:
            stats[name] = ColumnStats(min(vals), max(vals), float(np.mean(vals)), len(vals))
        else:
            stats[name] = ColumnStats(float("nan"), float("nan"), float("nan"), 0)
    return stats


@dataclass(frozen=True)
class Dataset:
    """Time-ordered records with a nominal sampling period.

    Construct through :meth:`from_records` to sort and infer the period.
    """

    records: tuple
    sampling_period: timedelta = timedelta(minutes=5)
    column_stats: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for prev, cur in zip(self.records, self.records[1:]):
            if cur.timestamp == prev.timestamp:
                raise PipelineError("DUPLICATE_TIMESTAMP", cur.timestamp.isoformat())
            if cur.timestamp < prev.timestamp:
                raise PipelineError("INVALID_CONFIG", "records are not time-ordered")
        object.__setattr__(self, "column_stats", compute_column_stats(self.records))

    @classmethod
    def from_records(cls, records, sampling_period: timedelta | None = None) -> Dataset:
        records = sorted(records, key=lambda r: r.timestamp)
        if sampling_period is None:
            gaps = [b.timestamp - a.timestamp for a, b in zip(records, records[1:])]
            sampling_period = statistics.median(gaps) if gaps else timedelta(minutes=5)
        return cls(tuple(records), sampling_period)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def timestamps(self) -> list[datetime]:
        return [r.timestamp for r in self.records]

    def column(self, name: str) -> np.ndarray:
        """Values of one field as floats, ``nan`` where missing."""
        return np.array(
            [np.nan if _missing(v := r.value(name)) else v for r in self.records], dtype=float
        )

    def matrix(self, variables, *, exclude_saturated: bool = False) -> DataMatrix:
        """Feature/target view over the records usable for modelling.

        Records flagged MISSING or OUT_OF_RANGE are skipped, as are
        saturated-humidity records when ``exclude_saturated`` is set.
        """
        variables = tuple(canonical_variable(v) for v in variables)
        skip = {Flag.MISSING, Flag.OUT_OF_RANGE}
        if exclude_saturated:
            skip.add(Flag.HUMIDITY_SATURATED)
        rows = [r for r in self.records if not (r.quality_flags & skip) and r.power is not None]
        features = np.array([[r.value(v) for v in variables] for r in rows], dtype=float)
        return DataMatrix(
            features.reshape(len(rows), len(variables)),
            np.array([r.power for r in rows], dtype=float),
            variables,
            timestamps=tuple(r.timestamp for r in rows),
        )


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """Dense features plus a power target, rows aligned."""

    features: np.ndarray
    target: np.ndarray
    column_names: tuple
    target_name: str = TARGET
    timestamps: tuple | None = None

    def __post_init__(self):
        x = np.array(self.features, dtype=float)
        y = np.array(self.target, dtype=float).reshape(-1)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        names = tuple(self.column_names)
        if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[1] != len(names):
            raise PipelineError(
                "SHAPE_MISMATCH", f"features {x.shape}, target {y.shape}, {len(names)} names"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise PipelineError("NON_FINITE", "NaN or infinite entry in data matrix")
        if self.timestamps is not None and len(self.timestamps) != len(y):
            raise PipelineError("SHAPE_MISMATCH", "timestamps length differs from rows")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "column_names", names)

    def __len__(self):
        return self.target.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def column(self, name: str) -> np.ndarray:
        if name == self.target_name:
            return self.target
        try:
            return self.features[:, self.column_names.index(name)]
        except ValueError:
            raise PipelineError("UNKNOWN_VARIABLE", repr(name)) from None

    def take(self, indices) -> DataMatrix:
        indices = np.asarray(indices, dtype=int)
        ts = None if self.timestamps is None else tuple(self.timestamps[i] for i in indices)
        return DataMatrix(
            self.features[indices], self.target[indices], self.column_names, self.target_name, ts
        )

    def select(self, columns) -> DataMatrix:
        idx = [self.column_names.index(c) for c in columns]
        return DataMatrix(
            self.features[:, idx], self.target, tuple(columns), self.target_name, self.timestamps
        )

    def with_values(self, features, target) -> DataMatrix:
        return DataMatrix(features, target, self.column_names, self.target_name, self.timestamps)


@dataclass(frozen=True)
class SplitSpec:
    train_count: int = 700
    validation_count: int = 200
    test_count: int = 100
    seed: int = 42

    def __post_init__(self):
        if self.train_count < 1 or self.test_count < 1 or self.validation_count < 0:
            raise PipelineError(
                "INVALID_SPLIT",
                "need train_count >= 1, test_count >= 1 and validation_count >= 0",
            )
        if not 0 <= self.seed < 2**64:
            raise PipelineError("INVALID_SPLIT", "seed must fit in 64 unsigned bits")

    @property
    def total(self) -> int:
        return self.train_count + self.validation_count + self.test_count

    @classmethod
    def parse(cls, text: str, seed: int = 42) -> SplitSpec:
        """Parse ``"700:200:100"``."""
        try:
            a, b, c = (int(p) for p in text.split(":"))
        except ValueError:
            raise PipelineError("INVALID_SPLIT", f"expected train:val:test, got {text!r}") from None
        return cls(a, b, c, seed)


def split_dataset(data: DataMatrix, spec: SplitSpec):
    """Shuffle rows with ``spec.seed`` and cut train/validation/test in order."""
    if spec.total > len(data):
        raise PipelineError(
            "COUNT_EXCEEDS_DATA", f"split needs {spec.total} rows, data has {len(data)}"
        )
    perm = np.random.default_rng(spec.seed).permutation(len(data))
    a = spec.train_count
    b = a + spec.validation_count
    return data.take(perm[:a]), data.take(perm[a:b]), data.take(perm[b : spec.total])
