"""Min-max scaling, RMSE, Pearson correlation and the F-distribution tail."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pvforecast.core import DataMatrix
from pvforecast.errors import PipelineError


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    """Per-column extremes; maps each column's min to 0 and max to 1.

    Columns may name features or the matrix target, so one scaler can
    carry the whole normalization of a :class:`DataMatrix`.
    """

    columns: tuple
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.array(self.mins, dtype=float).reshape(-1)
        maxs = np.array(self.maxs, dtype=float).reshape(-1)
        if not (len(self.columns) == mins.size == maxs.size):
            raise PipelineError("SHAPE_MISMATCH", "columns, mins and maxs differ in length")
        if np.any(maxs < mins):
            raise PipelineError("INVALID_CONFIG", "max below min")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    def _index(self, name):
        try:
            return self.columns.index(name)
        except ValueError:
            raise PipelineError("SHAPE_MISMATCH", f"scaler has no column {name!r}") from None

    def scale_column(self, name: str, values) -> np.ndarray:
        i = self._index(name)
        return (np.asarray(values, dtype=float) - self.mins[i]) / (self.maxs[i] - self.mins[i])

    def unscale_column(self, name: str, values) -> np.ndarray:
        i = self._index(name)
        u = np.asarray(values, dtype=float)
        # Weighted form so that 0 and 1 return the stored extremes exactly.
        return (1.0 - u) * self.mins[i] + u * self.maxs[i]

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "mins": [float(v) for v in self.mins],
            "maxs": [float(v) for v in self.maxs],
        }

    @classmethod
    def from_dict(cls, d) -> MinMaxScaler:
        return cls(tuple(d["columns"]), d["mins"], d["maxs"])


def fit_scaler(data: DataMatrix, columns=None) -> MinMaxScaler:
    """Record the extremes of ``columns`` (default: features then target)."""
    if columns is None:
        columns = data.column_names + (data.target_name,)
    columns = tuple(columns)
    if len(data) < 2:
        raise PipelineError("INSUFFICIENT_DATA", "need at least 2 rows to fit a scaler")
    mins, maxs = [], []
    for name in columns:
        col = data.column(name)
        lo, hi = float(col.min()), float(col.max())
        if hi == lo:
            raise PipelineError("CONSTANT_COLUMN", name)
        mins.append(lo)
        maxs.append(hi)
    return MinMaxScaler(columns, mins, maxs)


def _check_covers(scaler: MinMaxScaler, data: DataMatrix):
    missing = [c for c in data.column_names if c not in scaler.columns]
    if missing:
        raise PipelineError("SHAPE_MISMATCH", f"scaler lacks columns {missing}")


def transform(scaler: MinMaxScaler, data: DataMatrix) -> DataMatrix:
    """Apply ``(x - min) / (max - min)`` column-wise; no clamping.

    The target is scaled too when the scaler carries it.
    """
    _check_covers(scaler, data)
    x = np.column_stack(
        [scaler.scale_column(c, data.features[:, k]) for k, c in enumerate(data.column_names)]
    ) if data.n_features else data.features
    y = data.target
    if data.target_name in scaler.columns:
        y = scaler.scale_column(data.target_name, y)
    return data.with_values(x, y)


def inverse_transform(scaler: MinMaxScaler, data: DataMatrix) -> DataMatrix:
    _check_covers(scaler, data)
    x = np.column_stack(
        [scaler.unscale_column(c, data.features[:, k]) for k, c in enumerate(data.column_names)]
    ) if data.n_features else data.features
    y = data.target
    if data.target_name in scaler.columns:
        y = scaler.unscale_column(data.target_name, y)
    return data.with_values(x, y)


def _pair(a, b):
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise PipelineError("LENGTH_MISMATCH", f"{a.size} vs {b.size}")
    return a, b


def rmse(estimated, actual) -> float:
    """Root-mean-square error ``sqrt(sum((est - act)**2) / N)``."""
    est, act = _pair(estimated, actual)
    if est.size == 0:
        raise PipelineError("EMPTY", "rmse of empty vectors")
    d = est - act
    return math.sqrt(float(np.dot(d, d)) / d.size)


def r_squared(sse: float, sst: float) -> float:
    return 1.0 - sse / sst


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    x, y = _pair(x, y)
    if x.size < 2:
        raise PipelineError("LENGTH_MISMATCH", "pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise PipelineError("CONSTANT_SERIES", "zero variance")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    columns: tuple
    values: np.ndarray

    def __getitem__(self, key):
        a, b = key
        return float(self.values[self.columns.index(a), self.columns.index(b)])

    def to_csv(self) -> str:
        lines = [",".join(("",) + self.columns)]
        for name, row in zip(self.columns, self.values):
            lines.append(",".join([name] + [repr(float(v)) for v in row]))
        return "\n".join(lines) + "\n"


def correlation_matrix(data: DataMatrix, columns=None) -> CorrelationMatrix:
    """Pairwise Pearson r over ``columns`` (features and/or the target)."""
    if columns is None:
        columns = data.column_names + (data.target_name,)
    columns = tuple(columns)
    cols = [data.column(c) for c in columns]
    for name, col in zip(columns, cols):
        if np.all(col == col[0]):
            raise PipelineError("CONSTANT_SERIES", name)
    k = len(columns)
    m = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            m[i, j] = m[j, i] = pearson(cols[i], cols[j])
    return CorrelationMatrix(columns, m)


# Regularized incomplete beta by Lentz's continued fraction.

_FPMIN = 1e-300
_EPS = 1e-16


def _betacf(a, b, x):
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _FPMIN if abs(d) < _FPMIN else d
        c = 1.0 + aa / c
        c = _FPMIN if abs(c) < _FPMIN else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _FPMIN if abs(d) < _FPMIN else d
        c = 1.0 + aa / c
        c = _FPMIN if abs(c) < _FPMIN else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)`` for ``a, b > 0``."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # The fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_tail_probability(f: float, df1: int, df2: int) -> float:
    """Upper-tail probability ``P(F > f)`` for ``F ~ F(df1, df2)``."""
    if int(df1) != df1 or int(df2) != df2 or df1 < 1 or df2 < 1:
        raise PipelineError("INVALID_DF", f"df1={df1}, df2={df2}")
    if not f > 0:
        if f == 0:
            return 1.0
        raise PipelineError("INVALID_DF", f"F statistic must be >= 0, got {f}")
    if math.isinf(f):
        return 0.0
    x = df2 / (df2 + df1 * f)
    return min(1.0, max(0.0, betainc(df2 / 2.0, df1 / 2.0, x)))
