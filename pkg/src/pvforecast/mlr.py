"""Multiple linear regression baseline and its adjusted-SS ANOVA table."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pvforecast.core import DataMatrix
from pvforecast.errors import PipelineError
from pvforecast.stats import f_tail_probability

# Relative threshold on |R_kk| / max|R_kk| below which a column is dependent.
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MlrModel:
    coefficients: np.ndarray
    intercept: float
    column_names: tuple
    fitted: bool = True


def _solve_ols(x: np.ndarray, y: np.ndarray):
    """Least squares with intercept via QR of the centred, scaled design."""
    n, p = x.shape
    if n <= p + 1:
        raise PipelineError("UNDERDETERMINED", f"{n} rows for {p} predictors")
    x_mean = x.mean(axis=0)
    y_mean = y.mean()
    xc = x - x_mean
    scale = np.sqrt((xc**2).sum(axis=0))
    if p and np.any(scale == 0):
        raise PipelineError("RANK_DEFICIENT", "constant predictor column")
    if p == 0:
        return np.zeros(0), float(y_mean)
    xs = xc / scale
    q, r = np.linalg.qr(xs)
    diag = np.abs(np.diag(r))
    if diag.min() <= RANK_TOL * diag.max():
        raise PipelineError("RANK_DEFICIENT", "collinear predictor columns")
    beta_s = np.linalg.solve(r, q.T @ (y - y_mean))
    beta = beta_s / scale
    return beta, float(y_mean - x_mean @ beta)


def fit_mlr(train: DataMatrix) -> MlrModel:
    """Ordinary least squares fit of power on every feature column."""
    beta, b0 = _solve_ols(train.features, train.target)
    return MlrModel(beta, b0, train.column_names)


def predict_mlr(model: MlrModel, data: DataMatrix) -> np.ndarray:
    if model is None or not model.fitted:
        raise PipelineError("NOT_FITTED", "MLR model has not been fitted")
    if data.column_names != model.column_names:
        raise PipelineError(
            "SHAPE_MISMATCH", f"model columns {model.column_names}, data {data.column_names}"
        )
    return data.features @ model.coefficients + model.intercept


def _sse(x, y):
    beta, b0 = _solve_ols(x, y)
    resid = y - (x @ beta + b0)
    return float(resid @ resid)


@dataclass(frozen=True)
class AnovaRow:
    source: str
    df: int
    adj_ss: float
    adj_ms: float | None
    f_value: float | None = None
    p_value: float | None = None


@dataclass(frozen=True)
class AnovaTable:
    rows: tuple
    r_squared: float

    def row(self, source: str) -> AnovaRow:
        for r in self.rows:
            if r.source == source:
                return r
        raise KeyError(source)

    def to_text(self) -> str:
        """Aligned table in the Source/DF/Adj SS/Adj MS/F/P layout."""
        head = ("Source", "DF", "Adj SS", "Adj MS", "F-Value", "P-Value")
        body = []
        for r in self.rows:
            body.append((
                r.source,
                str(r.df),
                f"{r.adj_ss:.2f}",
                "" if r.adj_ms is None else f"{r.adj_ms:.2f}",
                "" if r.f_value is None else f"{r.f_value:.2f}",
                "" if r.p_value is None else f"{r.p_value:.3f}",
            ))
        widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
        lines = []
        for row in [head] + body:
            cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(cells).rstrip())
        lines.insert(1, "-" * len(lines[0]))
        lines.append("")
        lines.append(f"R-sq = {100 * self.r_squared:.2f}%")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        def cell(v):
            return "" if v is None else repr(float(v))

        out = ["source,df,adj_ss,adj_ms,f_value,p_value"]
        for r in self.rows:
            out.append(
                f"{r.source},{r.df},{cell(r.adj_ss)},{cell(r.adj_ms)},"
                f"{cell(r.f_value)},{cell(r.p_value)}"
            )
        out.append(f"r_squared,,{cell(self.r_squared)},,,")
        return "\n".join(out) + "\n"


def anova(model: MlrModel, train: DataMatrix) -> AnovaTable:
    """ANOVA of a fitted model with drop-one (adjusted) sums of squares.

    Each predictor's SS is the rise in SSE when that predictor is removed
    and the model refitted, so predictor rows need not add up to the
    regression row when predictors are correlated.
    """
    if model is None or not model.fitted:
        raise PipelineError("NOT_FITTED", "MLR model has not been fitted")
    if train.column_names != model.column_names:
        raise PipelineError("SHAPE_MISMATCH", "train columns differ from model columns")
    x, y = train.features, train.target
    n, p = x.shape
    if n <= p + 1:
        raise PipelineError("DEGENERATE", f"{n} rows for {p} predictors")
    resid = y - predict_mlr(model, train)
    sse = float(resid @ resid)
    dev = y - y.mean()
    sst = float(dev @ dev)
    ssr = sst - sse
    df_err, df_reg = n - p - 1, p
    mse = sse / df_err

    def f_and_p(ms, df):
        if mse == 0.0:
            return (np.inf, 0.0) if ms > 0 else (None, None)
        f = ms / mse
        return f, f_tail_probability(max(f, 0.0), df, df_err)

    rows = []
    f, pv = f_and_p(ssr / df_reg, df_reg)
    rows.append(AnovaRow("Regression", df_reg, ssr, ssr / df_reg, f, pv))
    for k, name in enumerate(model.column_names):
        reduced = np.delete(x, k, axis=1)
        ss = _sse(reduced, y) - sse
        f, pv = f_and_p(ss, 1)
        rows.append(AnovaRow(name, 1, ss, ss, f, pv))
    rows.append(AnovaRow("Error", df_err, sse, mse))
    rows.append(AnovaRow("Total", n - 1, sst, None))
    return AnovaTable(tuple(rows), 1.0 - sse / sst)
