"""Experiment harness: topology sweeps, ANN vs MLR, station check, forecasting."""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace
from datetime import timedelta

import numpy as np

from pvforecast import ann, mlr
from pvforecast.core import VARIABLES, DataMatrix, Dataset, Flag, SplitSpec, split_dataset
from pvforecast.errors import PipelineError
from pvforecast.ingestion import align_series
from pvforecast.stats import MinMaxScaler, fit_scaler, rmse, transform

# Input-variable sets and their network topologies for the standard sweep.
STANDARD_CONFIGS = (
    (("illuminance", "temperature", "humidity"), "3:3:1"),
    (("illuminance", "temperature"), "2:8:1"),
    (("illuminance", "humidity"), "2:3:1"),
    (("temperature", "humidity"), "2:7:1"),
)
FORECAST_TOPOLOGY = "9:4:3:1"


@dataclass(frozen=True)
class ExperimentSpec:
    input_variables: tuple
    topologies: tuple
    split: SplitSpec = field(default_factory=SplitSpec)
    train: ann.TrainConfig = field(default_factory=ann.TrainConfig)
    scaler_fit: str = "train"  # "train" or "all"
    exclude_saturated: bool = False

    def __post_init__(self):
        tops = tuple(
            ann.parse_topology(t) if isinstance(t, str) else t for t in self.topologies
        )
        if not tops:
            raise PipelineError("INVALID_CONFIG", "empty topology list")
        if self.scaler_fit not in ("train", "all"):
            raise PipelineError("INVALID_CONFIG", "scaler_fit must be train|all")
        object.__setattr__(self, "topologies", tops)
        object.__setattr__(self, "input_variables", tuple(self.input_variables))


def check_arity(topology: ann.Topology, n_inputs: int):
    if topology.n_inputs != n_inputs:
        raise PipelineError(
            "TOPOLOGY_INPUT_MISMATCH",
            f"topology {topology} expects {topology.n_inputs} inputs, got {n_inputs}",
        )


@dataclass(frozen=True)
class SweepRow:
    variables: tuple
    topology: str
    max_cycles: int
    error_level: float
    cycles_used: int
    stop_reason: str
    train_error: float
    test_rmse: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(sorted(self.rows, key=lambda r: r.test_rmse)))

    def find(self, variables, topology) -> SweepRow:
        for r in self.rows:
            if set(r.variables) == set(variables) and r.topology == str(topology):
                return r
        raise KeyError((variables, topology))

    def to_text(self) -> str:
        head = ("Input Variables", "Topology", "Training cycles", "Error level", "RMSE")
        body = [
            (", ".join(r.variables), r.topology, str(r.max_cycles), f"{r.error_level:g}",
             f"{r.test_rmse:.6f}")
            for r in self.rows
        ]
        widths = [max(len(x[i]) for x in [head] + body) for i in range(5)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
                 for row in [head] + body]
        lines.insert(1, "-" * len(lines[0]))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        out = ["variables,topology,training_cycles,error_level,cycles_used,stop_reason,"
               "train_error,test_rmse"]
        for r in self.rows:
            out.append(
                f"{'|'.join(r.variables)},{r.topology},{r.max_cycles},{r.error_level!r},"
                f"{r.cycles_used},{r.stop_reason},{r.train_error!r},{r.test_rmse!r}"
            )
        return "\n".join(out) + "\n"


@dataclass(frozen=True, eq=False)
class PreparedData:
    """A split in physical units plus its normalized counterpart."""

    train: DataMatrix
    validation: DataMatrix
    test: DataMatrix
    scaler: MinMaxScaler
    train_n: DataMatrix
    validation_n: DataMatrix
    test_n: DataMatrix


def prepare(matrix: DataMatrix, split: SplitSpec, scaler_fit: str = "train") -> PreparedData:
    if len(matrix) < split.total:
        raise PipelineError(
            "INSUFFICIENT_DATA", f"{len(matrix)} usable rows, split needs {split.total}"
        )
    tr, va, te = split_dataset(matrix, split)
    scaler = fit_scaler(tr if scaler_fit == "train" else matrix)
    return PreparedData(
        tr, va, te, scaler, transform(scaler, tr), transform(scaler, va), transform(scaler, te)
    )


def _train_one(topology, prepared_n, config, seed):
    train_n, val_n, test_n = prepared_n
    model = ann.init_weights(topology, seed)
    model = ann.train(model, train_n, val_n, replace(config, seed=seed))
    pred = ann.forward(model, test_n.features).reshape(-1)
    return model, rmse(pred, test_n.target)


def _job(args):
    variables, topology, prepared_n, config, seed = args
    model, test_rmse = _train_one(topology, prepared_n, config, seed)
    return SweepRow(
        variables=variables,
        topology=str(topology),
        max_cycles=config.max_cycles,
        error_level=config.target_error,
        cycles_used=model.cycles,
        stop_reason=model.stop_reason,
        train_error=model.history.train_error[-1],
        test_rmse=test_rmse,
    )


def _jobs_for(data: Dataset, spec: ExperimentSpec, first_index: int):
    for t in spec.topologies:
        check_arity(t, len(spec.input_variables))
    matrix = data.matrix(spec.input_variables, exclude_saturated=spec.exclude_saturated)
    p = prepare(matrix, spec.split, spec.scaler_fit)
    triple = (p.train_n, p.validation_n, p.test_n)
    return [
        (spec.input_variables, t, triple, spec.train, spec.train.seed + first_index + k)
        for k, t in enumerate(spec.topologies)
    ]


def run_sweep(data: Dataset, specs, jobs: int = 1) -> SweepResult:
    """Run every topology of every spec; the k-th run overall uses seed base + k."""
    work = []
    for spec in specs:
        work.extend(_jobs_for(data, spec, len(work)))
    if jobs > 1 and len(work) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_job, work))
    else:
        rows = [_job(w) for w in work]
    return SweepResult(tuple(rows))


def run_experiment(data: Dataset, spec: ExperimentSpec, jobs: int = 1) -> SweepResult:
    """Train each topology in ``spec`` and rank runs by normalized test RMSE."""
    return run_sweep(data, [spec], jobs)


def standard_specs(split=None, train=None, scaler_fit="train", exclude_saturated=False):
    """One :class:`ExperimentSpec` per standard variable set and topology."""
    split = split or SplitSpec()
    train = train or ann.TrainConfig()
    return [
        ExperimentSpec(v, (t,), split, train, scaler_fit, exclude_saturated)
        for v, t in STANDARD_CONFIGS
    ]


@dataclass(frozen=True, eq=False)
class Comparison:
    """Held-out rows in time order with actual, ANN and MLR power (W)."""

    timestamps: tuple
    actual: np.ndarray
    ann_estimate: np.ndarray
    mlr_estimate: np.ndarray
    ann_rmse: float  # normalized scale
    mlr_rmse: float
    ann_model: ann.MlpModel
    mlr_model: mlr.MlrModel
    anova: mlr.AnovaTable
    scaler: MinMaxScaler

    def __len__(self):
        return len(self.actual)

    def to_csv(self) -> str:
        out = ["timestamp,actual,ann,mlr"]
        for t, a, b, c in zip(self.timestamps, self.actual, self.ann_estimate, self.mlr_estimate):
            out.append(f"{t.isoformat()},{float(a)!r},{float(b)!r},{float(c)!r}")
        return "\n".join(out) + "\n"


def compare_models(data: Dataset, spec: ExperimentSpec) -> Comparison:
    """Fit ANN (first topology in ``spec``) and MLR on one training split.

    Both are scored on the same test rows; RMSEs are on the normalized
    power scale of the fitted scaler.
    """
    topology = spec.topologies[0]
    check_arity(topology, len(spec.input_variables))
    matrix = data.matrix(spec.input_variables, exclude_saturated=spec.exclude_saturated)
    p = prepare(matrix, spec.split, spec.scaler_fit)
    model, _ = _train_one(
        topology, (p.train_n, p.validation_n, p.test_n), spec.train, spec.train.seed
    )
    reg = mlr.fit_mlr(p.train)
    table = mlr.anova(reg, p.train)

    order = np.argsort(np.array([t.timestamp() for t in p.test.timestamps]), kind="stable")
    test = p.test.take(order)
    ann_est = ann.predict_ann(model, test, p.scaler)
    mlr_est = mlr.predict_mlr(reg, test)
    norm = lambda v: p.scaler.scale_column(test.target_name, v)  # noqa: E731
    actual_n = norm(test.target)
    return Comparison(
        timestamps=test.timestamps,
        actual=test.target,
        ann_estimate=ann_est,
        mlr_estimate=mlr_est,
        ann_rmse=rmse(norm(ann_est), actual_n),
        mlr_rmse=rmse(norm(mlr_est), actual_n),
        ann_model=model,
        mlr_model=reg,
        anova=table,
        scaler=p.scaler,
    )


@dataclass(frozen=True, eq=False)
class StationSeries:
    timestamps: tuple
    prototype: np.ndarray  # normalized over the matched window
    station: np.ndarray

    def to_csv(self) -> str:
        out = ["timestamp,prototype,station"]
        for t, a, b in zip(self.timestamps, self.prototype, self.station):
            out.append(f"{t.isoformat()},{float(a)!r},{float(b)!r}")
        return "\n".join(out) + "\n"


def _normalize(v: np.ndarray, name: str) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi == lo:
        raise PipelineError("CONSTANT_SERIES", name)
    return (v - lo) / (hi - lo)


def compare_station(
    prototype: Dataset,
    station: Dataset,
    variable: str = "illuminance",
    tolerance: timedelta = timedelta(minutes=2, seconds=30),
    *,
    return_series: bool = False,
):
    """RMSE between two independently min-max normalized, aligned series.

    Records lacking ``variable`` are ignored before alignment. Returns
    ``(rmse, report)``, plus the aligned normalized series when
    ``return_series`` is set.
    """
    def having(ds):
        return Dataset(tuple(r for r in ds.records if r.value(variable) is not None),
                       ds.sampling_period)

    pairs, report = align_series(having(prototype), having(station), tolerance)
    a = np.array([p.value(variable) for p, _ in pairs], dtype=float)
    b = np.array([s.value(variable) for _, s in pairs], dtype=float)
    a_n, b_n = _normalize(a, "prototype"), _normalize(b, "station")
    err = rmse(a_n, b_n)
    if return_series:
        return err, report, StationSeries(tuple(p.timestamp for p, _ in pairs), a_n, b_n)
    return err, report


def build_forecast_matrix(data: Dataset, lags: int = 3, horizon: int = 1) -> DataMatrix:
    """Lagged features for forecasting power ``horizon`` steps ahead.

    The row for grid time ``t`` holds illuminance, temperature and humidity
    at ``t-1 .. t-lags`` (lag-major) and targets power at ``t+horizon-1``.
    Records flagged MISSING or OUT_OF_RANGE count as gaps; any row that
    needs a gap is dropped.
    """
    if lags < 1 or horizon < 1:
        raise PipelineError("INVALID_CONFIG", "lags and horizon must be >= 1")
    if len(data) == 0:
        raise PipelineError("INSUFFICIENT_HISTORY", "empty dataset")
    period = data.sampling_period
    t0 = data.records[0].timestamp
    slots = {}
    for r in data.records:
        offset = r.timestamp - t0
        if offset % period:
            raise PipelineError("NOT_ON_GRID", r.timestamp.isoformat())
        if r.quality_flags & {Flag.MISSING, Flag.OUT_OF_RANGE} or r.power is None:
            continue
        slots[offset // period] = r
    last = (data.records[-1].timestamp - t0) // period
    names = tuple(f"{v}_lag{k}" for k in range(1, lags + 1) for v in VARIABLES)
    rows, targets, stamps = [], [], []
    for i in range(lags, last - horizon + 2):
        hist = [slots.get(i - k) for k in range(1, lags + 1)]
        tgt = slots.get(i + horizon - 1)
        if tgt is None or any(h is None for h in hist):
            continue
        rows.append([h.value(v) for h in hist for v in VARIABLES])
        targets.append(tgt.power)
        stamps.append(tgt.timestamp)
    if not rows:
        raise PipelineError("INSUFFICIENT_HISTORY", f"no complete window for lags={lags}")
    return DataMatrix(np.array(rows), np.array(targets), names, timestamps=tuple(stamps))


@dataclass(frozen=True, eq=False)
class ForecastResult:
    model: ann.MlpModel
    scaler: MinMaxScaler
    timestamps: tuple
    actual: np.ndarray
    predicted: np.ndarray
    test_rmse: float  # normalized scale

    def to_csv(self) -> str:
        out = ["timestamp,actual,forecast"]
        for t, a, b in zip(self.timestamps, self.actual, self.predicted):
            out.append(f"{t.isoformat()},{float(a)!r},{float(b)!r}")
        return "\n".join(out) + "\n"


def run_forecast(
    data: Dataset,
    topology=FORECAST_TOPOLOGY,
    lags: int = 3,
    horizon: int = 1,
    split: SplitSpec | None = None,
    train: ann.TrainConfig | None = None,
    scaler_fit: str = "train",
) -> ForecastResult:
    """Train a lagged-input network and score it on the held-out rows."""
    topology = ann.parse_topology(topology) if isinstance(topology, str) else topology
    check_arity(topology, lags * len(VARIABLES))
    split = split or SplitSpec()
    train = train or ann.TrainConfig()
    matrix = build_forecast_matrix(data, lags, horizon)
    p = prepare(matrix, split, scaler_fit)
    model, test_rmse = _train_one(topology, (p.train_n, p.validation_n, p.test_n), train,
                                  train.seed)
    order = np.argsort(np.array([t.timestamp() for t in p.test.timestamps]), kind="stable")
    test = p.test.take(order)
    return ForecastResult(
        model, p.scaler, test.timestamps, test.target,
        ann.predict_ann(model, test, p.scaler), test_rmse,
    )
