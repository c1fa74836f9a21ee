"""Command-line entry point: ``pvforecast <command> [flags]``.

Exit status: 0 on success, 2 for usage errors, 3 for data errors and
4 for numeric failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import itertools
import json
import os
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

from pvforecast import __version__, ann, experiment
from pvforecast.core import TARGET, Dataset, Flag, SplitSpec, parse_variables
from pvforecast.errors import DATA, NUMERIC, USAGE, PipelineError
from pvforecast.ingestion import CsvSchema, GapPolicy, load_csv, resample_to_grid, write_csv
from pvforecast.stats import correlation_matrix, rmse
from pvforecast.synthetic import NoiseSd, PanelCoeffs, SynthConfig, generate

EXIT_CODES = {USAGE: 2, DATA: 3, NUMERIC: 4}
DEFAULT_SEED = 42
MANIFEST = "manifest.json"


class RunContext:
    """Collects what a run read and wrote, then writes its manifest."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args
        self.out = Path(args.out) if getattr(args, "out", None) else None
        self.inputs = {}
        self.started = datetime.now(timezone.utc)

    def read(self, path) -> Path:
        path = Path(path)
        self.inputs[str(path)] = hashlib.sha256(path.read_bytes()).hexdigest()
        return path

    def write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text)
        return path

    def finish(self, config: dict):
        if self.out is None:
            return
        self.out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "command": self.command,
            "config": config,
            "seed": getattr(self.args, "seed", None),
            "inputs": self.inputs,
            "version": __version__,
            "started": self.started.isoformat(),
            "finished": datetime.now(timezone.utc).isoformat(),
        }
        (self.out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _jsonable(value):
    if dataclasses.is_dataclass(value):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(value).items()}
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (datetime, timedelta)):
        return str(value)
    if isinstance(value, (int, float, str, bool)) or value is None:
        return value
    return str(value)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PVF_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise PipelineError("INVALID_CONFIG", f"PVF_SEED={env!r} is not an integer") from None
    return DEFAULT_SEED


def _load(ctx: RunContext, path, schema_path=None) -> Dataset:
    schema = CsvSchema.from_json(ctx.read(schema_path)) if schema_path else CsvSchema()
    return load_csv(ctx.read(path), schema)


def _train_config(args) -> ann.TrainConfig:
    return ann.TrainConfig(
        max_cycles=args.cycles,
        target_error=args.error_level,
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        seed=args.seed,
        error_metric=args.error_metric,
    )


def _split(args) -> SplitSpec:
    return SplitSpec.parse(args.split, seed=args.seed)


# -- generate ---------------------------------------------------------------

def _parse_synth_file(path) -> dict:
    """``key = value`` lines; nested fields as ``noise_sd.power = 2``."""
    flat = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PipelineError("INVALID_CONFIG", f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        flat[key] = value
    return flat


def _synth_config(args, ctx) -> SynthConfig:
    fields = {f.name: f for f in dataclasses.fields(SynthConfig)}
    kwargs, panel, noise = {}, {}, {}
    flat = _parse_synth_file(ctx.read(args.config)) if args.config else {}
    for key, value in flat.items():
        try:
            if key.startswith("panel_coeffs."):
                panel[key.split(".", 1)[1]] = float(value)
            elif key.startswith("noise_sd."):
                noise[key.split(".", 1)[1]] = float(value)
            elif key == "start":
                kwargs[key] = datetime.fromisoformat(value)
            elif key == "period":
                kwargs[key] = timedelta(minutes=float(value))
            elif key in ("days", "seed"):
                kwargs[key] = int(value)
            elif key in fields:
                kwargs[key] = float(value)
            else:
                raise PipelineError("INVALID_CONFIG", f"unknown generator key {key!r}")
        except ValueError as exc:
            raise PipelineError("INVALID_CONFIG", f"{key}: {exc}") from None
    if panel:
        kwargs["panel_coeffs"] = PanelCoeffs(**{**dataclasses.asdict(PanelCoeffs()), **panel})
    if noise:
        kwargs["noise_sd"] = NoiseSd(**{**dataclasses.asdict(NoiseSd()), **noise})
    if args.days is not None:
        kwargs["days"] = args.days
    if args.period is not None:
        kwargs["period"] = timedelta(minutes=args.period)
    if args.start is not None:
        kwargs["start"] = datetime.fromisoformat(args.start)
    kwargs["seed"] = args.seed
    try:
        return SynthConfig(**kwargs)
    except TypeError as exc:
        raise PipelineError("INVALID_CONFIG", str(exc)) from None


def cmd_generate(args, ctx):
    config = _synth_config(args, ctx)
    data = generate(config)
    ctx.out.mkdir(parents=True, exist_ok=True)
    write_csv(data, ctx.out / "dataset.csv")
    print(f"wrote {len(data)} records to {ctx.out / 'dataset.csv'}")
    return {"synth": _jsonable(config)}


# -- ingest / inspect -------------------------------------------------------

def cmd_ingest(args, ctx):
    data = _load(ctx, args.input, args.schema)
    if args.period is not None:
        data = resample_to_grid(data, timedelta(minutes=args.period), GapPolicy(args.gap_policy))
    ctx.out.mkdir(parents=True, exist_ok=True)
    write_csv(data, ctx.out / "dataset.csv")
    print(f"wrote {len(data)} records to {ctx.out / 'dataset.csv'}")
    return {"period_min": args.period, "gap_policy": args.gap_policy}


def cmd_inspect(args, ctx):
    data = _load(ctx, args.input, args.schema)
    print(f"records: {len(data)}")
    if len(data):
        print(f"span: {data.records[0].timestamp.isoformat()} .. "
              f"{data.records[-1].timestamp.isoformat()}")
    print(f"sampling period: {data.sampling_period}")
    for flag in Flag:
        count = sum(flag in r.quality_flags for r in data.records)
        print(f"  {flag.value:<20} {count}")
    print(f"{'column':<12} {'min':>12} {'max':>12} {'mean':>12} {'count':>7}")
    for name, s in data.column_stats.items():
        print(f"{name:<12} {s.min:>12.4f} {s.max:>12.4f} {s.mean:>12.4f} {s.count:>7}")
    return {}


# -- correlate --------------------------------------------------------------

def cmd_correlate(args, ctx):
    data = _load(ctx, args.input, args.schema)
    variables = parse_variables(args.variables)
    matrix = data.matrix(variables, exclude_saturated=args.exclude_saturated)
    columns = variables + (TARGET,)
    corr = correlation_matrix(matrix, columns)
    ctx.write("correlation.csv", corr.to_csv())
    for a, b in itertools.combinations(columns, 2):
        rows = [f"{a},{b}"] + [
            f"{x!r},{y!r}" for x, y in zip(matrix.column(a).tolist(), matrix.column(b).tolist())
        ]
        ctx.write(f"scatter_{a}__{b}.csv", "\n".join(rows) + "\n")
    print(corr.to_csv(), end="")
    return {"variables": list(variables)}


# -- train / sweep ----------------------------------------------------------

def cmd_train(args, ctx):
    data = _load(ctx, args.input, args.schema)
    variables = parse_variables(args.variables)
    topology = ann.parse_topology(args.topology[0] if args.topology else "3:3:1")
    experiment.check_arity(topology, len(variables))
    matrix = data.matrix(variables, exclude_saturated=args.exclude_saturated)
    p = experiment.prepare(matrix, _split(args), args.scaler_fit)
    config = _train_config(args)
    model = ann.init_weights(topology, args.seed)
    model = ann.train(model, p.train_n, p.validation_n, config)
    pred_n = ann.forward(model, p.test_n.features).reshape(-1)
    test_rmse = rmse(pred_n, p.test_n.target)
    ctx.out.mkdir(parents=True, exist_ok=True)
    ann.save_model(model, ctx.out / "model.txt", p.scaler)
    hist = ["cycle,train_error"] + [
        f"{i},{e!r}" for i, e in enumerate(model.history.train_error, 1)
    ]
    ctx.write("history.csv", "\n".join(hist) + "\n")
    print(f"topology {topology}: {model.cycles} cycles, {model.stop_reason}, "
          f"test RMSE {test_rmse:.6f}")
    return {"variables": list(variables), "topology": str(topology),
            "train": _jsonable(config), "split": args.split, "scaler_fit": args.scaler_fit}


def _specs_from_args(args):
    if args.standard:
        return experiment.standard_specs(
            _split(args), _train_config(args), args.scaler_fit, args.exclude_saturated
        )
    variables = parse_variables(args.variables)
    return [experiment.ExperimentSpec(
        variables,
        tuple(args.topology or ["3:3:1"]),
        _split(args),
        _train_config(args),
        args.scaler_fit,
        args.exclude_saturated,
    )]


def cmd_sweep(args, ctx):
    data = _load(ctx, args.input, args.schema)
    specs = _specs_from_args(args)
    result = experiment.run_sweep(data, specs, jobs=args.jobs)
    ctx.write("sweep.csv", result.to_csv())
    ctx.write("sweep.txt", result.to_text())
    print(result.to_text(), end="")
    return {"specs": _jsonable(specs), "jobs": args.jobs}


# -- compare / station / forecast -------------------------------------------

def _write_comparison(ctx, cmp):
    ctx.write("comparison.csv", cmp.to_csv())
    ctx.write("anova.txt", cmp.anova.to_text())
    ctx.write("anova.csv", cmp.anova.to_csv())
    print(cmp.anova.to_text(), end="")
    print(f"ANN test RMSE {cmp.ann_rmse:.6f}   MLR test RMSE {cmp.mlr_rmse:.6f}")


def cmd_compare(args, ctx):
    data = _load(ctx, args.input, args.schema)
    variables = parse_variables(args.variables)
    spec = experiment.ExperimentSpec(
        variables, tuple(args.topology or ["3:3:1"]), _split(args), _train_config(args),
        args.scaler_fit, args.exclude_saturated,
    )
    _write_comparison(ctx, experiment.compare_models(data, spec))
    return {"spec": _jsonable(spec)}


def cmd_station(args, ctx):
    prototype = _load(ctx, args.input, args.schema)
    station = _load(ctx, args.station, args.station_schema)
    variable = parse_variables(args.variable)[0]
    err, report, series = experiment.compare_station(
        prototype, station, variable, timedelta(minutes=args.tolerance), return_series=True
    )
    ctx.write("station_series.csv", series.to_csv())
    print(f"matched {report.matched_count}, dropped {report.dropped_left}/"
          f"{report.dropped_right}, max skew {report.max_time_skew:g} s")
    print(f"RMSE {err!r}")
    return {"variable": variable, "tolerance_min": args.tolerance,
            "rmse": err, "report": _jsonable(report)}


def cmd_forecast(args, ctx):
    data = _load(ctx, args.input, args.schema)
    period = timedelta(minutes=args.period) if args.period else data.sampling_period
    data = resample_to_grid(data, period, GapPolicy(args.gap_policy))
    topology = ann.parse_topology(args.topology[0] if args.topology else "9:4:3:1")
    result = experiment.run_forecast(
        data, topology, args.lags, args.horizon, _split(args), _train_config(args),
        args.scaler_fit,
    )
    ctx.out.mkdir(parents=True, exist_ok=True)
    ann.save_model(result.model, ctx.out / "model.txt", result.scaler)
    ctx.write("forecast.csv", result.to_csv())
    print(f"topology {topology}, lags {args.lags}, horizon {args.horizon}: "
          f"{result.model.cycles} cycles, {result.model.stop_reason}, "
          f"test RMSE {result.test_rmse:.6f}")
    return {"topology": str(topology), "lags": args.lags, "horizon": args.horizon,
            "train": _jsonable(_train_config(args)), "split": args.split}


# -- reproduce --------------------------------------------------------------

def cmd_reproduce(args, ctx):
    """Generate synthetic data, run the standard sweep and the ANN/MLR comparison."""
    args.config = getattr(args, "config", None)
    config = _synth_config(args, ctx)
    data = generate(config)
    ctx.out.mkdir(parents=True, exist_ok=True)
    write_csv(data, ctx.out / "dataset.csv")
    specs = experiment.standard_specs(
        _split(args), _train_config(args), args.scaler_fit, args.exclude_saturated
    )
    result = experiment.run_sweep(data, specs, jobs=args.jobs)
    ctx.write("sweep.csv", result.to_csv())
    ctx.write("sweep.txt", result.to_text())
    print(result.to_text(), end="")
    cmp = experiment.compare_models(data, specs[0])
    _write_comparison(ctx, cmp)
    return {"synth": _jsonable(config), "specs": _jsonable(specs)}


# -- parser -----------------------------------------------------------------

def _add_io(p, needs_input=True):
    if needs_input:
        p.add_argument("--input", required=True, help="sensor CSV file")
        p.add_argument("--schema", help="JSON file describing the CSV layout")
    p.add_argument("--out", default="pvf_out", help="output directory (default: %(default)s)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"random seed (default: $PVF_SEED or {DEFAULT_SEED})")


def _add_model(p, standard=False):
    p.add_argument("--variables", default="lux,temp,hum",
                   help="comma-separated inputs from lux,temp,hum (default: %(default)s)")
    p.add_argument("--topology", action="append",
                   help="layer sizes like 3:3:1; repeat to sweep several")
    p.add_argument("--cycles", type=int, default=5000,
                   help="maximum training cycles (default: %(default)s)")
    p.add_argument("--error-level", type=float, default=0.1,
                   help="training error that stops training (default: %(default)s)")
    p.add_argument("--error-metric", choices=("rmse", "max"), default="rmse",
                   help="error-level criterion: RMSE or largest residual (default: %(default)s)")
    p.add_argument("--learning-rate", type=float, default=0.1,
                   help="SGD step size (default: %(default)s)")
    p.add_argument("--momentum", type=float, default=0.8,
                   help="SGD momentum (default: %(default)s)")
    p.add_argument("--split", default="700:200:100",
                   help="train:validation:test row counts (default: %(default)s)")
    p.add_argument("--scaler-fit", choices=("train", "all"), default="train",
                   help="fit min-max scaling on the training rows or all rows")
    p.add_argument("--exclude-saturated", action="store_true",
                   help="drop records with saturated humidity")
    p.add_argument("--jobs", type=int, default=1, help="parallel training processes")
    if standard:
        p.add_argument("--standard", action="store_true",
                       help="run the four standard variable-set/topology pairs")


def _add_synth(p):
    p.add_argument("--days", type=int, default=None, help="days to simulate (default: 120)")
    p.add_argument("--period", type=float, default=None, help="sampling period in minutes")
    p.add_argument("--start", default=None, help="ISO-8601 start time")
    p.add_argument("--config", default=None, help="generator key = value file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvforecast", description=__doc__.splitlines()[0], allow_abbrev=False
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help, description=help, allow_abbrev=False)
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "write a synthetic sensor log")
    _add_io(p, needs_input=False)
    _add_synth(p)

    p = add("ingest", cmd_ingest, "parse, validate and optionally resample a log")
    _add_io(p)
    p.add_argument("--period", type=float, default=None, help="resample period in minutes")
    p.add_argument("--gap-policy", choices=[g.value for g in GapPolicy], default="drop",
                   help="how to treat empty grid points (default: %(default)s)")

    p = add("inspect", cmd_inspect, "print record counts, flags and column statistics")
    p.add_argument("--input", required=True, help="sensor CSV file")
    p.add_argument("--schema", help="JSON file describing the CSV layout")

    p = add("correlate", cmd_correlate, "Pearson matrix and pairwise scatter data")
    _add_io(p)
    p.add_argument("--variables", default="lux,temp,hum", help="inputs to correlate with power")
    p.add_argument("--exclude-saturated", action="store_true",
                   help="drop records with saturated humidity")

    p = add("train", cmd_train, "train one network and save it")
    _add_io(p)
    _add_model(p)

    p = add("sweep", cmd_sweep, "train several topologies and rank them by test RMSE")
    _add_io(p)
    _add_model(p, standard=True)

    p = add("compare", cmd_compare, "ANN vs multiple linear regression with ANOVA")
    _add_io(p)
    _add_model(p)

    p = add("station", cmd_station, "normalized RMSE between logger and station series")
    _add_io(p)
    p.add_argument("--station", required=True, help="station CSV file")
    p.add_argument("--station-schema", help="JSON layout of the station file")
    p.add_argument("--variable", default="lux", help="variable to compare (default: %(default)s)")
    p.add_argument("--tolerance", type=float, default=2.5,
                   help="matching tolerance in minutes (default: %(default)s)")

    p = add("forecast", cmd_forecast, "lagged-input short-term power forecast")
    _add_io(p)
    _add_model(p)
    p.add_argument("--lags", type=int, default=3, help="past grid steps used (default: 3)")
    p.add_argument("--horizon", type=int, default=1, help="steps ahead (default: 1)")
    p.add_argument("--period", type=float, default=None,
                   help="grid period in minutes (default: inferred)")
    p.add_argument("--gap-policy", choices=[g.value for g in GapPolicy], default="drop",
                   help="how to treat empty grid points (default: %(default)s)")

    p = add("reproduce", cmd_reproduce,
            "generate data, run the standard sweep and the ANN/MLR comparison")
    _add_io(p, needs_input=False)
    _add_synth(p)
    _add_model(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    ctx = RunContext(args.command, args)
    try:
        if hasattr(args, "seed"):
            args.seed = _seed(args)
        config = args.func(args, ctx)
        ctx.finish(config)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES[DATA]
    return 0


if __name__ == "__main__":
    sys.exit(main())
