from dataclasses import replace
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import record, series
from pvforecast.ann import TrainConfig
from pvforecast.core import VARIABLES, Dataset, MeasurementRecord, SplitSpec
from pvforecast.errors import PipelineError
from pvforecast.experiment import (
    ExperimentSpec,
    build_forecast_matrix,
    compare_models,
    compare_station,
    run_experiment,
    run_forecast,
    run_sweep,
    standard_specs,
)

QUICK = TrainConfig(max_cycles=200, seed=0)


def quick_spec(variables=VARIABLES, topologies=("3:3:1",), **kw):
    return ExperimentSpec(variables, topologies, SplitSpec(), QUICK, **kw)


class TestSweep:
    def test_arity_mismatch(self, synth_small):
        with pytest.raises(PipelineError) as e:
            run_experiment(synth_small, quick_spec(topologies=("2:8:1",)))
        assert e.value.code == "TOPOLOGY_INPUT_MISMATCH"

    def test_single_topology_single_row(self, synth_small):
        result = run_experiment(synth_small, quick_spec())
        assert len(result.rows) == 1
        assert result.rows[0].topology == "3:3:1"
        assert result.rows[0].max_cycles == 200 and result.rows[0].error_level == 0.1

    def test_rows_sorted_and_seeds_advance(self, synth_small):
        result = run_experiment(synth_small, quick_spec(topologies=("3:2:1", "3:3:1", "3:5:1")))
        errs = [r.test_rmse for r in result.rows]
        assert errs == sorted(errs)

    def test_reproducible_and_parallel_equal(self, synth_small):
        specs = standard_specs(SplitSpec(), QUICK)
        a = run_sweep(synth_small, specs)
        b = run_sweep(synth_small, specs)
        c = run_sweep(synth_small, specs, jobs=2)
        assert a.to_csv() == b.to_csv() == c.to_csv()

    def test_three_variable_beats_temperature_humidity(self, synth_small):
        result = run_sweep(synth_small, standard_specs(SplitSpec(), TrainConfig(seed=0)))
        three = result.find(VARIABLES, "3:3:1").test_rmse
        assert three < result.find(("temperature", "humidity"), "2:7:1").test_rmse

    def test_table_text(self, synth_small):
        text = run_experiment(synth_small, quick_spec()).to_text()
        header = text.splitlines()[0]
        for col in ("Input Variables", "Topology", "Training cycles", "Error level", "RMSE"):
            assert col in header
        assert "illuminance, temperature, humidity" in text

    def test_not_enough_rows(self):
        ds = series(range(0, 100, 5))
        with pytest.raises(PipelineError) as e:
            run_experiment(ds, quick_spec())
        assert e.value.code == "INSUFFICIENT_DATA"

    def test_invalid_spec(self):
        with pytest.raises(PipelineError):
            quick_spec(scaler_fit="test")
        with pytest.raises(PipelineError):
            quick_spec(topologies=())


class TestCompare:
    def test_rows_and_order(self, synth_small):
        cmp = compare_models(synth_small, quick_spec())
        assert len(cmp) == 100
        assert list(cmp.timestamps) == sorted(cmp.timestamps)
        assert cmp.to_csv().splitlines()[0] == "timestamp,actual,ann,mlr"
        assert len(cmp.to_csv().splitlines()) == 101

    def test_nonlinear_data_favours_network(self, synth_small):
        cmp = compare_models(synth_small, replace(quick_spec(), train=TrainConfig(seed=0)))
        assert cmp.ann_rmse <= cmp.mlr_rmse

    def test_linear_data_favours_regression(self, synth_linear):
        cmp = compare_models(synth_linear, quick_spec())
        assert cmp.mlr_rmse < 1e-6
        assert cmp.ann_rmse >= cmp.mlr_rmse
        np.testing.assert_allclose(cmp.mlr_estimate, cmp.actual, rtol=1e-9)

    def test_anova_is_on_training_rows(self, synth_small):
        cmp = compare_models(synth_small, quick_spec())
        assert cmp.anova.row("Total").df == 699


def _noisy_pair(sd, seed, n=2000):
    rng = np.random.default_rng(seed)
    base = np.sin(np.linspace(0, 6 * np.pi, n)) ** 2
    def make(values):
        return Dataset.from_records([record(5 * i, illuminance=float(v))
                                     for i, v in enumerate(values)])
    return make(base + rng.normal(0, sd, n)), make(base + rng.normal(0, sd, n))


class TestStation:
    def test_self_comparison(self, synth_small):
        err, rep = compare_station(synth_small, synth_small)
        assert err == 0.0 and rep.dropped_left == 0

    def test_multiplicative_bias(self, synth_small):
        biased = Dataset(tuple(replace(r, illuminance=r.illuminance * 1.05)
                               for r in synth_small.records), synth_small.sampling_period)
        err, _ = compare_station(synth_small, biased)
        assert err == pytest.approx(0.0, abs=1e-12)

    def test_independent_noise_near_root_two_sigma(self):
        a, b = _noisy_pair(0.05, 7)
        err, _ = compare_station(a, b)
        assert 0.05 <= err <= 0.09

    def test_disjoint(self):
        with pytest.raises(PipelineError) as e:
            compare_station(series([0, 5]), series([10_000, 10_005]))
        assert e.value.code == "NO_OVERLAP"

    def test_station_without_power_columns(self, synth_small):
        station = Dataset(tuple(MeasurementRecord(r.timestamp, r.illuminance)
                                for r in synth_small.records[:500]), synth_small.sampling_period)
        err, rep, s = compare_station(synth_small, station, return_series=True)
        assert err == 0.0 and rep.matched_count == 500
        assert s.to_csv().splitlines()[0] == "timestamp,prototype,station"

    def test_constant_series(self):
        with pytest.raises(PipelineError) as e:
            compare_station(series([0, 5, 10]), series([0, 5, 10]))
        assert e.value.code == "CONSTANT_SERIES"


def _grid(n, skip=()):
    return Dataset.from_records([record(5 * i, illuminance=1000.0 * i, current=0.1 * i)
                                 for i in range(n) if i not in skip])


class TestForecastMatrix:
    def test_nine_columns_for_three_lags(self):
        m = build_forecast_matrix(_grid(20), lags=3)
        assert m.n_features == 9
        assert m.column_names[:3] == ("illuminance_lag1", "temperature_lag1", "humidity_lag1")

    def test_window_arithmetic(self):
        m = build_forecast_matrix(_grid(10), lags=3, horizon=1)
        assert len(m) == 7
        # Row for t=3 sees illuminance at t=2, 1, 0 and targets power at t=3.
        assert m.features[0, [0, 3, 6]].tolist() == [2000.0, 1000.0, 0.0]
        assert m.target[0] == pytest.approx(14.0 * 0.3)

    @settings(max_examples=30)
    @given(st.integers(2, 40), st.integers(1, 5), st.integers(1, 5))
    def test_gapless_row_count(self, n, lags, horizon):
        expected = n - lags - horizon + 1
        if expected < 1:
            with pytest.raises(PipelineError):
                build_forecast_matrix(_grid(n), lags, horizon)
        else:
            assert len(build_forecast_matrix(_grid(n), lags, horizon)) == expected

    def test_gap_excludes_crossing_rows(self):
        m = build_forecast_matrix(_grid(12, skip={5}), lags=2, horizon=1)
        targets = {t for t in m.timestamps}
        first = _grid(12).records[0].timestamp
        slots = {(t - first) // timedelta(minutes=5) for t in targets}
        assert slots == {2, 3, 4, 8, 9, 10, 11}

    def test_off_grid(self):
        with pytest.raises(PipelineError) as e:
            build_forecast_matrix(series([0, 5, 7, 15]), lags=1)
        assert e.value.code == "NOT_ON_GRID"

    def test_arity(self, synth_small):
        with pytest.raises(PipelineError) as e:
            run_forecast(synth_small, "9:4:3:1", lags=2)
        assert e.value.code == "TOPOLOGY_INPUT_MISMATCH"

    def test_run(self, synth_small):
        res = run_forecast(synth_small, "9:4:3:1", lags=3, train=QUICK)
        assert len(res.actual) == 100
        assert 0 < res.test_rmse < 0.5
