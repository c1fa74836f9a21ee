from dataclasses import replace
from datetime import timedelta

import numpy as np
import pytest

from conftest import linear_config
from pvforecast.core import LOCAL_TZ, Flag
from pvforecast.errors import PipelineError
from pvforecast.stats import pearson
from pvforecast.synthetic import NoiseSd, PanelCoeffs, SynthConfig, generate, ground_truth_power


def test_one_day_of_five_minute_samples():
    assert len(generate(SynthConfig(days=1, seed=7))) == 288


def test_default_run_size(synth_default):
    assert len(synth_default) >= 32_200
    assert synth_default.sampling_period == timedelta(minutes=5)


def test_quiet_midnight_record():
    cfg = SynthConfig(
        days=1,
        noise_sd=NoiseSd(0.0, 0.0, 0.0, 0.0),
        cloud_events_per_day=0.0,
        panel_shading_events_per_day=0.0,
        panel_coeffs=PanelCoeffs(0.0006, 0.0, 0.0, 3.0),
    )
    first = generate(cfg).records[0]
    assert first.timestamp.astimezone(LOCAL_TZ).hour == 0
    assert first.illuminance == 0.0
    assert first.power == pytest.approx(3.0, abs=1e-12)


def test_quiet_midnight_clamps_negative_power():
    cfg = SynthConfig(days=1, noise_sd=NoiseSd(0.0, 0.0, 0.0, 0.0),
                      panel_coeffs=PanelCoeffs(0.0006, 0.0, 0.0, -4.0))
    assert generate(cfg).records[0].power == 0.0


@pytest.mark.parametrize("coeffs, lux, temp, hum, expected", [
    (PanelCoeffs(0.001, -0.1, 0.0, 5.0), 10_000.0, 20.0, 40.0, 13.0),
    (PanelCoeffs(0.0, 0.0, 0.0, 7.0), 12_345.0, -3.0, 88.0, 7.0),
])
def test_ground_truth_power(coeffs, lux, temp, hum, expected):
    cfg = SynthConfig(panel_coeffs=coeffs)
    assert ground_truth_power(cfg, lux, temp, hum) == pytest.approx(expected, abs=1e-12)


def test_noise_free_power_matches_ground_truth(synth_linear):
    cfg = linear_config(days=20)
    lux, temp, hum = (synth_linear.column(c) for c in ("illuminance", "temperature", "humidity"))
    power = synth_linear.column("power")
    assert np.all(power > 0)
    np.testing.assert_allclose(power, ground_truth_power(cfg, lux, temp, hum), rtol=1e-12)


def test_same_seed_is_bit_identical():
    a = generate(SynthConfig(days=3, seed=11))
    b = generate(SynthConfig(days=3, seed=11))
    assert a.records == b.records


def test_seeds_differ():
    a = generate(SynthConfig(days=3, seed=1)).column("power")
    b = generate(SynthConfig(days=3, seed=2)).column("power")
    assert not np.array_equal(a, b)


def test_channels_in_physical_ranges(synth_small):
    hum = synth_small.column("humidity")
    lux = synth_small.column("illuminance")
    assert hum.min() >= 0.0 and hum.max() <= 100.0
    assert lux.min() >= 0.0
    assert np.all(synth_small.column("power") >= 0.0)


def test_humidity_against_temperature(synth_default):
    c = {n: synth_default.column(n) for n in ("illuminance", "temperature", "humidity", "power")}
    r_th = pearson(c["temperature"], c["humidity"])
    assert r_th < 0
    assert r_th < pearson(c["illuminance"], c["power"])


def test_night_is_dark(synth_small):
    hours = np.array([t.astimezone(LOCAL_TZ).hour for t in synth_small.timestamps])
    lux = synth_small.column("illuminance")
    clear = lux[(hours >= 1) & (hours <= 4)]
    # Sensor noise is clipped at zero, so darkness reads as small values.
    assert np.median(clear) == 0.0


@pytest.mark.parametrize("kwargs", [
    {"days": 0},
    {"period": timedelta(minutes=7)},
    {"peak_illuminance": 250_000.0},
    {"noise_sd": NoiseSd(power=-1.0)},
    {"cloud_events_per_day": -1.0},
    {"voltage": 0.0},
    {"dawn_fog_probability": 1.5},
])
def test_invalid_config(kwargs):
    with pytest.raises(PipelineError) as e:
        SynthConfig(**kwargs)
    assert e.value.code == "INVALID_CONFIG"


def test_start_offset_and_period():
    cfg = replace(SynthConfig(days=1), period=timedelta(minutes=10))
    ds = generate(cfg)
    assert len(ds) == 144
    assert ds.timestamps[1] - ds.timestamps[0] == timedelta(minutes=10)


def test_humidity_saturates_around_dawn(synth_default):
    saturated = [r.timestamp.astimezone(LOCAL_TZ).hour for r in synth_default
                 if Flag.HUMIDITY_SATURATED in r.quality_flags]
    assert len(saturated) > 100
    assert all(3 <= h <= 9 for h in saturated)


def test_fog_leaves_other_channels_unchanged():
    a = generate(SynthConfig(days=5, dawn_fog_probability=0.0))
    b = generate(SynthConfig(days=5, dawn_fog_probability=1.0))
    assert np.array_equal(a.column("illuminance"), b.column("illuminance"))
    assert np.array_equal(a.column("temperature"), b.column("temperature"))
    assert not np.array_equal(a.column("humidity"), b.column("humidity"))
