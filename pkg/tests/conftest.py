from datetime import datetime, timedelta

import pytest

from pvforecast.core import LOCAL_TZ, Dataset, MeasurementRecord, validate_record
from pvforecast.synthetic import NoiseSd, PanelCoeffs, SynthConfig, generate

T0 = datetime(2019, 3, 1, 8, 0, tzinfo=LOCAL_TZ)


def at(minutes: float) -> datetime:
    return T0 + timedelta(minutes=minutes)


def record(minutes=0.0, illuminance=50_000.0, temperature=25.0, humidity=50.0,
           voltage=14.0, current=2.0):
    return validate_record(MeasurementRecord(
        at(minutes), illuminance, temperature, humidity, voltage, current
    ))


def series(minutes, **values):
    """Dataset with one nominal record per timestamp offset."""
    return Dataset.from_records([record(m, **values) for m in minutes])


def linear_config(**overrides) -> SynthConfig:
    """Noise-free generator settings whose power never clamps at zero."""
    kw = dict(
        noise_sd=NoiseSd(0.0, 0.0, 0.0, 0.0),
        panel_coeffs=PanelCoeffs(0.0007, -2.5, -1.0, 200.0),
        panel_shading_events_per_day=0.0,
    )
    kw.update(overrides)
    return SynthConfig(**kw)


@pytest.fixture(scope="session")
def synth_small():
    return generate(SynthConfig(days=20))


@pytest.fixture(scope="session")
def synth_default():
    return generate(SynthConfig())


@pytest.fixture(scope="session")
def synth_linear():
    return generate(linear_config(days=20))
