"""Synthetic logger data with a known power function.

The day curve is a clamped half sine between sunrise and sunset (day
length from latitude and solar declination), not a solar-position model;
it stands in for a clear-sky model and can be swapped out. Passing clouds
multiply it by smooth dips seen by both the light sensor and the panel.
Extra shading events dim only the panel, which leaves a bounded share of
power unexplained by any sensor.

Temperature and humidity carry a weak diurnal cycle on top of slow
weather wander, so on their own they say little about the time of day.
Humidity partly follows the temperature wander with the opposite sign
and is clipped to [0, 100]; fog on some mornings drives it to saturation
around sunrise. Power is linear in the true channels plus
noise and clamped at zero, so night hours add a hinge that a linear
model cannot follow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from pvforecast.core import ILLUMINANCE_MAX, LOCAL_TZ, Dataset, MeasurementRecord, validate_record
from pvforecast.errors import PipelineError


@dataclass(frozen=True)
class PanelCoeffs:
    a_lux: float = 0.0007  # W/lux
    b_temp: float = -2.5  # W/degC
    c_hum: float = -1.0  # W/%RH
    intercept: float = 90.0  # W


@dataclass(frozen=True)
class NoiseSd:
    illuminance: float = 1500.0
    temperature: float = 0.3
    humidity: float = 1.0
    power: float = 1.0


@dataclass(frozen=True)
class SynthConfig:
    start: datetime = datetime(2019, 1, 14, tzinfo=LOCAL_TZ)
    days: int = 120
    period: timedelta = timedelta(minutes=5)
    latitude: float = 19.7
    peak_illuminance: float = 110_000.0
    temp_base: float = 17.0
    temp_amplitude: float = 2.0
    temp_wander_sd: float = 5.0
    humidity_base: float = 65.0
    humidity_amplitude: float = 5.0
    humidity_wander_sd: float = 12.0
    humidity_temp_coupling: float = -1.0  # %RH per degC of weather wander
    wander_hours: float = 4.0
    panel_coeffs: PanelCoeffs = field(default_factory=PanelCoeffs)
    noise_sd: NoiseSd = field(default_factory=NoiseSd)
    cloud_events_per_day: float = 4.0
    panel_shading_events_per_day: float = 3.0
    dawn_fog_probability: float = 0.35  # share of mornings pushed to saturation
    dawn_fog_rise: float = 45.0  # %RH added at the fog peak
    voltage: float = 14.3  # constant-voltage load
    seed: int = 42

    def __post_init__(self):
        problems = []
        if self.days < 1:
            problems.append("days must be >= 1")
        if self.period <= timedelta(0) or timedelta(days=1) % self.period:
            problems.append("period must divide one day")
        if not 0 < self.peak_illuminance <= ILLUMINANCE_MAX:
            problems.append(f"peak_illuminance must be in (0, {ILLUMINANCE_MAX}]")
        if any(v < 0 for v in vars(self.noise_sd).values()):
            problems.append("noise standard deviations must be >= 0")
        if self.cloud_events_per_day < 0 or self.panel_shading_events_per_day < 0:
            problems.append("event rates must be >= 0")
        if not 0 <= self.dawn_fog_probability <= 1 or self.dawn_fog_rise < 0:
            problems.append("dawn fog needs probability in [0, 1] and rise >= 0")
        if not -66 < self.latitude < 66:
            problems.append("latitude outside the always-rising-sun band")
        if self.voltage <= 0:
            problems.append("voltage must be positive")
        if not 0 <= self.seed < 2**64:
            problems.append("seed must fit in 64 unsigned bits")
        if problems:
            raise PipelineError("INVALID_CONFIG", "; ".join(problems))


def ground_truth_power(config: SynthConfig, lux, temp, hum):
    """Noise-free linear power before the clamp at zero."""
    c = config.panel_coeffs
    return c.a_lux * lux + c.b_temp * temp + c.c_hum * hum + c.intercept


def _day_length_hours(latitude: float, day_of_year: np.ndarray) -> np.ndarray:
    decl = np.radians(23.44) * np.sin(2 * np.pi * (284 + day_of_year) / 365.0)
    cos_w = np.clip(-np.tan(np.radians(latitude)) * np.tan(decl), -1.0, 1.0)
    return 2.0 * np.degrees(np.arccos(cos_w)) / 15.0


def _wander(rng, hours, sd, spacing):
    """Bounded random levels every ``spacing`` hours, linearly interpolated.

    Knot levels are uniform with standard deviation ``sd``.
    """
    knots = np.arange(hours[0] - spacing, hours[-1] + 2 * spacing, spacing)
    half_width = sd * np.sqrt(3.0)
    return np.interp(hours, knots, rng.uniform(-half_width, half_width, size=knots.size))


def _cloud_dips(rng, hours, sunrise, length, rate):
    """Transmission factor in (0, 1] with smooth random daytime dips."""
    transmission = np.ones(hours.size)
    for d in range(sunrise.size):
        for _ in range(rng.poisson(rate)):
            centre = 24.0 * d + sunrise[d] + rng.uniform(0.0, length[d])
            width = rng.uniform(0.5, 3.0)
            depth = rng.uniform(0.3, 0.9)
            dist = np.abs(hours - centre)
            bump = np.where(dist < width / 2, np.cos(np.pi * dist / width) ** 2, 0.0)
            transmission *= 1.0 - depth * bump
    return transmission


def _dawn_fog(rng, hours, sunrise, probability, rise):
    """Humidity bumps peaking at sunrise on a random subset of mornings."""
    foggy = rng.random(sunrise.size) < probability
    widths = rng.uniform(1.0, 3.0, sunrise.size)
    bump = np.zeros(hours.size)
    for d in np.flatnonzero(foggy):
        dist = np.abs(hours - (24.0 * d + sunrise[d]))
        bump += np.where(dist < widths[d], np.cos(0.5 * np.pi * dist / widths[d]) ** 2, 0.0)
    return rise * bump


def generate(config: SynthConfig) -> Dataset:
    rng = np.random.default_rng(config.seed)
    per_day = timedelta(days=1) // config.period
    n = config.days * per_day
    step_h = config.period.total_seconds() / 3600.0

    local_start = config.start.astimezone(LOCAL_TZ)
    start_hour = local_start.hour + local_start.minute / 60 + local_start.second / 3600
    hours = start_hour + step_h * np.arange(n)
    day = np.floor(hours / 24.0).astype(int)
    hod = hours - 24.0 * day

    doy0 = local_start.timetuple().tm_yday
    n_days = day[-1] + 1
    length = _day_length_hours(config.latitude, doy0 + np.arange(n_days))
    sunrise = 12.0 - length / 2.0
    phase = (hod - sunrise[day]) / length[day]
    clear = np.where((phase > 0) & (phase < 1), np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    clear *= config.peak_illuminance

    transmission = _cloud_dips(rng, hours, sunrise, length, config.cloud_events_per_day)
    lux_true = clear * transmission
    # Shade that reaches the panel but not the light sensor next to it.
    panel_lux = lux_true * _cloud_dips(
        rng, hours, sunrise, length, config.panel_shading_events_per_day
    )

    temp_wander = _wander(rng, hours, config.temp_wander_sd, config.wander_hours)
    temp_true = (
        config.temp_base
        + temp_wander
        + config.temp_amplitude * np.sin(2 * np.pi * (hod - 9.0) / 24.0)
    )
    hum_wander = _wander(rng, hours, config.humidity_wander_sd, config.wander_hours)

    unit_noise = rng.normal(0.0, 1.0, (4, n))
    # Drawn last so the fog settings leave every other random stream unchanged.
    fog = _dawn_fog(rng, hours, sunrise, config.dawn_fog_probability, config.dawn_fog_rise)
    hum_true = np.clip(
        config.humidity_base
        + config.humidity_temp_coupling * temp_wander
        + hum_wander
        - config.humidity_amplitude * np.sin(2 * np.pi * (hod - 12.0) / 24.0)
        + fog,
        0.0,
        100.0,
    )

    sd = config.noise_sd
    power = ground_truth_power(config, panel_lux, temp_true, hum_true)
    power = np.maximum(power + unit_noise[0] * sd.power, 0.0)
    lux = np.clip(lux_true + unit_noise[1] * sd.illuminance, 0.0, 1.05 * config.peak_illuminance)
    temp = temp_true + unit_noise[2] * sd.temperature
    hum = np.clip(hum_true + unit_noise[3] * sd.humidity, 0.0, 100.0)
    current = power / config.voltage

    records = [
        validate_record(MeasurementRecord(
            config.start + k * config.period,
            float(lux[k]),
            float(temp[k]),
            float(hum[k]),
            config.voltage,
            float(current[k]),
        ))
        for k in range(n)
    ]
    return Dataset(tuple(records), config.period)

