"""Photovoltaic power estimation from illuminance, temperature and humidity."""

__version__ = "0.1.0"

from pvforecast.core import (  # noqa: F401
    DataMatrix,
    Dataset,
    Flag,
    MeasurementRecord,
    SplitSpec,
    split_dataset,
    validate_record,
)
from pvforecast.errors import PipelineError  # noqa: F401
