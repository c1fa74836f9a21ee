"""Normalized illuminance RMSE between a logger and a reference station.

With no files given, two synthetic logs with independent noise stand in
for the logger and the station.
"""

import argparse
from dataclasses import replace
from datetime import timedelta

from pvforecast.experiment import compare_station
from pvforecast.ingestion import load_csv
from pvforecast.synthetic import SynthConfig, generate


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--prototype", help="logger CSV")
    parser.add_argument("--station", help="station CSV")
    parser.add_argument("--variable", default="illuminance")
    parser.add_argument("--tolerance-min", type=float, default=2.5)
    args = parser.parse_args()

    if args.prototype and args.station:
        prototype, station = load_csv(args.prototype), load_csv(args.station)
    else:
        base = SynthConfig(days=30)
        prototype = generate(base)
        station = generate(replace(base, seed=base.seed + 1, cloud_events_per_day=0.0))
    err, report = compare_station(
        prototype, station, args.variable, timedelta(minutes=args.tolerance_min)
    )
    print(f"matched {report.matched_count} pairs "
          f"(dropped {report.dropped_left} / {report.dropped_right}), "
          f"max skew {report.max_time_skew:g} s")
    print(f"normalized RMSE: {err:.4f}")


if __name__ == "__main__":
    main()
