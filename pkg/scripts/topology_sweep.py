"""Topology sweep over the four input/topology pairs on synthetic data.

Usage: python scripts/topology_sweep.py [--seed 42] [--days 120] [--jobs 1]
"""

import argparse
import time

from pvforecast.ann import TrainConfig
from pvforecast.core import SplitSpec
from pvforecast.experiment import standard_specs, run_sweep
from pvforecast.synthetic import SynthConfig, generate


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--days", type=int, default=120)
    parser.add_argument("--cycles", type=int, default=5000)
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    t0 = time.perf_counter()
    data = generate(SynthConfig(days=args.days, seed=args.seed))
    train = TrainConfig(max_cycles=args.cycles, seed=args.seed)
    specs = standard_specs(SplitSpec(seed=args.seed), train)
    result = run_sweep(data, specs, jobs=args.jobs)
    print(result.to_text(), end="")
    worst, best = result.rows[-1].test_rmse, result.rows[0].test_rmse
    print(f"\nworst/best RMSE ratio {worst / best:.2f}   ({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
