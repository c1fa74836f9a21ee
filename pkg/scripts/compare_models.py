"""ANN against multiple linear regression on the same synthetic split.

Prints the ANOVA table of the linear fit and both test RMSEs, and
optionally writes the per-row estimates to CSV.
"""

import argparse

from pvforecast.ann import TrainConfig
from pvforecast.core import SplitSpec
from pvforecast.experiment import compare_models, standard_specs
from pvforecast.synthetic import SynthConfig, generate


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--days", type=int, default=120)
    parser.add_argument("--csv", help="write timestamp/actual/ANN/MLR rows here")
    args = parser.parse_args()

    data = generate(SynthConfig(days=args.days, seed=args.seed))
    spec = standard_specs(SplitSpec(seed=args.seed), TrainConfig(seed=args.seed))[0]
    cmp = compare_models(data, spec)
    print(cmp.anova.to_text())
    print(f"ANN {spec.topologies[0]} test RMSE: {cmp.ann_rmse:.4f}")
    print(f"MLR test RMSE: {cmp.mlr_rmse:.4f}")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(cmp.to_csv())


if __name__ == "__main__":
    main()
