"""Calibration of oracle, constant and fitted forecasters on one simulated season,
and the spread of the oracle verdict across seeds.

    python3 scripts/calibration_demo.py --games 10000 --seeds 20 --svg out/
"""
import argparse
from pathlib import Path

import numpy as np

from fcast_eval import calibration, models, plots
from fcast_eval.simulator import SimConfig, simulate_arrays


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--games", type=int, default=10_000)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--svg", type=Path, default=None)
    args = ap.parse_args()

    print("seed  Ora(raw)  Ora(smoothed)")
    for seed in range(args.seeds):
        s = simulate_arrays(SimConfig(args.games, seed=seed, forecasters=("Ora",)))
        raw = calibration.calibrate(s.forecasts["Ora"], s.outcomes, grid=s.grid)
        sm = calibration.calibrate(s.forecasts["Ora"], s.outcomes, grid=s.grid, smooth=True)
        print(f"{seed:>4}  {raw.calibrated_fraction():8.3f}  {sm.calibrated_fraction():13.3f}")

    # fitted benchmarks: train on one season, evaluate on another
    train = simulate_arrays(SimConfig(args.games, seed=1000)).games()
    test = simulate_arrays(SimConfig(args.games, seed=1001, forecasters=("Ora",)))
    y, k = test.outcomes, len(test.grid)
    methods = {"Ora": test.forecasts["Ora"], "CF": np.full((y.size, k), 0.5),
               "HomeWP": np.full((y.size, k), 0.593)}
    for kind in ("PgRS", "ScD", "PgRSScD"):
        fitted = models.fit(models.ModelSpec(kind, "probit"), train)
        methods[kind] = models.predict_many(fitted, test.games())
    print("\nmethod    calibrated fraction (smoothed)")
    for name, P in methods.items():
        res = calibration.calibrate(P, y, grid=test.grid, smooth=True, method=name)
        print(f"{name:<9} {res.calibrated_fraction():.3f}")
        if args.svg:
            args.svg.mkdir(parents=True, exist_ok=True)
            plots.calibration_summary_plot(args.svg / f"calibration_{name}.svg", res, name)

    rep = calibration.extreme_report({k: v for k, v in methods.items()}, y)
    print("\nmethod    side  games  home wins  proportion")
    for row in rep.rows:
        print(f"{row[0]:<9} {row[1]:>4}  {row[2]:>5}  {row[3]:>9}  {row[4]:.4f}")


if __name__ == "__main__":
    main()
