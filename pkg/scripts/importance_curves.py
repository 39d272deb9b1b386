"""Pseudo-R2 and drop-one variable importance of PgRSScD through the game.

    python3 scripts/importance_curves.py --games 2000 --link probit
"""
import argparse

import numpy as np

from fcast_eval import models
from fcast_eval.simulator import SimConfig, simulate_season


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--games", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--link", choices=["logit", "probit"], default="probit")
    ap.add_argument("--every", type=int, default=20, help="print every k-th grid point")
    args = ap.parse_args()

    games = simulate_season(SimConfig(args.games, seed=args.seed))
    fitted = models.fit(models.ModelSpec("PgRSScD", args.link), games)
    r2 = fitted.diagnostics["pseudo_r2"]
    imp = models.variable_importance(fitted, games)["raw"]
    t = fitted.grid.points
    print("    t  pseudoR2      RS     ScD  separated")
    for i in np.unique(np.r_[np.arange(0, t.size, args.every), t.size - 1]):
        print(f"{t[i]:5.2f}  {r2[i]:8.3f}  {imp['RS'][i]:6.3f}  {imp['ScD'][i]:6.3f}  {bool(fitted.separated[i])}")


if __name__ == "__main__":
    main()
