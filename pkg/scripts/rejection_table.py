"""Empirical rejection rates of the functional skill test on simulated seasons.

    python3 scripts/rejection_table.py --replications 200 --seed 2026
"""
import argparse

from fcast_eval.simulator import rejection_study

PAIRINGS = ["Ora:OraBM", "OraBM1:OraBM2", "OraOU1:OraOU2", "PgRSScD:PgRS", "PgRSScD:LS", "PgRSScD:ScD"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[100, 250])
    ap.add_argument("--replications", type=int, default=200)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--mc-draws", type=int, default=100_000)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--pairing", nargs="+", default=PAIRINGS)
    args = ap.parse_args()

    print(f"{'pairing':<16}{'n':>5}{'10%':>8}{'5%':>8}{'1%':>8}")
    for pairing in args.pairing:
        for n in args.n:
            rep = rejection_study(pairing, n, args.replications, seed=args.seed,
                                  mc_draws=args.mc_draws, threads=args.threads)
            r = rep.rates
            print(f"{pairing:<16}{n:>5}{r[0.10]:>8.3f}{r[0.05]:>8.3f}{r[0.01]:>8.3f}", flush=True)


if __name__ == "__main__":
    main()
