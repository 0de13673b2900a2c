"""Convergence-rate experiment on the synthetic diagonal problem for both source exponents."""

import argparse
import logging
from pathlib import Path

from irgn_banach.verify import RateTestSpec, rate_test, write_rates_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nu", type=float, nargs="+", default=[1.0, 0.5])
    parser.add_argument("--rule", type=int, default=3, choices=[2, 3])
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", type=Path, default=Path("out/rates"))
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)

    args.out.mkdir(parents=True, exist_ok=True)
    for nu in args.nu:
        report = rate_test(RateTestSpec(nu=nu, rule=args.rule, seeds=args.seeds), jobs=args.jobs)
        write_rates_csv(report, args.out / f"rates_nu{nu:g}.csv")
        print(report.format())


if __name__ == "__main__":
    main()
