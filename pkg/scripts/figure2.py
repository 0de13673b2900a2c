"""Sobolev-exponent sweep on the 1D diffusion coefficient, p in {2, 1.6, 1.2}.

Smaller p should give a sharper reconstruction at a higher inner-solver cost.
"""

import argparse
import logging
from pathlib import Path

from irgn_banach.artifacts import plot_svg
from irgn_banach.core import RegSchedule, add_noise
from irgn_banach.experiments import DELTA, EPS, EXPONENTS, SEED, TAU, experiment_controls
from irgn_banach.forward import diffusion1d_paper
from irgn_banach.irgn import StoppingConfig, run
from irgn_banach.penalties import make_penalty
from irgn_banach.subproblem import InnerControls


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[SEED])
    parser.add_argument("--max-iter", type=int, default=2000, help="inner CG cap")
    parser.add_argument("--grad-tol", type=float, default=None,
                        help="relative inner tolerance (default: library default)")
    parser.add_argument("--out", type=Path, default=Path("out/figure2"))
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)

    prob = diffusion1d_paper()
    grid = prob.operator.grid
    controls = experiment_controls(grid.node_count, args.max_iter)
    if args.grad_tol is not None:
        controls = InnerControls(max_iter=args.max_iter, restart_period=grid.node_count,
                                 grad_tol_rel=args.grad_tol)
    args.out.mkdir(parents=True, exist_ok=True)
    print(f"{'seed':>4} {'p':>5} {'error':>10} {'n_delta':>8} {'inner':>8} {'capped':>7}")
    for seed in args.seeds:
        y = add_noise(prob.exact_data(), DELTA, seed)
        for p in EXPONENTS:
            pen = make_penalty("sobolev", grid, p=p, eps=EPS, anchor=prob.default_anchor)
            res = run(prob.operator, pen, y, DELTA, RegSchedule(1.0, 0.5), StoppingConfig(1, TAU),
                      truth=prob.truth, controls=controls)
            stem = f"seed{seed}_p{p:g}"
            (args.out / f"{stem}.csv").write_text(res.final.to_csv())
            (args.out / f"{stem}.svg").write_text(plot_svg(res.final, prob.truth, f"p={p:g}, seed {seed}"))
            print(f"{seed:>4} {p:>5g} {res.final_error:>10.4g} {res.n_delta!s:>8} "
                  f"{res.total_inner_iterations:>8} {len(res.warnings):>7}")


if __name__ == "__main__":
    main()
