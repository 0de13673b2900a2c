"""Reference experiments: penalty comparison on reaction1d, exponent sweep on diffusion1d."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

from .core import RegSchedule, add_noise
from .forward import diffusion1d_paper, reaction1d_paper
from .irgn import RunResult, StoppingConfig, run
from .penalties import make_penalty
from .subproblem import InnerControls

DELTA = 1e-4
TAU = 1.05
LAM = 0.01
EPS = 1e-6
SEED = 1
EXPONENTS = (2.0, 1.6, 1.2)
PENALTY_KINDS = ("l2", "elasticnet", "tv")


def experiment_controls(node_count: int, max_iter: int = 2000) -> InnerControls:
    """Inner CG controls for the reference experiments: restart every node_count steps."""
    return InnerControls(max_iter=max_iter, restart_period=node_count)


@dataclass(frozen=True)
class ExperimentRow:
    label: str
    error: float
    n_delta: Optional[int]
    inner_total: int
    stop_reason: str
    warnings: int


def _row(label, res: RunResult) -> ExperimentRow:
    return ExperimentRow(label, res.final_error, res.n_delta, res.total_inner_iterations,
                         res.stop_reason, len(res.warnings))


def penalty_comparison(seed: int = SEED, kinds: Sequence[str] = PENALTY_KINDS,
                       controls: Optional[InnerControls] = None,
                       subdivisions: int = 100) -> List[ExperimentRow]:
    """Reconstruct the piecewise-constant reaction coefficient with each penalty kind."""
    prob = reaction1d_paper(subdivisions)
    grid = prob.operator.grid
    controls = controls or experiment_controls(grid.node_count)
    y = add_noise(prob.exact_data(), DELTA, seed)
    rows = []
    for kind in kinds:
        pen = make_penalty(kind, grid, lam=LAM, eps=EPS)
        res = run(prob.operator, pen, y, DELTA, RegSchedule(1.0, 0.5), StoppingConfig(1, TAU),
                  truth=prob.truth, controls=controls)
        rows.append(_row(kind, res))
    return rows


def exponent_sweep(seed: int = SEED, exponents: Sequence[float] = EXPONENTS,
                   controls: Optional[InnerControls] = None,
                   subdivisions: int = 400) -> List[ExperimentRow]:
    """Reconstruct the diffusion coefficient with the Sobolev penalty for each exponent."""
    prob = diffusion1d_paper(subdivisions)
    grid = prob.operator.grid
    controls = controls or experiment_controls(grid.node_count)
    y = add_noise(prob.exact_data(), DELTA, seed)
    rows = []
    for p in exponents:
        pen = make_penalty("sobolev", grid, p=p, eps=EPS, anchor=prob.default_anchor)
        res = run(prob.operator, pen, y, DELTA, RegSchedule(1.0, 0.5), StoppingConfig(1, TAU),
                  truth=prob.truth, controls=controls)
        rows.append(_row(f"p={p:g}", res))
    return rows


def format_rows(rows: Sequence[ExperimentRow]) -> str:
    lines = [f"{'run':<12} {'error':>10} {'n_delta':>8} {'inner':>8} {'capped':>7}  stop"]
    for r in rows:
        lines.append(f"{r.label:<12} {r.error:>10.4g} {str(r.n_delta):>8} {r.inner_total:>8} "
                     f"{r.warnings:>7}  {r.stop_reason}")
    return "\n".join(lines)
