"""Command line entry point: ``irgn run | verify | sweep``.

Configuration is a single JSON document.  Values are resolved with the
precedence flags > config file > preset defaults.  A run's ``meta.json``
embeds its resolved configuration, so ``irgn run --config meta.json``
replays it.

Exit codes: 0 stopping rule satisfied (or all checks passed), 1 invalid
configuration or failed verification, 2 stopped by ``max_outer``,
3 inner-solver failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .artifacts import history_to_csv, plot_svg, sweep_to_csv, write_json
from .core import Field, RegSchedule, add_noise, field_from_csv, l2_norm
from .forward import OPERATOR_KINDS, PRESETS, custom_problem, get_preset
from .irgn import INNER_FAILURE, MAX_OUTER, RULE_SATISFIED, StoppingConfig, run, scaling_check
from .penalties import KINDS, make_penalty
from .subproblem import InnerControls

log = logging.getLogger("irgn_banach")

EXIT_OK, EXIT_CONFIG, EXIT_MAX_OUTER, EXIT_INNER = 0, 1, 2, 3
EXIT_CODES = {RULE_SATISFIED: EXIT_OK, MAX_OUTER: EXIT_MAX_OUTER, INNER_FAILURE: EXIT_INNER}

BASE_CONFIG = {
    "problem": {"preset": "reaction1d-paper"},
    "penalty": {"kind": "tv", "lambda": 0.01, "epsilon": 1e-6, "p_exponent": 2.0, "anchor": None},
    "schedule": {"alpha0": 1.0, "ratio": 0.5},
    "stopping": {"rule": 1, "tau": 1.05, "max_outer": 60},
    "noise": {"delta": 1e-4, "seed": 1},
    "inner": {"max_iter": 500, "grad_tol_rel": 1e-8, "restart_period": 50},
    "residual_exponent": 2.0,
}

PRESET_DEFAULTS = {
    "reaction1d-paper": {"penalty": {"kind": "tv"}},
    "reaction2d-paper": {"penalty": {"kind": "tv"}},
    "diffusion1d-paper": {"penalty": {"kind": "sobolev", "p_exponent": 2.0}},
}

# flag destination -> config path
FLAG_KEYS = {
    "penalty": ("penalty", "kind"),
    "lam": ("penalty", "lambda"),
    "eps": ("penalty", "epsilon"),
    "p": ("penalty", "p_exponent"),
    "anchor": ("penalty", "anchor"),
    "delta": ("noise", "delta"),
    "seed": ("noise", "seed"),
    "tau": ("stopping", "tau"),
    "rule": ("stopping", "rule"),
    "max_outer": ("stopping", "max_outer"),
    "alpha0": ("schedule", "alpha0"),
    "ratio": ("schedule", "ratio"),
    "max_iter": ("inner", "max_iter"),
    "grad_tol": ("inner", "grad_tol_rel"),
    "restart": ("inner", "restart_period"),
    "residual_exponent": ("residual_exponent",),
}


class ConfigError(ValueError):
    def __init__(self, violations: List[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _set(config: dict, path, value):
    node = config
    for key in path[:-1]:
        node = node.setdefault(key, {})
    node[path[-1]] = value


def load_config_file(path) -> dict:
    try:
        document = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"config: cannot read {path}: {exc}"]) from None
    if not isinstance(document, dict):
        raise ConfigError(["config: top level must be a JSON object"])
    # a run's meta.json carries its configuration under "config"
    return document["config"] if "config" in document else document


def resolve_config(args: Optional[argparse.Namespace] = None, file_config: Optional[dict] = None) -> dict:
    """Merge preset defaults, the config file and flags; does not validate."""
    file_config = file_config or {}
    preset = None
    if args is not None and getattr(args, "preset", None):
        preset = args.preset
    elif "preset" in file_config.get("problem", {}):
        preset = file_config["problem"]["preset"]
    elif "problem" not in file_config:
        preset = BASE_CONFIG["problem"]["preset"]
    config = copy.deepcopy(BASE_CONFIG)
    if preset is not None:
        config = _merge(config, PRESET_DEFAULTS.get(preset, {}))
    config = _merge(config, file_config)
    if preset is not None:
        config["problem"] = {"preset": preset}
    if args is not None:
        for dest, path in FLAG_KEYS.items():
            value = getattr(args, dest, None)
            if value is not None:
                _set(config, path, value)
        if getattr(args, "out", None):
            config["output"] = args.out
    return config


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _is_real(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


def validate_config(config: dict) -> List[str]:
    """Return one message per violated precondition (empty when valid)."""
    v: List[str] = []
    known = set(BASE_CONFIG) | {"output"}
    v += [f"config: unknown key '{k}'" for k in config if k not in known]
    for section in ("penalty", "schedule", "stopping", "noise", "inner"):
        if not isinstance(config.get(section), dict):
            v.append(f"{section}: must be an object")
            return v
        v += [f"{section}: unknown key '{k}'" for k in config[section] if k not in BASE_CONFIG[section]]

    problem = config.get("problem", {})
    if "preset" in problem:
        if problem["preset"] not in PRESETS:
            v.append(f"problem.preset: unknown preset '{problem['preset']}' (choose from {', '.join(sorted(PRESETS))})")
    else:
        if problem.get("kind") not in OPERATOR_KINDS:
            v.append(f"problem.kind: must be one of {', '.join(sorted(OPERATOR_KINDS))}")
        for key in ("source", "boundary", "truth"):
            path = problem.get(key)
            if not isinstance(path, str) or not Path(path).is_file():
                v.append(f"problem.{key}: field CSV file not found ({path!r})")

    pen = config["penalty"]
    if pen.get("kind") not in KINDS:
        v.append(f"penalty.kind: must be one of {', '.join(KINDS)}")
    if not (_is_real(pen.get("lambda")) and pen["lambda"] >= 0):
        v.append("penalty.lambda: must be a nonnegative number")
    if not (_is_real(pen.get("epsilon")) and pen["epsilon"] > 0):
        v.append("penalty.epsilon: must be positive")
    if not (_is_real(pen.get("p_exponent")) and pen["p_exponent"] > 1):
        v.append("penalty.p_exponent: must exceed 1")
    anchor = pen.get("anchor")
    if anchor is not None and not (isinstance(anchor, str) and Path(anchor).is_file()):
        v.append(f"penalty.anchor: field CSV file not found ({anchor!r})")

    sched = config["schedule"]
    if not (_is_real(sched.get("alpha0")) and sched["alpha0"] > 0):
        v.append("schedule.alpha0: must be positive")
    if not (_is_real(sched.get("ratio")) and 0 < sched["ratio"] < 1):
        v.append("schedule.ratio: must lie in (0, 1)")

    stop = config["stopping"]
    if stop.get("rule") not in (1, 2, 3) or not _is_int(stop.get("rule")):
        v.append("stopping.rule: must be 1, 2 or 3")
    if not (_is_real(stop.get("tau")) and stop["tau"] > 1):
        v.append("stopping.tau: must exceed 1")
    if not (_is_int(stop.get("max_outer")) and stop["max_outer"] >= 0):
        v.append("stopping.max_outer: must be a nonnegative integer")

    noise = config["noise"]
    if not (_is_real(noise.get("delta")) and noise["delta"] >= 0):
        v.append("noise.delta: must be a nonnegative number")
    if not (_is_int(noise.get("seed")) and noise["seed"] >= 0):
        v.append("noise.seed: must be a nonnegative integer")

    inner = config["inner"]
    if not (_is_int(inner.get("max_iter")) and inner["max_iter"] >= 1):
        v.append("inner.max_iter: must be a positive integer")
    if not (_is_real(inner.get("grad_tol_rel")) and inner["grad_tol_rel"] > 0):
        v.append("inner.grad_tol_rel: must be positive")
    if not (_is_int(inner.get("restart_period")) and inner["restart_period"] >= 1):
        v.append("inner.restart_period: must be a positive integer")

    if not (_is_real(config.get("residual_exponent")) and config["residual_exponent"] >= 1):
        v.append("residual_exponent: must be >= 1")
    return v


def build_problem(config: dict):
    problem = config["problem"]
    if "preset" in problem:
        return get_preset(problem["preset"])
    return custom_problem(problem["kind"], field_from_csv(problem["source"]),
                          field_from_csv(problem["boundary"]), field_from_csv(problem["truth"]))


def execute(config: dict):
    """Run one configured reconstruction; returns ``(problem, data, result)``."""
    violations = validate_config(config)
    if violations:
        raise ConfigError(violations)
    problem = build_problem(config)
    op = problem.operator
    pen_cfg = config["penalty"]
    anchor = field_from_csv(pen_cfg["anchor"]) if pen_cfg["anchor"] else problem.default_anchor
    if anchor.grid != op.grid:
        raise ConfigError(["penalty.anchor: grid does not match the problem grid"])
    try:
        op.check_admissible(anchor)
    except ValueError as exc:
        raise ConfigError([f"penalty.anchor: not admissible for the operator ({exc})"]) from None
    penalty = make_penalty(pen_cfg["kind"], op.grid, lam=pen_cfg["lambda"], eps=pen_cfg["epsilon"],
                           p=pen_cfg["p_exponent"], anchor=anchor)
    delta = config["noise"]["delta"]
    exact = problem.exact_data()
    data = add_noise(exact, delta, config["noise"]["seed"]) if delta > 0 else exact
    schedule = RegSchedule(config["schedule"]["alpha0"], config["schedule"]["ratio"])
    stop = config["stopping"]
    controls = InnerControls(**config["inner"])
    result = run(op, penalty, data, delta, schedule,
                 StoppingConfig(stop["rule"], stop["tau"], stop["max_outer"]),
                 truth=problem.truth, p=config["residual_exponent"], controls=controls)
    return problem, penalty, data, result


def write_run(out: Path, config: dict, problem, result, extra: Optional[dict] = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "history.csv").write_text(history_to_csv(result.records))
    (out / "reconstruction.csv").write_text(result.final.to_csv())
    record = config.copy()
    record.pop("output", None)
    meta = {
        "config": record,
        "seed": config["noise"]["seed"],
        "stop_reason": result.stop_reason,
        "stop_indices": {str(k): v for k, v in result.stop_indices.items()},
        "n_delta": result.n_delta,
        "final_residual": result.records[-1].residual,
        "final_error": result.final_error,
        "total_inner_iterations": result.total_inner_iterations,
        "warnings": result.warnings,
        "version": __version__,
    }
    meta.update(extra or {})
    write_json(out / "meta.json", meta)
    title = (f"{problem.name}, {config['penalty']['kind']}, delta={config['noise']['delta']:g}, "
             f"n={result.records[-1].n}")
    (out / "plot.svg").write_text(plot_svg(result.final, problem.truth, title))


# --- commands ---------------------------------------------------------------

def _config_from_args(args) -> dict:
    file_config = load_config_file(args.config) if args.config else None
    return resolve_config(args, file_config)


def _report_violations(violations: Sequence[str]) -> int:
    for line in violations:
        print(f"error: {line}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_run(args) -> int:
    try:
        config = _config_from_args(args)
        violations = validate_config(config)
        if violations:
            return _report_violations(violations)
        problem, penalty, _, result = execute(config)
    except ConfigError as exc:
        return _report_violations(exc.violations)
    if args.scaling_check:
        schedule = RegSchedule(config["schedule"]["alpha0"], config["schedule"]["ratio"])
        print(scaling_check(problem.operator, penalty, schedule, config["residual_exponent"]))
    out = Path(config.get("output") or "out")
    write_run(out, config, problem, result)
    last = result.records[-1]
    err = "" if last.error_to_truth is None else f" error={last.error_to_truth:.6g}"
    print(f"{result.stop_reason}: n={last.n} residual={last.residual:.6g}{err} "
          f"inner={result.total_inner_iterations} -> {out}")
    for w in result.warnings:
        log.info(w)
    return EXIT_CODES[result.stop_reason]


def _sweep_job(job):
    config, out = job
    try:
        problem, _, _, result = execute(config)
    except Exception as exc:  # recorded, the sweep continues
        return {"delta": config["noise"]["delta"], "seed": config["noise"]["seed"], "n1": None,
                "n2": None, "n3": None, "stop_reason": f"error: {exc}".replace(",", ";"), "error": None}
    if out is not None:
        write_run(Path(out), config, problem, result)
    idx = result.stop_indices
    return {"delta": config["noise"]["delta"], "seed": config["noise"]["seed"],
            "n1": idx[1], "n2": idx[2], "n3": idx[3],
            "stop_reason": result.stop_reason, "error": result.final_error}


def _parse_deltas(text: str) -> List[float]:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def cmd_sweep(args) -> int:
    try:
        config = _config_from_args(args)
        deltas = _parse_deltas(args.deltas)
    except ConfigError as exc:
        return _report_violations(exc.violations)
    except ValueError:
        return _report_violations([f"--deltas: cannot parse {args.deltas!r}"])
    violations = validate_config(config)
    if not deltas or any(d <= 0 for d in deltas) or any(a <= b for a, b in zip(deltas, deltas[1:])):
        violations.append("--deltas: must be positive and strictly decreasing")
    if args.seeds < 1 or args.jobs < 1:
        violations.append("--seeds and --jobs must be positive")
    if violations:
        return _report_violations(violations)
    out = Path(config.get("output") or "out")
    out.mkdir(parents=True, exist_ok=True)
    base_seed = config["noise"]["seed"]
    jobs = []
    for d in deltas:
        for s in range(base_seed, base_seed + args.seeds):
            c = copy.deepcopy(config)
            c["noise"]["delta"], c["noise"]["seed"] = d, s
            jobs.append((c, out / f"delta_{d:g}_seed_{s}"))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    (out / "sweep.csv").write_text(sweep_to_csv(rows))
    for row in rows:
        err = "" if row["error"] is None else f"{row['error']:.6g}"
        print(f"delta={row['delta']:g} seed={row['seed']} n=({row['n1']},{row['n2']},{row['n3']}) "
              f"{row['stop_reason']} error={err}")
    reasons = {row["stop_reason"] for row in rows}
    if any(r.startswith("error") for r in reasons) or INNER_FAILURE in reasons:
        return EXIT_INNER
    return EXIT_MAX_OUTER if MAX_OUTER in reasons else EXIT_OK


def cmd_verify(args) -> int:
    from . import verify
    if args.suite == "derivatives":
        presets = [args.preset] if args.preset else sorted(PRESETS)
        reports = [verify.derivative_suite(p) for p in presets]
        if not args.preset:
            reports.append(verify.derivative_suite("reaction1d-paper", at_lower_bound=True))
    elif args.suite == "penalties":
        reports = [verify.penalty_suite(), verify.penalty_suite(grid=verify.Grid(2, 6))]
    else:
        spec = verify.RateTestSpec(nu=args.nu, rule=args.rule, seeds=args.seeds)
        report = verify.rate_test(spec, jobs=args.jobs)
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            verify.write_rates_csv(report, Path(args.out) / "rates.csv")
        reports = [report]
    for r in reports:
        print(r.format())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CONFIG


# --- argument parsing ---------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are configuration errors (exit 1), not "max_outer"
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help=f"problem preset ({', '.join(sorted(PRESETS))})")
    p.add_argument("--config", metavar="FILE", help="JSON config (a run's meta.json also works)")
    p.add_argument("--penalty", help=f"penalty kind ({'|'.join(KINDS)})")
    p.add_argument("--lambda", dest="lam", type=float, help="weight of the quadratic part")
    p.add_argument("--eps", type=float, help="smoothing parameter epsilon")
    p.add_argument("--p", type=float, help="Sobolev penalty exponent")
    p.add_argument("--anchor", help="field CSV with the initial guess x0")
    p.add_argument("--delta", type=float, help="noise level")
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("--tau", type=float, help="discrepancy factor tau > 1")
    p.add_argument("--rule", type=int, help="stopping rule 1, 2 or 3")
    p.add_argument("--max-outer", dest="max_outer", type=int, help="cap on outer iterations")
    p.add_argument("--alpha0", type=float, help="first regularization parameter")
    p.add_argument("--ratio", type=float, help="alpha_{n+1} / alpha_n")
    p.add_argument("--inner-max-iter", dest="max_iter", type=int, help="CG iteration cap")
    p.add_argument("--inner-grad-tol", dest="grad_tol", type=float, help="relative CG gradient tolerance")
    p.add_argument("--inner-restart", dest="restart", type=int, help="CG restart period")
    p.add_argument("--residual-exponent", dest="residual_exponent", type=float,
                   help="power of the data misfit norm (default 2)")
    p.add_argument("--out", metavar="DIR", help="output directory (default ./out)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="irgn", description="Iteratively regularized Gauss-Newton reconstructions.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="one reconstruction")
    _add_run_options(p_run)
    p_run.add_argument("--scaling-check", action="store_true",
                       help="print the operator-norm scaling advisory before running")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="reconstructions over a list of noise levels")
    _add_run_options(p_sweep)
    p_sweep.add_argument("--deltas", required=True, help="comma separated, strictly decreasing")
    p_sweep.add_argument("--seeds", type=int, default=1, help="seeds per delta, counting up from --seed")
    p_sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    p_sweep.set_defaults(func=cmd_sweep)

    p_ver = sub.add_parser("verify", help="verification suites")
    p_ver.add_argument("suite", choices=["derivatives", "penalties", "rates"])
    p_ver.add_argument("--preset", help="derivatives: check one preset only")
    p_ver.add_argument("--nu", type=float, default=1.0, help="rates: source exponent (1 or 0.5)")
    p_ver.add_argument("--rule", type=int, default=3, choices=[2, 3], help="rates: stopping rule")
    p_ver.add_argument("--seeds", type=int, default=5, help="rates: seeds per delta")
    p_ver.add_argument("--jobs", type=int, default=1, help="rates: worker processes")
    p_ver.add_argument("--out", metavar="DIR", help="rates: directory for rates.csv")
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
