"""Command-line entry point: ``dsp generate | solve | metrics | benchmark``.

Exit codes: 0 success, 2 usage or validation error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .baselines import run_monolithic
from .datagen import GeneratorConfig, generate_instance, summary
from .decomposition import run_decomposition
from .errors import DSPError, SubSolverFailure, TargetBoundsInfeasible, TooLarge
from .io import atomic_write_text, read_discounts, read_instance, write_discounts, write_instance
from .metrics import DEFAULT_QUANTILES, full_report, write_report_csv
from .model import DiscountScheme, Instance
from .postprocess import PostProcessConfig, write_change_log
from .relaxation import solve_global
from .solvers import SolverBudget

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3
SOLVERS = ("decomp-sa", "decomp-exhaustive", "sa-monolithic", "random")
SOLVER_FAILURES = (SubSolverFailure, TargetBoundsInfeasible, TooLarge)

BENCHMARK_VERSION = 1
BENCHMARK_KEY = ("n_customers", "m", "solver", "seed")


def default_seed() -> int:
    return int(os.environ.get("DSP_SEED", "0"))


@dataclass(frozen=True)
class RunConfig:
    solver: str = "decomp-sa"
    chunk_size: int | None = None
    time_limit: float | None = None  # total; None means 0.1 s per customer
    sweeps: int | None = None
    restarts: int = 1
    seed: int = 0
    cutoff: int = 500
    passes: int = 1
    postprocess: bool = True
    balance_weight: float = 10.0

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        if self.solver.startswith("decomp") and self.chunk_size is None:
            raise ValueError(f"solver {self.solver} requires a chunk size (-m)")

    def budget(self, instance: Instance) -> SolverBudget:
        limit = self.time_limit
        if limit is None and self.sweeps is None:
            limit = 0.1 * instance.n_customers
        return SolverBudget(time_limit=limit, sweep_count=self.sweeps, restarts=self.restarts, seed=self.seed)

    def postprocess_config(self) -> PostProcessConfig | None:
        return PostProcessConfig(cutoff=self.cutoff, passes=self.passes) if self.postprocess else None


def run_solver(instance: Instance, cfg: RunConfig) -> dict:
    """Run one configured solve; returns z plus report fields."""
    budget = cfg.budget(instance)
    if cfg.solver == "sa-monolithic":
        res = run_monolithic(instance, budget, cfg.balance_weight, cfg.postprocess_config())
        extra = {"energy": res.energy, "power_hinge_sq_before_postprocess": res.power_hinge_sq}
        return dict(z=res.z, profile=res.profile, post=res.postprocess, wall=res.wall_seconds, extra=extra)
    sub = {"decomp-sa": "sa", "decomp-exhaustive": "exhaustive", "random": "random"}[cfg.solver]
    m = cfg.chunk_size if cfg.chunk_size is not None else instance.n_customers
    res = run_decomposition(instance, m, sub, budget, cfg.postprocess_config())
    extra = {"energy": float(sum(c.energy for c in res.report.chunks)), "decomposition": res.report.to_dict()}
    return dict(z=res.z, profile=res.profile, post=res.postprocess, wall=res.report.wall_seconds, extra=extra)


# -- commands -----------------------------------------------------------------


def _generator_config(args) -> GeneratorConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    flags = {
        "n_customers": args.customers,
        "n_timesteps": args.timesteps,
        "pv_fraction": args.pv_fraction,
        "residential_fraction": args.residential_fraction,
        "noise_level": args.noise,
        "dp_fraction": args.dp_fraction,
        "elasticity": args.elasticity,
    }
    data.update({k: v for k, v in flags.items() if v is not None})
    if args.n_categories is not None or args.z_max is not None:
        scheme = dict(data.get("scheme", {}))
        if args.n_categories is not None:
            scheme["n_categories"] = args.n_categories
        if args.z_max is not None:
            scheme["z_max"] = args.z_max
        data["scheme"] = scheme
    data["seed"] = args.seed if args.seed is not None else data.get("seed", default_seed())
    return GeneratorConfig.from_dict(data)


def cmd_generate(args) -> int:
    inst = generate_instance(_generator_config(args))
    write_instance(inst, args.output)
    print(json.dumps(summary(inst), indent=1))
    return EXIT_OK


def _run_config(args) -> RunConfig:
    return RunConfig(
        solver=args.solver,
        chunk_size=args.chunk_size,
        time_limit=args.time_limit,
        sweeps=args.sweeps,
        restarts=args.restarts,
        seed=args.seed if args.seed is not None else default_seed(),
        cutoff=args.cutoff,
        passes=args.passes,
        postprocess=not args.no_postprocess,
        balance_weight=args.balance_weight,
    )


def cmd_solve(args) -> int:
    cfg = _run_config(args)
    inst = read_instance(args.instance)
    try:
        out = run_solver(inst, cfg)
    except SOLVER_FAILURES as exc:
        cause = f" ({type(exc.__cause__).__name__})" if exc.__cause__ is not None else ""
        print(f"solver failure: {type(exc).__name__}{cause}: {exc}", file=sys.stderr)
        if isinstance(exc, TooLarge) or isinstance(exc.__cause__, TooLarge):
            print("hint: use a smaller chunk size or --solver decomp-sa", file=sys.stderr)
        return EXIT_SOLVER
    write_discounts(out["z"], args.output)
    report = {
        "config": cfg.__dict__,
        "wall_seconds": out["wall"],
        **out["extra"],
        "metrics": full_report(inst, out["z"], out["profile"]).to_dict(),
    }
    if out["post"] is not None:
        report["postprocess_max_candidates"] = out["post"].max_candidates
        if args.change_log:
            write_change_log(out["post"].moves, args.change_log)
    report_path = args.report or str(Path(args.output).with_suffix(".report.json"))
    atomic_write_text(report_path, json.dumps(report, indent=1) + "\n")
    m = report["metrics"]
    print(f"co2_reduction_error={m['co2_reduction_error']:.6g} feasible={m['feasibility']['feasible']} "
          f"wall={out['wall']:.3f}s -> {args.output}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    inst = read_instance(args.instance)
    z = read_discounts(args.solution, inst)
    rep = full_report(inst, z, solve_global(inst))
    text = rep.to_json(indent=1)
    print(text)
    if args.json:
        atomic_write_text(args.json, text + "\n")
    if args.csv:
        write_report_csv(rep, args.csv)
    return EXIT_OK


# -- benchmark ----------------------------------------------------------------


def benchmark_columns() -> list:
    metric_cols = [
        "relative_cost_error", "co2_reduction_error", "consumption_deviation_std",
        "avg_discount_changes", "mean_relative_savings",
    ] + [f"savings_q{q:g}" for q in DEFAULT_QUANTILES] + [
        "global_deviation", "weighted_global_deviation", "n_power_violations", "feasible",
    ]
    return list(BENCHMARK_KEY) + ["n_timesteps", "status", "error", "wall_seconds"] + metric_cols


def _read_rows(path) -> list:
    if not Path(path).exists():
        return []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _write_rows(path, rows) -> None:
    buf = _io.StringIO()
    buf.write(f"# dsp-benchmark schema v{BENCHMARK_VERSION}\n")
    w = csv.DictWriter(buf, fieldnames=benchmark_columns(), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    atomic_write_text(path, buf.getvalue())


def _benchmark_cell(cell: dict) -> dict:
    n_c, m, solver, seed, n_t = cell["n_customers"], cell["m"], cell["solver"], cell["seed"], cell["n_timesteps"]
    row = {k: "" for k in benchmark_columns()}
    row.update(n_customers=n_c, m=m, solver=solver, seed=seed, n_timesteps=n_t)
    started = time.perf_counter()
    try:
        inst = generate_instance(GeneratorConfig(
            n_customers=n_c, n_timesteps=n_t, seed=seed,
            scheme=DiscountScheme(n_categories=cell["n_categories"]),
        ))
        cfg = RunConfig(
            solver=solver, chunk_size=m, seed=seed,
            time_limit=cell["time_factor"] * n_c, restarts=cell["restarts"],
        )
        out = run_solver(inst, cfg)
        row.update(full_report(inst, out["z"], out["profile"]).flat_row())
        row["status"] = "ok"
    except Exception as exc:  # per-run failures become rows
        row["status"] = type(exc).__name__
        row["error"] = str(exc).replace("\n", " ")[:300]
    row["wall_seconds"] = time.perf_counter() - started
    return row


def benchmark_cells(args) -> list:
    cells = []
    for n_c in args.customers:
        for solver in args.solvers:
            sizes = [n_c] if solver == "sa-monolithic" else args.chunk_sizes
            for m in sizes:
                if m > n_c or n_c % m:
                    continue
                for seed in args.seeds:
                    cells.append(dict(
                        n_customers=n_c, m=m, solver=solver, seed=seed, n_timesteps=args.timesteps,
                        n_categories=args.n_categories, time_factor=args.time_factor, restarts=args.restarts,
                    ))
    return cells


def cmd_benchmark(args) -> int:
    for s in args.solvers:
        if s not in SOLVERS:
            print(f"unknown solver {s!r}; choose from {SOLVERS}", file=sys.stderr)
            return EXIT_USAGE
    cells = benchmark_cells(args)
    if not cells:
        print("empty benchmark grid", file=sys.stderr)
        return EXIT_USAGE
    rows = _read_rows(args.output)
    done = {tuple(str(r[k]) for k in BENCHMARK_KEY) for r in rows}
    todo = [c for c in cells if tuple(str(c[k]) for k in BENCHMARK_KEY) not in done]
    print(f"{len(cells)} runs in grid, {len(cells) - len(todo)} already present", file=sys.stderr)

    def record(row):
        rows.append(row)
        _write_rows(args.output, rows)
        print(f"N_C={row['n_customers']} m={row['m']} {row['solver']} seed={row['seed']}: {row['status']} "
              f"co2_err={row['co2_reduction_error']}", file=sys.stderr)

    if args.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for row in pool.map(_benchmark_cell, todo):
                record(row)
    else:
        for cell in todo:
            record(_benchmark_cell(cell))
    if not rows:
        _write_rows(args.output, rows)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dsp", description="CO2-aware dynamic tariff scheduling via chunked QUBOs")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic instance")
    g.add_argument("--config", help="JSON file with generator options")
    g.add_argument("--customers", type=int)
    g.add_argument("--timesteps", type=int)
    g.add_argument("--pv-fraction", type=float)
    g.add_argument("--residential-fraction", type=float)
    g.add_argument("--noise", type=float)
    g.add_argument("--dp-fraction", type=float)
    g.add_argument("--elasticity", type=float)
    g.add_argument("--n-categories", type=int)
    g.add_argument("--z-max", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve an instance")
    s.add_argument("instance")
    s.add_argument("--solver", default="decomp-sa", choices=SOLVERS)
    s.add_argument("-m", "--chunk-size", type=int)
    s.add_argument("--time-limit", type=float, help="total budget in seconds (default 0.1 s per customer)")
    s.add_argument("--sweeps", type=int, help="fixed sweep count per sub-solve instead of a time limit")
    s.add_argument("--restarts", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.add_argument("--cutoff", type=int, default=500, help="post-processing candidate cutoff r")
    s.add_argument("--passes", type=int, default=1)
    s.add_argument("--no-postprocess", action="store_true")
    s.add_argument("--balance-weight", type=float, default=10.0, help="sa-monolithic balance penalty weight")
    s.add_argument("-o", "--output", required=True, help="discount matrix CSV")
    s.add_argument("--report", help="run report JSON (default: <output>.report.json)")
    s.add_argument("--change-log", help="post-processing change log CSV")
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("metrics", help="evaluate a solution")
    m.add_argument("instance")
    m.add_argument("solution")
    m.add_argument("--json")
    m.add_argument("--csv")
    m.set_defaults(func=cmd_metrics)

    b = sub.add_parser("benchmark", help="sweep instance sizes, chunk sizes, solvers and seeds")
    b.add_argument("--customers", type=_int_list, default=[25, 50, 100, 200, 400])
    b.add_argument("--chunk-sizes", type=_int_list, default=[5, 25, 50])
    b.add_argument("--solvers", type=lambda t: [x for x in t.split(",") if x], default=["decomp-sa", "sa-monolithic"])
    b.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    b.add_argument("--timesteps", type=int, default=76)
    b.add_argument("--n-categories", type=int, default=5)
    b.add_argument("--time-factor", type=float, default=0.1, help="seconds of budget per customer (0.5 for the chunk-size study)")
    b.add_argument("--restarts", type=int, default=1)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("-o", "--output", required=True)
    b.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SOLVER_FAILURES as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DSPError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
