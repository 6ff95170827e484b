"""Benchmark harness: batch integration runs, convergence studies and
worker-scaling measurements, written as CSV plus a JSON summary.

Exit codes: 0 success, 2 configuration error, 3 I/O error. Per-system step
size underflow is reported in the summary and does not change the exit code.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .batch import integrate_batch, outer_loop
from .layout import BatchStates
from .problem import SolverChoice, ToleranceSettings
from .problems import BENCHMARKS, benchmark, perturb_initial_conditions
from .rkc import rkc_fixed
from .rkck import rkck_fixed

log = logging.getLogger("batchode.cli")

EXIT_CONFIG = 2
EXIT_IO = 3

DEFAULT_LADDERS = {
    SolverChoice.RKCK: (0.1, 0.05, 0.025, 0.0125),
    SolverChoice.RKC: (0.05, 0.025, 0.0125, 0.00625),
}
EXPECTED_ORDER = {SolverChoice.RKCK: 5, SolverChoice.RKC: 2}


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    return "%.17g" % x


@dataclass
class RunConfig:
    problem: str = "pleiades"
    solver: SolverChoice = SolverChoice.RKCK
    num_systems: int = 1024
    t0: float = 0.0
    t_end: float = 1.0
    outer_step: float = 0.1
    eps: float = 1.0e-10
    abs_tol: float = 1.0e-10
    rel_tol: float = 1.0e-6
    workers: int = 1
    seed: int = 0
    perturb: float = 0.01
    mode: str = "integrate"
    output: str = "results.csv"
    summary: str = "summary.json"
    heat_points: int = 64
    stages: int = 5
    ladder: Optional[tuple[float, ...]] = None

    def validate(self) -> "RunConfig":
        if self.problem not in BENCHMARKS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.mode not in ("integrate", "convergence", "scaling"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        for name in ("num_systems", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("eps", "abs_tol", "rel_tol", "outer_step"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive")
        if not self.t_end > self.t0:
            raise ConfigError("t-end must exceed t0")
        if not 0.0 <= self.perturb <= 0.1:
            raise ConfigError("perturb must lie in [0, 0.1]")
        if self.problem == "heat" and self.heat_points < 2:
            raise ConfigError("heat-points must be at least 2")
        if self.mode == "convergence":
            if self.problem not in ("expdecay", "harmonic"):
                raise ConfigError("convergence mode needs a problem with a closed-form solution")
            if self.stages < 2:
                raise ConfigError("stages must be at least 2")
            if self.ladder is not None and (
                not self.ladder or any(not (h > 0 and math.isfinite(h)) for h in self.ladder)
            ):
                raise ConfigError("ladder step sizes must be positive")
        if self.mode == "scaling" and self.num_systems < self.workers:
            raise ConfigError("scaling mode needs num-systems >= workers")
        return self

    def tolerances(self) -> ToleranceSettings:
        return ToleranceSettings(eps=self.eps, abs_tol=self.abs_tol, rel_tol=self.rel_tol)

    def echo(self) -> dict:
        out = dataclasses.asdict(self)
        out["solver"] = self.solver.value
        out["ladder"] = list(self.ladder) if self.ladder is not None else None
        return out


def _open_csv(path: str):
    return open(path, "w", newline="", encoding="ascii")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _build_batch(cfg: RunConfig):
    bench = benchmark(cfg.problem, cfg.heat_points)
    batch = perturb_initial_conditions(
        bench.initial, cfg.perturb, cfg.seed, cfg.num_systems, bench.params
    )
    return bench, batch


def _warm_up(cfg: RunConfig, bench, batch: BatchStates) -> None:
    # compile the kernels for this problem before any timing
    first = BatchStates(1, batch.dim, batch.system(0), batch.system_params(0), batch.param_dim)
    integrate_batch(
        bench.problem, first, cfg.t0, min(cfg.t_end, cfg.t0 + cfg.outer_step),
        cfg.solver, cfg.tolerances(), 1,
    )


def run_integrate(cfg: RunConfig) -> dict:
    bench, batch = _build_batch(cfg)
    _warm_up(cfg, bench, batch)
    with _open_csv(cfg.output) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["outer_step", "t", "system"] + [f"var{j}" for j in range(batch.dim)]
        )
        step = {"k": 0}

        def sink(t, snapshot: BatchStates):
            step["k"] += 1
            rows = snapshot.as_matrix()
            for i, row in enumerate(rows):
                writer.writerow([step["k"], fmt(t), i] + [fmt(v) for v in row])

        result = outer_loop(
            bench.problem, batch, cfg.t0, cfg.t_end, cfg.outer_step,
            cfg.solver, cfg.tolerances(), cfg.workers, sink,
        )
    summary = {
        "mode": "integrate",
        "config": cfg.echo(),
        "workers": cfg.workers,
        "outer_steps": len(result.times),
        "wall_clock_per_outer_step": float(np.mean(result.window_seconds)),
        "window_seconds": [float(s) for s in result.window_seconds],
        "stats": result.stats.total().as_dict(),
        "underflow_systems": result.stats.underflow_systems,
    }
    _write_json(cfg.summary, summary)
    return summary


def _fixed_solution(cfg: RunConfig, bench, n_steps: int) -> np.ndarray:
    if cfg.solver is SolverChoice.RKCK:
        return rkck_fixed(
            bench.problem, cfg.t0, cfg.t_end, bench.initial, bench.params, n_steps=n_steps
        )
    return rkc_fixed(
        bench.problem, cfg.t0, cfg.t_end, bench.initial, bench.params, n_steps=n_steps, s=cfg.stages
    )


def convergence_study(cfg: RunConfig) -> tuple[list[tuple[float, int, float]], float]:
    """Global errors at t_end for each fixed step in the ladder, and the
    least-squares slope of log(error) against log(h)."""
    bench = benchmark(cfg.problem, cfg.heat_points)
    exact = bench.exact(cfg.t_end - cfg.t0, bench.initial)
    ladder = cfg.ladder or DEFAULT_LADDERS[cfg.solver]
    rows = []
    for h in ladder:
        n_steps = round((cfg.t_end - cfg.t0) / h)
        if n_steps < 1 or abs(n_steps * h - (cfg.t_end - cfg.t0)) > 1e-9 * (cfg.t_end - cfg.t0):
            raise ConfigError(f"step {h} does not divide the interval")
        y = _fixed_solution(cfg, bench, n_steps)
        rows.append((float(h), int(n_steps), float(np.max(np.abs(y - exact)))))
    hs = np.log([r[0] for r in rows])
    errs = np.log([r[2] for r in rows])
    slope = float(np.polyfit(hs, errs, 1)[0]) if len(rows) > 1 else float("nan")
    return rows, slope


def run_convergence(cfg: RunConfig) -> dict:
    rows, slope = convergence_study(cfg)
    with _open_csv(cfg.output) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["h", "steps", "global_error"])
        for h, n, e in rows:
            writer.writerow([fmt(h), n, fmt(e)])
    summary = {
        "mode": "convergence",
        "config": cfg.echo(),
        "slope": slope,
        "expected_order": EXPECTED_ORDER[cfg.solver],
        "ladder": [r[0] for r in rows],
        "errors": [r[2] for r in rows],
    }
    _write_json(cfg.summary, summary)
    return summary


def worker_ladder(max_workers: int) -> list[int]:
    ladder = [1]
    while ladder[-1] * 2 <= max_workers:
        ladder.append(ladder[-1] * 2)
    if ladder[-1] != max_workers:
        ladder.append(max_workers)
    return ladder


def run_scaling(cfg: RunConfig) -> dict:
    bench, batch = _build_batch(cfg)
    _warm_up(cfg, bench, batch)
    rows = []
    digests = {}
    for w in worker_ladder(cfg.workers):
        h = hashlib.sha256()

        def sink(t, snapshot: BatchStates, h=h):
            h.update(snapshot.values.tobytes())

        result = outer_loop(
            bench.problem, batch, cfg.t0, cfg.t_end, cfg.outer_step,
            cfg.solver, cfg.tolerances(), w, sink,
        )
        digests[w] = h.hexdigest()
        rows.append([w, float(np.mean(result.window_seconds))])
        log.info("workers=%d  %.4f s per outer step", w, rows[-1][1])
    base = rows[0][1]
    for row in rows:
        row.append(base / row[1] if row[0] != 1 else 1.0)
    with _open_csv(cfg.output) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["workers", "wall_clock_per_outer_step", "speedup_vs_1"])
        for w, sec, sp in rows:
            writer.writerow([w, fmt(sec), fmt(sp)])
    summary = {
        "mode": "scaling",
        "config": cfg.echo(),
        "workers": [r[0] for r in rows],
        "wall_clock_per_outer_step": [r[1] for r in rows],
        "speedup_vs_1": [r[2] for r in rows],
        "output_sha256": {str(k): v for k, v in digests.items()},
        "outputs_identical": len(set(digests.values())) == 1,
    }
    _write_json(cfg.summary, summary)
    return summary


def _ladder(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="batchode-bench",
        description="Integrate batches of independent ODE systems with RKCK or RKC.",
    )
    d = RunConfig()
    p.add_argument("--problem", choices=BENCHMARKS, default=d.problem)
    p.add_argument("--solver", choices=[s.value for s in SolverChoice], default=d.solver.value)
    p.add_argument("--num-systems", type=int, default=d.num_systems)
    p.add_argument("--t0", type=float, default=d.t0)
    p.add_argument("--t-end", type=float, default=d.t_end)
    p.add_argument("--outer-step", type=float, default=d.outer_step)
    p.add_argument("--eps", type=float, default=d.eps, help="RKCK tolerance")
    p.add_argument("--abs-tol", type=float, default=d.abs_tol, help="RKC absolute tolerance")
    p.add_argument("--rel-tol", type=float, default=d.rel_tol, help="RKC relative tolerance")
    p.add_argument("--workers", type=int, default=d.workers)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--perturb", type=float, default=d.perturb,
                   help="relative perturbation of the initial conditions")
    p.add_argument("--mode", choices=("integrate", "convergence", "scaling"), default=d.mode)
    p.add_argument("--output", default=d.output, help="CSV output path")
    p.add_argument("--summary", default=d.summary, help="JSON summary path")
    p.add_argument("--heat-points", type=int, default=d.heat_points)
    p.add_argument("--stages", type=int, default=d.stages, help="fixed RKC stages (convergence)")
    p.add_argument("--ladder", type=_ladder, default=None,
                   help="comma-separated step sizes (convergence)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    return RunConfig(
        problem=ns.problem,
        solver=SolverChoice.parse(ns.solver),
        num_systems=ns.num_systems,
        t0=ns.t0,
        t_end=ns.t_end,
        outer_step=ns.outer_step,
        eps=ns.eps,
        abs_tol=ns.abs_tol,
        rel_tol=ns.rel_tol,
        workers=ns.workers,
        seed=ns.seed,
        perturb=ns.perturb,
        mode=ns.mode,
        output=ns.output,
        summary=ns.summary,
        heat_points=ns.heat_points,
        stages=ns.stages,
        ladder=ns.ladder,
    )


RUNNERS = {"integrate": run_integrate, "convergence": run_convergence, "scaling": run_scaling}


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        cfg = config_from_args(ns).validate()
        for path in (cfg.output, cfg.summary):
            parent = Path(path).resolve().parent
            if not parent.is_dir():
                raise OSError(f"directory does not exist: {parent}")
        start = time.perf_counter()
        RUNNERS[cfg.mode](cfg)
        log.info("done in %.2f s", time.perf_counter() - start)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
