"""Batch driver: integrate many independent systems over outer windows.

Systems are split into contiguous chunks, one per worker, and each worker
runs a compiled kernel that releases the GIL. Every system is integrated
by the same sequential code no matter which chunk it lands in, so results
do not depend on the worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

from .errors import InvalidInterval, InvalidShape
from .layout import BatchStates
from .problem import IntegrationStats, OdeProblem, SolverChoice, ToleranceSettings
from .rkc import _rkc_driver, new_workspace
from .rkck import _rkck_driver

# columns of the integer stats table
_ACC, _REJ, _NF, _NSR = range(4)


@njit(nogil=True)
def _rkck_chunk(
    rhs, values, params, n, dim, pdim, lo, hi, t, t_end, tol, counts, hext, flags, hist
):
    y = np.empty(dim)
    g = np.empty(pdim)
    for i in range(lo, hi):
        for j in range(dim):
            y[j] = values[i + n * j]
        for j in range(pdim):
            g[j] = params[i + n * j]
        y_out, n_acc, n_rej, n_f, h_lo, h_hi, under = _rkck_driver(rhs, t, t_end, y, g, tol, hist)
        for j in range(dim):
            values[i + n * j] = y_out[j]
        counts[i, 0] = n_acc
        counts[i, 1] = n_rej
        counts[i, 2] = n_f
        counts[i, 3] = 0
        hext[i, 0] = h_lo
        hext[i, 1] = h_hi
        flags[i] = under


@njit(nogil=True)
def _rkc_chunk(
    rhs, values, params, n, dim, pdim, lo, hi, t, t_end, tol, work, counts, hext, flags, hist
):
    y = np.empty(dim)
    g = np.empty(pdim)
    for i in range(lo, hi):
        for j in range(dim):
            y[j] = values[i + n * j]
        for j in range(pdim):
            g[j] = params[i + n * j]
        y_out, n_acc, n_rej, n_f, n_sr, h_lo, h_hi, under = _rkc_driver(
            rhs, t, t_end, y, g, tol, work[i], hist
        )
        for j in range(dim):
            values[i + n * j] = y_out[j]
        counts[i, 0] = n_acc
        counts[i, 1] = n_rej
        counts[i, 2] = n_f
        counts[i, 3] = n_sr
        hext[i, 0] = h_lo
        hext[i, 1] = h_hi
        flags[i] = under


@dataclass
class BatchStats:
    """Per-system statistics stored column-wise."""

    counts: np.ndarray  # (num_systems, 4) int64: accepted, rejected, rhs evals, specrad evals
    h_extrema: np.ndarray  # (num_systems, 2): smallest and largest accepted step
    underflow: np.ndarray  # (num_systems,) bool

    @classmethod
    def empty(cls, num_systems: int) -> "BatchStats":
        h = np.empty((num_systems, 2))
        h[:, 0] = np.inf
        h[:, 1] = 0.0
        return cls(
            np.zeros((num_systems, 4), dtype=np.int64), h, np.zeros(num_systems, dtype=bool)
        )

    def __len__(self) -> int:
        return self.counts.shape[0]

    def __getitem__(self, i: int) -> IntegrationStats:
        c = self.counts[i]
        return IntegrationStats(
            int(c[_ACC]), int(c[_REJ]), int(c[_NF]), int(c[_NSR]),
            float(self.h_extrema[i, 0]), float(self.h_extrema[i, 1]), bool(self.underflow[i]),
        )

    def accumulate(self, other: "BatchStats") -> None:
        self.counts += other.counts
        np.minimum(self.h_extrema[:, 0], other.h_extrema[:, 0], out=self.h_extrema[:, 0])
        np.maximum(self.h_extrema[:, 1], other.h_extrema[:, 1], out=self.h_extrema[:, 1])
        self.underflow |= other.underflow

    def total(self) -> IntegrationStats:
        c = self.counts.sum(axis=0)
        return IntegrationStats(
            int(c[_ACC]), int(c[_REJ]), int(c[_NF]), int(c[_NSR]),
            float(self.h_extrema[:, 0].min()), float(self.h_extrema[:, 1].max()),
            bool(self.underflow.any()),
        )

    @property
    def underflow_systems(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.underflow)]


def partition(num_systems: int, workers: int) -> list[tuple[int, int]]:
    """Static contiguous chunks in index order; empty chunks are dropped."""
    bounds = np.linspace(0, num_systems, min(workers, num_systems) + 1).round().astype(int)
    return [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def _fresh_rkc_workspace(num_systems: int, dim: int) -> np.ndarray:
    return new_workspace(dim, num_systems)


def integrate_batch(
    problem: OdeProblem,
    batch: BatchStates,
    t: float,
    t_next: float,
    solver=SolverChoice.RKCK,
    tol: ToleranceSettings = None,
    workers: int = 1,
    *,
    chunks: Optional[list[tuple[int, int]]] = None,
) -> tuple[BatchStates, BatchStats]:
    """Advance every system of ``batch`` from ``t`` to ``t_next``.

    The input batch is not modified. ``chunks`` overrides the default
    partition (any cover of the systems by disjoint ranges gives the same
    result); it exists for determinism checks.
    """
    if not t_next > t:
        raise InvalidInterval(f"t_next ({t_next}) must exceed t ({t})")
    if batch.dim != problem.dim:
        raise InvalidShape(f"batch dim {batch.dim} != problem dim {problem.dim}")
    if batch.param_dim != problem.param_dim:
        raise InvalidShape(
            f"batch param_dim {batch.param_dim} != problem param_dim {problem.param_dim}"
        )
    if workers < 1:
        raise ValueError("workers must be positive")
    solver = SolverChoice.parse(solver)
    tol = (tol or ToleranceSettings()).validate()

    n, dim, pdim = batch.num_systems, batch.dim, batch.param_dim
    out = batch.copy()
    stats = BatchStats.empty(n)
    args = (problem.rhs, out.values, out.params, n, dim, pdim)
    # per-step logging is off in batch runs
    tail = (stats.counts, stats.h_extrema, stats.underflow, np.empty((0, 4)))
    t, t_next = float(t), float(t_next)

    if solver is SolverChoice.RKCK:
        def run(lo, hi):
            _rkck_chunk(*args, lo, hi, t, t_next, tol, *tail)
    else:
        work = _fresh_rkc_workspace(n, dim)

        def run(lo, hi):
            _rkc_chunk(*args, lo, hi, t, t_next, tol, work, *tail)

    chunks = partition(n, workers) if chunks is None else chunks
    if len(chunks) == 1 or workers == 1:
        for lo, hi in chunks:
            run(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(run, lo, hi) for lo, hi in chunks]:
                fut.result()
    return out, stats


def window_ends(t0: float, t_end: float, h_outer: float) -> list[float]:
    """End times of the outer windows covering [t0, t_end].

    Ends are t0 + k*h_outer (not a running sum) and the last one is exactly
    t_end; a remainder within rounding of a whole number of windows does not
    produce an extra sliver window.
    """
    ratio = (t_end - t0) / h_outer
    nearest = round(ratio)
    if nearest >= 1 and abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        count = int(nearest)
    else:
        count = int(math.ceil(ratio))
    ends = [t0 + k * h_outer for k in range(1, count)]
    ends.append(t_end)
    return ends


@dataclass
class OuterLoopResult:
    states: BatchStates
    stats: BatchStats
    window_seconds: list[float] = field(default_factory=list)
    times: list[float] = field(default_factory=list)


def outer_loop(
    problem: OdeProblem,
    batch: BatchStates,
    t0: float,
    t_end: float,
    h_outer: float,
    solver=SolverChoice.RKCK,
    tol: ToleranceSettings = None,
    workers: int = 1,
    sink: Optional[Callable[[float, BatchStates], None]] = None,
) -> OuterLoopResult:
    """Integrate over consecutive windows of length ``h_outer``.

    Each window is a restart: the solvers start from scratch with no step
    size, error history or eigenvector carried over. ``sink`` receives
    ``(t, copy_of_batch)`` after every window. Stats are summed per system.
    """
    if not t_end > t0:
        raise InvalidInterval(f"t_end ({t_end}) must exceed t0 ({t0})")
    if not (h_outer > 0 and math.isfinite(h_outer)):
        raise InvalidInterval(f"outer step must be positive, got {h_outer}")
    result = OuterLoopResult(batch.copy(), BatchStats.empty(batch.num_systems))
    t = float(t0)
    for t_next in window_ends(float(t0), float(t_end), float(h_outer)):
        start = time.perf_counter()
        states, stats = integrate_batch(problem, result.states, t, t_next, solver, tol, workers)
        result.window_seconds.append(time.perf_counter() - start)
        result.states = states
        result.stats.accumulate(stats)
        result.times.append(t_next)
        if sink is not None:
            sink(t_next, states.copy())
        t = t_next
    return result
