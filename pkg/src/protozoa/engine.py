"""Run orchestration: initialisation, stepping, full runs and benchmarks.

Two execution modes exist, sequential and parallel. They share every draw
and every floating-point expression, differing only in how the
per-individual update phase is scheduled, so a run is bit-for-bit
reproducible from (config, seed) regardless of mode, worker count or
backend. Each iteration is: stable sort by fitness, coordinator draws (the
dormancy fraction and its rank permutation), then an embarrassingly
parallel pass in which every individual decides its operation, builds a
candidate, clamps it, evaluates it once and keeps the better of old and
new. Updates read only the pre-step snapshot; nobody sees a same-iteration
write.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from statistics import fmean
from typing import Optional, Sequence

import numpy as np

from . import kernels, rng
from .core import (
    ApoConfig,
    ConfigError,
    Population,
    proportion_fraction,
    select_dr_indices,
    sort_by_fitness,
)
from .objectives import EXTERNAL, Objective, evaluate_unchecked, resolve_objective

SEQUENTIAL = "sequential"
PARALLEL = "parallel"


@dataclass(frozen=True)
class EngineMode:
    """Execution mode: ``sequential``, or ``parallel`` with a worker count.

    ``workers`` may be a positive integer or "auto" (resolve to the
    hardware parallelism the active backend reports). The resolved count
    is recorded in the RunResult.
    """

    kind: str = SEQUENTIAL
    workers: object = None

    def __post_init__(self) -> None:
        if self.kind not in (SEQUENTIAL, PARALLEL):
            raise ValueError(f"kind must be {SEQUENTIAL!r} or {PARALLEL!r}, got {self.kind!r}")
        w = self.workers
        if w is not None and w != "auto" and not (isinstance(w, int) and w >= 1):
            raise ValueError(f"workers must be a positive integer or 'auto', got {w!r}")

    @staticmethod
    def sequential() -> "EngineMode":
        return EngineMode(SEQUENTIAL)

    @staticmethod
    def parallel(workers: object = "auto") -> "EngineMode":
        return EngineMode(PARALLEL, workers)


@dataclass
class RunResult:
    """Outcome of one optimization run.

    ``trace`` holds the best fitness after initialisation (entry 0) and
    after every executed iteration; it is non-increasing and its last entry
    equals ``best_fitness``. ``fe_count`` counts one evaluation per
    individual at initialisation plus one per individual per iteration.
    """

    best_position: np.ndarray
    best_fitness: float
    trace: np.ndarray
    iterations_run: int
    fe_count: int
    warnings: int
    wall_clock_seconds: float
    mode: str
    workers: int
    backend: str
    config_echo: ApoConfig
    population: Population = field(repr=False, default=None)


def _resolve_backend(objective: Objective, backend: Optional[str]):
    if objective.code == EXTERNAL:
        if backend not in (None, "numpy"):
            raise ValueError("external objective functions run only on the numpy backend")
        return kernels.get_backend("numpy")
    return kernels.get_backend(backend)


def resolve_workers(mode: EngineMode, backend) -> int:
    """Effective worker count for a mode on a backend, always >= 1."""
    if mode.kind == SEQUENTIAL:
        return 1
    cap = max(1, int(backend.max_workers()))
    requested = mode.workers
    if requested in (None, "auto"):
        return cap
    return min(int(requested), cap)


def _check_dim(cfg: ApoConfig, objective: Objective) -> None:
    if cfg.dim < objective.min_dim:
        raise ConfigError(f"objective {objective.name!r} needs dim >= {objective.min_dim}, got dim = {cfg.dim}")


def initialize(cfg: ApoConfig, objective) -> Population:
    """Uniform random population with cached fitness; fe_count = ps.

    Component c of individual i comes from the keyed stream at iteration 0,
    counter c, so initialisation is reproducible from the seed alone.
    """
    obj = resolve_objective(objective)
    bad = cfg.violations()
    if bad:
        raise ConfigError("invalid configuration:\n" + "\n".join(f"  - {b}" for b in bad))
    _check_dim(cfg, obj)
    positions = np.empty((cfg.ps, cfg.dim))
    for i in range(1, cfg.ps + 1):
        u = rng.draw_uniform_vector(rng.StreamKey(cfg.seed, 0, i), cfg.dim)
        positions[i - 1] = cfg.bounds.lower + u * cfg.bounds.span
    fitness = np.empty(cfg.ps)
    for r in range(cfg.ps):
        try:
            fitness[r] = evaluate_unchecked(obj, positions[r])
        except Exception as exc:
            if obj.code != EXTERNAL:
                raise
            raise RuntimeError(f"objective {obj.name!r} failed for individual {r + 1}") from exc
    return Population(positions, fitness, iteration=0, fe_count=cfg.ps, warnings=0)


def step(pop: Population, cfg: ApoConfig, objective, iteration: int, mode: EngineMode, backend: Optional[str] = None) -> Population:
    """One full iteration; returns the next population, inputs untouched.

    ``iteration`` is the 0-based loop index; it drives the schedules and
    the draw keys (iteration key = loop index + 1, key 0 being reserved
    for initialisation).
    """
    obj = resolve_objective(objective)
    if pop.size != cfg.ps or pop.dim != cfg.dim:
        raise ValueError(
            f"population shape ({pop.size}, {pop.dim}) does not match config (ps={cfg.ps}, dim={cfg.dim})"
        )
    bk = _resolve_backend(obj, backend)
    workers = resolve_workers(mode, bk)
    snapshot = sort_by_fitness(pop)
    coord = rng.StreamKey(cfg.seed, iteration + 1, rng.COORDINATOR_INDEX)
    pf = proportion_fraction(coord, cfg.pf_max)
    dr = select_dr_indices(cfg.ps, pf, coord)
    in_dr = np.zeros(cfg.ps, dtype=np.bool_)
    if dr.size:
        in_dr[dr - 1] = True
    new_pos, new_fit, _accepted, warned = bk.run_updates(
        snapshot.positions, snapshot.fitness, in_dr, cfg, obj,
        iteration, iteration + 1, parallel=(mode.kind == PARALLEL), workers=workers,
    )
    return Population(
        new_pos, new_fit,
        iteration=iteration + 1,
        fe_count=pop.fe_count + cfg.ps,
        warnings=pop.warnings + warned,
    )


def run(cfg: ApoConfig, objective, mode: Optional[EngineMode] = None, backend: Optional[str] = None) -> RunResult:
    """Full optimization run: initialise, then iterate until the iteration
    budget (or the evaluation budget, when set) is exhausted.

    An iteration starts only while fe_count < max_fes, so a budget at or
    below ps stops the run right after initialisation. Wall clock covers
    initialisation and the iteration loop.
    """
    mode = mode or EngineMode.sequential()
    obj = resolve_objective(objective)
    bk = _resolve_backend(obj, backend)
    workers = resolve_workers(mode, bk)
    started = time.perf_counter()
    pop = initialize(cfg, obj)
    trace = [float(np.min(pop.fitness))]
    iterations_run = 0
    for t in range(cfg.max_iterations):
        if cfg.max_fes is not None and pop.fe_count >= cfg.max_fes:
            break
        pop = step(pop, cfg, obj, t, mode, backend=bk.NAME)
        iterations_run += 1
        trace.append(float(np.min(pop.fitness)))
    seconds = time.perf_counter() - started
    best = pop.best()
    return RunResult(
        best_position=best.position,
        best_fitness=best.fitness,
        trace=np.asarray(trace),
        iterations_run=iterations_run,
        fe_count=pop.fe_count,
        warnings=pop.warnings,
        wall_clock_seconds=seconds,
        mode=mode.kind,
        workers=workers,
        backend=bk.NAME,
        config_echo=cfg,
        population=pop,
    )


@dataclass
class ModeAggregate:
    """Per-mode summary over a seed sweep."""

    mode: str
    workers: int
    best_fitness: list
    seconds: list
    results: list = field(repr=False, default_factory=list)

    @property
    def avg_best_fitness(self) -> float:
        return fmean(self.best_fitness)

    @property
    def avg_seconds(self) -> float:
        return fmean(self.seconds)


@dataclass
class BenchmarkResult:
    """Seed-sweep aggregates for one objective and config."""

    objective_name: str
    runs: int
    base_seed: int
    per_mode: dict
    speedup: Optional[float]

    def aggregate(self, kind: str) -> ModeAggregate:
        return self.per_mode[kind]


def benchmark(
    cfg: ApoConfig,
    objective,
    runs: int,
    modes: Sequence[EngineMode] = (),
    backend: Optional[str] = None,
) -> BenchmarkResult:
    """Run ``runs`` seeds (seed, seed+1, ...) per mode and aggregate.

    With no explicit modes, both the sequential and the auto-worker
    parallel mode are measured. Speedup is sequential over parallel average
    seconds when both are present.
    """
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    obj = resolve_objective(objective)
    mode_list = list(modes) or [EngineMode.sequential(), EngineMode.parallel()]
    per_mode: dict = {}
    for mode in mode_list:
        if mode.kind in per_mode:
            raise ValueError(f"duplicate mode {mode.kind!r} in benchmark request")
        agg = ModeAggregate(mode.kind, 0, [], [])
        for r in range(runs):
            result = run(replace(cfg, seed=cfg.seed + r), obj, mode, backend=backend)
            agg.workers = result.workers
            agg.best_fitness.append(result.best_fitness)
            agg.seconds.append(result.wall_clock_seconds)
            agg.results.append(result)
        per_mode[mode.kind] = agg
    speedup = None
    if SEQUENTIAL in per_mode and PARALLEL in per_mode:
        par_avg = per_mode[PARALLEL].avg_seconds
        if par_avg > 0.0:
            speedup = per_mode[SEQUENTIAL].avg_seconds / par_avg
        else:
            speedup = math.inf
    return BenchmarkResult(obj.name, runs, cfg.seed, per_mode, speedup)
