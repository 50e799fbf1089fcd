"""Pure numpy update phase: a direct composition of the core operations.

This is the reference path. It is slower than the compiled backend but has
no dependencies beyond numpy and can evaluate caller-supplied objective
functions. The parallel variant farms contiguous index ranges out to a
thread pool; every row is a pure function of the pre-step snapshot, so the
partitioning cannot change results.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import core
from ..core import ApoConfig, Individual, Population
from ..objectives import EXTERNAL, Objective, clamp
from ..rng import StreamKey

NAME = "numpy"


def max_workers() -> int:
    return os.cpu_count() or 1


def _update_range(
    lo: int,
    hi: int,
    snapshot: Population,
    in_dr: np.ndarray,
    cfg: ApoConfig,
    objective: Objective,
    iteration: int,
    key_iteration: int,
    out_pos: np.ndarray,
    out_fit: np.ndarray,
    out_acc: np.ndarray,
    out_warn: np.ndarray,
) -> None:
    for i0 in range(lo, hi):
        i = i0 + 1
        key = StreamKey(cfg.seed, key_iteration, i)
        decision = core.decide_operation(i, bool(in_dr[i0]), iteration, cfg, key)
        old = Individual(snapshot.positions[i0], float(snapshot.fitness[i0]))
        if decision.operation == core.DORMANCY:
            candidate = core.dormancy_update(cfg, key)
        elif decision.operation == core.REPRODUCTION:
            candidate = core.reproduction_update(old, cfg, key)
        elif decision.operation == core.AUTOTROPH:
            candidate = core.autotroph_update(i, snapshot, cfg, key)
        else:
            candidate = core.heterotroph_update(i, snapshot, cfg, iteration, key)
        candidate = clamp(candidate, cfg.bounds)
        try:
            picked = core.greedy_select(old, candidate, objective)
        except Exception as exc:
            if objective.code != EXTERNAL:
                raise
            raise RuntimeError(f"objective {objective.name!r} failed for individual {i}") from exc
        out_pos[i0] = picked.individual.position
        out_fit[i0] = picked.individual.fitness
        out_acc[i0] = picked.accepted
        out_warn[i0] = picked.warned


def run_updates(
    positions: np.ndarray,
    fitness: np.ndarray,
    in_dr: np.ndarray,
    cfg: ApoConfig,
    objective: Objective,
    iteration: int,
    key_iteration: int,
    parallel: bool,
    workers: int,
):
    """Apply one iteration's updates to a sorted population snapshot.

    Returns (new_positions, new_fitness, accepted, warning_count). Inputs
    are read only.
    """
    ps = positions.shape[0]
    snapshot = Population(positions, fitness, iteration=iteration)
    out_pos = np.empty_like(snapshot.positions)
    out_fit = np.empty(ps)
    out_acc = np.zeros(ps, dtype=np.bool_)
    out_warn = np.zeros(ps, dtype=np.bool_)
    args = (snapshot, in_dr, cfg, objective, iteration, key_iteration, out_pos, out_fit, out_acc, out_warn)
    if parallel and workers > 1 and ps > 1:
        splits = np.array_split(np.arange(ps), min(workers, ps))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_update_range, int(chunk[0]), int(chunk[-1]) + 1, *args)
                for chunk in splits
                if chunk.size
            ]
            for future in futures:
                future.result()
    else:
        _update_range(0, ps, *args)
    return out_pos, out_fit, out_acc, int(out_warn.sum())
