"""Release gate: one test per shipping criterion, budgets and tolerances pinned.

Each test asserts its own wall-clock budget, so a speed regression fails as
loudly as a wrong number. The first test replays a fully hand-traced engine
iteration through a scripted draw stream; the rest exercise the public API
with the real generator.
"""

from __future__ import annotations

import math
import os
import time

import numpy as np
import pytest

from protozoa import core, rng
from protozoa.cli import main as cli_main
from protozoa.core import ApoConfig, Population
from protozoa.engine import EngineMode, initialize, run, step
from protozoa.imaging import GrayImage, apo_threshold, brute_force_otsu, histogram
from protozoa.objectives import FUNCTION_NAMES, Bounds, clamp, evaluate, get_objective


# ---------------------------------------------------------------------------
# Criterion 1: hand-traced iteration replay
# ---------------------------------------------------------------------------
#
# Four individuals on the sphere in a [0, 10] box, stepped at the middle
# iteration of a three-iteration run so both foraging modes are reachable.
# Every draw below was solved by hand so the step lands on round targets.

START_POSITIONS = np.array([
    [4.8, 7.8, 9.4],
    [3.4, 8.4, 9.0],
    [1.4, 5.0, 8.0],
    [4.5, 1.2, 4.7],
])
START_FITNESS = np.array([172.24, 163.12, 90.96, 43.78])
SORT_ORDER = [3, 2, 1, 0]
FINAL_POSITIONS = np.array([
    [4.5, 1.2, 4.7],
    [1.4, 5.0, 8.0],
    [2.9, 8.38, 9.11],
    [4.26, 6.32, 8.07],
])


class ScriptedStream:
    """Replays a fixed table of draws keyed by individual and counter.

    Swapped in for the real generator functions so known draws drive one
    engine step end to end; any unscripted read fails the test.
    """

    def __init__(self, seed: int, iteration: int):
        self.seed = seed
        self.iteration = iteration
        self.scalars = {}
        self.vectors = {}
        self.perms = {}

    def _slot(self, key):
        assert key.seed == self.seed and key.iteration == self.iteration, key
        return (key.individual_index, key.draw_counter)

    def draw_uniform(self, key):
        slot = self._slot(key)
        assert slot in self.scalars, f"unscripted scalar draw at {slot}"
        return self.scalars[slot]

    def draw_uniform_vector(self, key, n):
        slot = self._slot(key)
        assert slot in self.vectors, f"unscripted vector draw at {slot}"
        values = np.asarray(self.vectors[slot], dtype=np.float64)
        assert values.shape == (n,)
        return values.copy()

    def randperm(self, n, k, key):
        slot = self._slot(key) + (n, k)
        assert slot in self.perms, f"unscripted permutation draw at {slot}"
        return np.array(self.perms[slot], dtype=np.int64)


def scripted_worked_example() -> ScriptedStream:
    eps = 2.0 ** -52
    x = START_POSITIONS[SORT_ORDER]
    f = START_FITNESS[SORT_ORDER]
    # Neighbour weights the two foraging moves will apply.
    w_best_worst = core.rank_weight(f[0], f[3], eps)
    w_mid_worst = core.rank_weight(f[1], f[3], eps)

    s = ScriptedStream(seed=0, iteration=2)
    coord = rng.COORDINATOR_INDEX

    # Coordinator: fraction 0.1 * 0.5 selects ceil(4 * 0.05) = 1 rank, rank 2.
    s.scalars[(coord, core.COORD_SLOT_PF)] = 0.5
    s.perms[(coord, core.COORD_SLOT_DR_PERM, 4, 1)] = [2]

    # Rank 1 forages autotrophically toward rank 3, moving only its second
    # component from 1.2 to 1.77.
    bracket = (x[2][1] - x[0][1]) + w_best_worst * (x[0][1] - x[3][1])
    s.scalars[(1, core.SLOT_DECISION)] = 0.2
    s.scalars[(1, core.SLOT_PARTNER)] = 0.5
    s.scalars[(1, core.SLOT_FORAGE)] = 0.57 / bracket
    s.scalars[(1, core.PAIRS_BASE + 1)] = 0.8
    s.perms[(1, core.MASK_BASE, 3, 1)] = [2]

    # Rank 2 reproduces: a positive step of 0.9 times a fresh offset on its
    # last two components overshoots the box to [1.4, 13.53, 11.53].
    s.scalars[(2, core.SLOT_DECISION)] = 0.9
    s.scalars[(2, core.SLOT_SIGN)] = 0.1
    s.scalars[(2, core.SLOT_MASK_SIZE)] = 0.5
    s.scalars[(2, core.SLOT_MAGNITUDE)] = 0.9
    s.vectors[(2, core.VECTOR_BASE)] = [0.77, 8.53 / 9.0, 3.53 / 9.0]
    s.perms[(2, core.MASK_BASE, 3, 2)] = [2, 3]

    # Rank 3 forages heterotrophically to [2.9, 8.38, 9.11]; its vector draw
    # is solved from that target given factor 0.5 and decay 0.5.
    pair_diff = x[1] - x[3]
    delta = np.array([-0.5, -0.02, 0.11])
    s.scalars[(3, core.SLOT_DECISION)] = 0.9
    s.scalars[(3, core.SLOT_SIGN)] = 0.1
    s.scalars[(3, core.SLOT_FORAGE)] = 0.5
    s.vectors[(3, core.VECTOR_BASE)] = (2.0 * delta - w_mid_worst * pair_diff) / (0.5 * x[2])
    s.perms[(3, core.MASK_BASE, 3, 3)] = [1, 2, 3]

    # Rank 4 forages autotrophically toward rank 3 with neighbour pull from
    # rank 1, landing near [4.26, 6.32, 8.07].
    s.scalars[(4, core.SLOT_DECISION)] = 0.2
    s.scalars[(4, core.SLOT_FORAGE)] = 0.3283
    s.scalars[(4, core.SLOT_PARTNER)] = 0.7
    s.scalars[(4, core.PAIRS_BASE)] = 0.1
    s.perms[(4, core.MASK_BASE, 3, 3)] = [1, 2, 3]
    return s


def test_criterion_1_worked_example_replay(monkeypatch):
    t0 = time.perf_counter()
    cfg = ApoConfig(ps=4, dim=3, bounds=Bounds(0.0, 10.0, 3), max_iterations=3,
                    pf_max=0.1, seed=0)
    sphere = get_objective("sphere")
    pop = Population(START_POSITIONS.copy(), START_FITNESS.copy(), iteration=1, fe_count=4)

    # Sorting alone must produce the expected ranking.
    ranked = core.sort_by_fitness(pop)
    assert np.array_equal(ranked.positions, START_POSITIONS[SORT_ORDER])
    assert np.array_equal(ranked.fitness, START_FITNESS[SORT_ORDER])

    s = scripted_worked_example()
    monkeypatch.setattr(rng, "draw_uniform", s.draw_uniform)
    monkeypatch.setattr(rng, "draw_uniform_vector", s.draw_uniform_vector)
    monkeypatch.setattr(rng, "randperm", s.randperm)

    # The reproduction candidate overshoots and clamps onto the box edge.
    raw = core.reproduction_update(ranked.individual(2), cfg, rng.StreamKey(0, 2, 2))
    np.testing.assert_allclose(raw, [1.4, 13.53, 11.53], atol=5e-3)
    clamped = clamp(raw, cfg.bounds)
    np.testing.assert_allclose(clamped, [1.4, 10.0, 10.0], atol=5e-3)
    assert abs(evaluate(sphere, clamped) - 201.96) < 5e-3

    out = step(pop, cfg, sphere, 1, EngineMode.sequential(), backend="numpy")

    # Keep, keep, accept, accept.
    changed = [not np.array_equal(out.positions[r], ranked.positions[r]) for r in range(4)]
    assert changed == [False, False, True, True]
    np.testing.assert_allclose(out.positions, FINAL_POSITIONS, atol=5e-3)
    assert out.fitness[0] == 43.78 and out.fitness[1] == 90.96
    assert abs(out.fitness[2] - 161.63) < 5e-3
    assert out.fitness[3] < 172.24

    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    print(f"criterion 1: replayed iteration matches the hand trace ({elapsed:.3f}s)")


# ---------------------------------------------------------------------------
# Criterion 2: parallel output is bitwise-identical to sequential
# ---------------------------------------------------------------------------


def test_criterion_2_parallel_matches_sequential_bitwise():
    t0 = time.perf_counter()
    rnd = np.random.default_rng(22)
    checked = 0
    for k in range(200):
        obj = get_objective(FUNCTION_NAMES[k % len(FUNCTION_NAMES)])
        ps = int(rnd.integers(1, 513))
        dim = int(rnd.integers(obj.min_dim, 65))
        iters = int(rnd.integers(1, 51))
        workers = int(rnd.choice([1, 2, 4, 8]))
        cfg = ApoConfig(ps=ps, dim=dim, bounds=Bounds(-100.0, 100.0, dim),
                        max_iterations=iters, seed=int(rnd.integers(0, 2 ** 32)))
        seq = run(cfg, obj, mode=EngineMode.sequential())
        par = run(cfg, obj, mode=EngineMode.parallel(workers=workers))
        label = (obj.name, ps, dim, iters, workers)
        assert np.array_equal(seq.population.positions, par.population.positions), label
        assert np.array_equal(seq.population.fitness, par.population.fitness), label
        assert np.array_equal(seq.trace, par.trace), label
        checked += 1
    elapsed = time.perf_counter() - t0
    assert checked >= 200
    assert elapsed < 300.0
    print(f"criterion 2: {checked} configurations bitwise-equal ({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# Criterion 3: structural invariants under random inputs
# ---------------------------------------------------------------------------


def test_criterion_3_invariant_sweep():
    t0 = time.perf_counter()
    rnd = np.random.default_rng(33)
    cases = 0

    # Operation-schedule endpoints are exact in floating point.
    for _ in range(2000):
        m = int(rnd.integers(2, 1_000_000))
        assert core.p_autotroph_heterotroph(0, m) == 1.0
        assert core.p_autotroph_heterotroph(m - 1, m) == 0.0
        cases += 1
    for _ in range(2000):
        ps = int(rnd.integers(1, 1_000_000))
        assert core.p_dormancy_reproduction(ps, ps) == 0.0
        cases += 1

    # Neighbour weight stays in (0, 1]; the better rank is the numerator.
    for _ in range(2000):
        fa, fb = np.sort(rnd.uniform(0.0, 1e6, size=2))
        w = core.rank_weight(float(fa), float(fb), 2.0 ** -52)
        assert 0.0 < w <= 1.0
        cases += 1

    # Dormancy-or-reproduction set size is always ceil(ps * pf), distinct ranks.
    for _ in range(1500):
        ps = int(rnd.integers(1, 400))
        pf = float(rnd.uniform(0.0, 0.3))
        key = rng.StreamKey(int(rnd.integers(0, 2 ** 32)), int(rnd.integers(0, 100)),
                            rng.COORDINATOR_INDEX)
        dr = core.select_dr_indices(ps, pf, key)
        assert len(dr) == math.ceil(ps * pf)
        assert len(set(dr.tolist())) == len(dr)
        assert all(1 <= r <= ps for r in dr.tolist())
        cases += 1

    # Mask cardinalities: ceil(dim * rand) for reproduction, ceil(dim * i / ps)
    # for foraging.
    for _ in range(1500):
        dim = int(rnd.integers(1, 80))
        key = rng.StreamKey(int(rnd.integers(0, 2 ** 32)), int(rnd.integers(1, 60)),
                            int(rnd.integers(1, 512)))
        u = rng.draw_uniform(key.advanced(core.SLOT_MASK_SIZE))
        mask = core.reproduction_mask(dim, key)
        assert int(mask.sum()) == math.ceil(dim * u)
        cases += 1
    for _ in range(1500):
        dim = int(rnd.integers(1, 80))
        ps = int(rnd.integers(1, 300))
        i = int(rnd.integers(1, ps + 1))
        key = rng.StreamKey(int(rnd.integers(0, 2 ** 32)), int(rnd.integers(1, 60)), i)
        mask = core.forage_mask(dim, i, ps, key)
        assert int(mask.sum()) == math.ceil(dim * i / ps)
        cases += 1

    # Best fitness never worsens and every iterate stays inside the box.
    for r in range(12):
        obj = get_objective(FUNCTION_NAMES[r % len(FUNCTION_NAMES)])
        dim = int(rnd.integers(obj.min_dim, 9))
        cfg = ApoConfig(ps=int(rnd.integers(4, 41)), dim=dim,
                        bounds=Bounds(-50.0, 50.0, dim),
                        max_iterations=int(rnd.integers(5, 21)),
                        seed=int(rnd.integers(0, 2 ** 32)))
        pop = initialize(cfg, obj)
        best = float(pop.fitness.min())
        mode = EngineMode.sequential()
        for t in range(cfg.max_iterations):
            pop = step(pop, cfg, obj, t, mode)
            assert np.all(pop.positions >= cfg.bounds.lower)
            assert np.all(pop.positions <= cfg.bounds.upper)
            new_best = float(pop.fitness.min())
            assert new_best <= best
            best = new_best
            cases += 1

    elapsed = time.perf_counter() - t0
    assert cases >= 10_000
    assert elapsed < 120.0
    print(f"criterion 3: {cases} invariant cases held ({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# Criterion 4: the optimizer actually optimizes
# ---------------------------------------------------------------------------


def test_criterion_4_sphere_convergence():
    t0 = time.perf_counter()
    obj = get_objective("sphere")
    worst_ratio = 0.0
    for seed in range(5):
        cfg = ApoConfig(ps=100, dim=10, bounds=Bounds(-100.0, 100.0, 10),
                        max_iterations=500, seed=seed)
        res = run(cfg, obj)
        ratio = res.trace[-1] / res.trace[0]
        assert ratio < 0.01, (seed, ratio)
        worst_ratio = max(worst_ratio, ratio)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    print(f"criterion 4: worst final/initial ratio {worst_ratio:.2e} over 5 seeds ({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# Criterion 5: thresholding matches the exhaustive search exactly
# ---------------------------------------------------------------------------


def synthetic_image(kind: str, seed: int) -> GrayImage:
    rnd = np.random.default_rng(seed)
    if kind == "two_spike":
        px = np.where(rnd.random((32, 32)) < rnd.uniform(0.2, 0.8), 50, 150)
    elif kind == "uniform":
        px = rnd.integers(0, 256, size=(32, 32))
    else:
        lo = rnd.normal(rnd.uniform(50, 90), rnd.uniform(8, 20), size=512)
        hi = rnd.normal(rnd.uniform(160, 210), rnd.uniform(8, 20), size=512)
        px = np.clip(np.concatenate([lo, hi]), 0, 255).reshape(32, 32)
    return GrayImage(px.astype(np.uint8))


def test_criterion_5_threshold_matches_exhaustive_search():
    t0 = time.perf_counter()
    kinds = ["two_spike"] * 7 + ["uniform"] * 7 + ["bimodal"] * 6
    runs_done = 0
    for n, kind in enumerate(kinds):
        img = synthetic_image(kind, seed=100 + n)
        oracle_variance = brute_force_otsu(histogram(img))[1]
        for seed in range(5):
            got = apo_threshold(img, ps=100, iterations=50, seed=seed)
            assert got.variance == oracle_variance, (n, kind, seed)
            runs_done += 1
    elapsed = time.perf_counter() - t0
    assert runs_done == 100
    assert elapsed < 30.0
    print(f"criterion 5: {runs_done} runs all hit the exhaustive optimum ({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# Criterion 6: parallel mode is actually faster on real hardware
# ---------------------------------------------------------------------------


def test_criterion_6_parallel_speedup_on_big_run():
    threads = os.cpu_count() or 1
    if threads < 4:
        pytest.skip(f"needs at least 4 hardware threads to measure a speedup, found {threads}")
    t0 = time.perf_counter()
    cfg = ApoConfig(ps=10_000, dim=1_000, bounds=Bounds(-100.0, 100.0, 1_000),
                    max_iterations=20, seed=0)
    obj = get_objective("bent_cigar")
    seq = run(cfg, obj, mode=EngineMode.sequential())
    par = run(cfg, obj, mode=EngineMode.parallel())
    assert np.array_equal(seq.population.positions, par.population.positions)
    speedup = seq.wall_clock_seconds / par.wall_clock_seconds
    elapsed = time.perf_counter() - t0
    print(f"criterion 6: parallel speedup {speedup:.2f}x on {threads} threads ({elapsed:.1f}s)")
    assert speedup > 1.5
    assert elapsed < 300.0


# ---------------------------------------------------------------------------
# Criterion 7: the report command reproduces known speedup arithmetic
# ---------------------------------------------------------------------------


def test_criterion_7_report_reproduces_speedup_arithmetic(tmp_path, capsys):
    t0 = time.perf_counter()
    header = "function,ps,dim,iters,runs,seed,mode,workers,avg_best_fit,avg_seconds"
    seq = tmp_path / "seq.csv"
    par = tmp_path / "par.csv"
    seq.write_text("\n".join([
        header,
        "bent_cigar,10000,1000,20,5,0,sequential,1,1.25e9,430",
        "hgbat,10000,1000,20,5,0,sequential,1,6.8e4,211",
    ]) + "\n")
    par.write_text("\n".join([
        header,
        "bent_cigar,10000,1000,20,5,0,parallel,8,1.25e9,64",
        "hgbat,10000,1000,20,5,0,parallel,8,6.8e4,35",
    ]) + "\n")

    rc = cli_main(["report", "--in", str(seq), str(par)])
    out = capsys.readouterr().out
    assert rc == 0
    rows = [line for line in out.splitlines() if line.startswith("|")]
    assert any("| 6.72 |" in line for line in rows)  # 430 / 64
    assert any("| 6.03 |" in line for line in rows)  # 211 / 35

    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    print(f"criterion 7: speedup columns 6.72 and 6.03 reproduced ({elapsed:.3f}s)")
