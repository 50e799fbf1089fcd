"""Population state and the per-individual update rules of the optimizer.

The population model is a colony of protozoa. Each iteration every
individual takes exactly one of four actions:

* dormancy: restart at a fresh uniform position inside the bounds;
* reproduction: perturb a random subset of dimensions by a signed, randomly
  scaled copy of a fresh in-bounds offset;
* autotrophic foraging: move toward a randomly chosen partner plus a
  weighted mean of differences between randomly chosen better and worse
  ranked neighbours;
* heterotrophic foraging: move toward a slightly shifted copy of itself
  plus a weighted mean of differences between fixed rank-offset neighbours.

Individuals are kept sorted by fitness, so "index" below always means the
1-based rank i in [1, ps] with rank 1 the current best.

Draw addressing
---------------
Randomness comes from the keyed generator in :mod:`protozoa.rng`. Every
random event an update might need has a fixed counter slot in the
individual's per-iteration stream, so the sequential and parallel engines
read identical values without coordinating a shared cursor:

    0                   operation decision
    1                   sign of the perturbation
    2                   reproduction mask size
    3                   reproduction magnitude
    4                   foraging factor
    5                   autotroph partner choice
    6 .. 7              reserved
    8 .. 8+dim-1        component vector (fresh positions, offsets, shifts)
    2^32 + 0 .. dim-1   mask permutation
    2^33 + 2k, 2k+1     neighbour pair k (better side, worse side)

The three blocks live at fixed counter offsets far apart, so no operation
needs to know another block's extent to find its own draws. Each operation
taking a ``key`` expects the base of the individual's stream (counter 0)
and reads the slots listed in its docstring.

Population-level draws use ``rng.COORDINATOR_INDEX`` as the individual:
counter 0 holds the dormancy proportion draw and counters 1.. the dormancy
permutation. Initialisation draws component c of individual i from
iteration 0 at counter c; the layout above applies to iteration keys 1
onward (iteration key = loop iteration + 1).

Candidates are returned unclamped; callers project onto the bounds before
evaluating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import rng
from .objectives import Bounds, Objective, evaluate_unchecked

# ---------------------------------------------------------------------------
# Draw slot layout
# ---------------------------------------------------------------------------

SLOT_DECISION = 0
SLOT_SIGN = 1
SLOT_MASK_SIZE = 2
SLOT_MAGNITUDE = 3
SLOT_FORAGE = 4
SLOT_PARTNER = 5

VECTOR_BASE = 8
MASK_BASE = 1 << 32
PAIRS_BASE = 1 << 33

COORD_SLOT_PF = 0
COORD_SLOT_DR_PERM = 1

# Operation names.
DORMANCY = "dormancy"
REPRODUCTION = "reproduction"
AUTOTROPH = "autotroph"
HETEROTROPH = "heterotroph"

OPERATIONS = (DORMANCY, REPRODUCTION, AUTOTROPH, HETEROTROPH)


# ---------------------------------------------------------------------------
# State types
# ---------------------------------------------------------------------------


class ConfigError(ValueError):
    """Raised when an ApoConfig violates one or more invariants."""


@dataclass(frozen=True)
class ApoConfig:
    """Run parameters. Construction fails listing every violated rule."""

    ps: int
    dim: int
    bounds: Bounds
    max_iterations: int
    neighbor_pairs: int = 1
    pf_max: float = 0.1
    max_fes: Optional[int] = None
    seed: int = 0
    eps: float = 2.0 ** -52

    def violations(self) -> list:
        bad = []
        if self.ps < 1:
            bad.append(f"ps must be >= 1, got {self.ps}")
        if self.dim < 1:
            bad.append(f"dim must be >= 1, got {self.dim}")
        elif self.bounds.dim != self.dim:
            bad.append(f"bounds cover {self.bounds.dim} dims but dim is {self.dim}")
        if self.max_iterations < 0:
            bad.append(f"max_iterations must be >= 0, got {self.max_iterations}")
        if self.neighbor_pairs < 1:
            bad.append(f"neighbor_pairs must be >= 1, got {self.neighbor_pairs}")
        elif self.ps >= 2 and self.neighbor_pairs > self.ps - 1:
            # A population of one is exempt: every pairing degenerates to
            # the individual itself there, so any pair count is harmless.
            bad.append(f"neighbor_pairs must be <= ps - 1 = {self.ps - 1}, got {self.neighbor_pairs}")
        if not 0.0 < self.pf_max <= 1.0:
            bad.append(f"pf_max must be in (0, 1], got {self.pf_max}")
        if self.max_fes is not None and self.max_fes < 1:
            bad.append(f"max_fes must be >= 1 when set, got {self.max_fes}")
        if not 0 <= self.seed < 2 ** 64:
            bad.append(f"seed must be in [0, 2**64), got {self.seed}")
        if not (math.isfinite(self.eps) and self.eps > 0.0):
            bad.append(f"eps must be a positive finite float, got {self.eps}")
        return bad

    def __post_init__(self) -> None:
        bad = self.violations()
        if bad:
            raise ConfigError("invalid configuration:\n" + "\n".join(f"  - {b}" for b in bad))

    @property
    def iteration_span(self) -> int:
        """Divisor of the progress ratio; stays 1 for degenerate short runs."""
        return max(self.max_iterations - 1, 1)


@dataclass
class Individual:
    """One candidate solution with its cached fitness."""

    position: np.ndarray
    fitness: float


@dataclass
class Population:
    """Positions with cached fitness plus run counters.

    ``positions`` has shape (ps, dim); row r holds rank r+1 whenever the
    population is sorted. ``fe_count`` counts objective evaluations and
    ``warnings`` counts candidates dropped for a non-finite position or
    fitness.
    """

    positions: np.ndarray
    fitness: np.ndarray
    iteration: int = 0
    fe_count: int = 0
    warnings: int = 0

    def __post_init__(self) -> None:
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.fitness = np.ascontiguousarray(self.fitness, dtype=np.float64)
        if self.positions.ndim != 2:
            raise ValueError(f"positions must be 2-D, got shape {self.positions.shape}")
        if self.fitness.shape != (self.positions.shape[0],):
            raise ValueError("fitness length must match the number of rows in positions")

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def individual(self, i: int) -> Individual:
        """Copy of the individual at 1-based index ``i``."""
        if not 1 <= i <= self.size:
            raise IndexError(f"index must be in [1, {self.size}], got {i}")
        return Individual(self.positions[i - 1].copy(), float(self.fitness[i - 1]))

    def best(self) -> Individual:
        return self.individual(int(np.argmin(self.fitness)) + 1)


class UpdateDecision(NamedTuple):
    """Outcome of the operation choice for one individual."""

    operation: str
    draw: float
    threshold: float


class SelectionResult(NamedTuple):
    """Outcome of one greedy replacement attempt."""

    individual: Individual
    accepted: bool
    warned: bool


# ---------------------------------------------------------------------------
# Scalar schedule functions
# ---------------------------------------------------------------------------


def iteration_ratio(iteration: int, max_iterations: int) -> float:
    """Progress through the run in [0, 1].

    The divisor is ``max_iterations - 1`` so the first iteration sits at
    exactly 0 and the last at exactly 1; a run of one iteration counts as
    progress 0.
    """
    span = max(max_iterations - 1, 1)
    return iteration / span


def p_autotroph_heterotroph(iteration: int, max_iterations: int) -> float:
    """Probability of choosing autotrophic over heterotrophic foraging.

    Falls on a half-cosine from exactly 1 at the first iteration to exactly
    0 at the last.
    """
    return 0.5 * (1.0 + math.cos(iteration_ratio(iteration, max_iterations) * math.pi))


def p_dormancy_reproduction(i: int, ps: int) -> float:
    """Probability of dormancy over reproduction for rank ``i`` of ``ps``.

    Decreases on a half-cosine from near 1 at the best rank to exactly 0 at
    rank ps, so the worst selected individual always reproduces.
    """
    return 0.5 * (1.0 - math.cos((1.0 - i / ps) * math.pi))


def _forage_factor_value(u: float, ratio: float) -> float:
    return u * (1.0 + math.cos(ratio * math.pi))


def rank_weight(fit_a: float, fit_b: float, eps: float) -> float:
    """Influence weight exp(-|fit_a / (fit_b + eps)|) of a neighbour pair."""
    return math.exp(-abs(fit_a / (fit_b + eps)))


# ---------------------------------------------------------------------------
# Population-level draws (coordinator stream)
# ---------------------------------------------------------------------------


def proportion_fraction(key: rng.StreamKey, pf_max: float) -> float:
    """Dormancy-or-reproduction fraction for this iteration, in [0, pf_max).

    Reads coordinator counter 0.
    """
    return pf_max * rng.draw_uniform(key.advanced(COORD_SLOT_PF))


def select_dr_indices(ps: int, pf: float, key: rng.StreamKey) -> np.ndarray:
    """Ranks selected for dormancy or reproduction this iteration.

    Draws ceil(ps * pf) distinct 1-based ranks; reads coordinator counters
    1 onward. A fraction of exactly 0 selects nobody.
    """
    count = int(math.ceil(ps * pf))
    return rng.randperm(ps, count, key.advanced(COORD_SLOT_DR_PERM))


# ---------------------------------------------------------------------------
# Per-individual draws
# ---------------------------------------------------------------------------


def decide_operation(i: int, in_dr: bool, iteration: int, cfg: ApoConfig, key: rng.StreamKey) -> UpdateDecision:
    """Choose this individual's operation for the iteration.

    Members of the dormancy-or-reproduction set split between those two by
    rank; everyone else splits between the foraging modes by run progress.
    Reads slot 0.
    """
    u = rng.draw_uniform(key.advanced(SLOT_DECISION))
    if in_dr:
        threshold = p_dormancy_reproduction(i, cfg.ps)
        operation = DORMANCY if u < threshold else REPRODUCTION
    else:
        threshold = p_autotroph_heterotroph(iteration, cfg.max_iterations)
        operation = AUTOTROPH if u < threshold else HETEROTROPH
    return UpdateDecision(operation, u, threshold)


def foraging_factor(key: rng.StreamKey, iteration: int, max_iterations: int) -> float:
    """Step size factor rand * (1 + cos(pi * progress)), in [0, 2).

    Decays to exactly 0 at the final iteration. Reads slot 4.
    """
    u = rng.draw_uniform(key.advanced(SLOT_FORAGE))
    return _forage_factor_value(u, iteration_ratio(iteration, max_iterations))


def _draw_sign(key: rng.StreamKey) -> float:
    return 1.0 if rng.draw_uniform(key.advanced(SLOT_SIGN)) < 0.5 else -1.0


def _mask_from_perm(dim: int, count: int, key: rng.StreamKey) -> np.ndarray:
    mask = np.zeros(dim)
    if count > 0:
        chosen = rng.randperm(dim, count, key.advanced(MASK_BASE))
        mask[chosen - 1] = 1.0
    return mask


def reproduction_mask(dim: int, key: rng.StreamKey) -> np.ndarray:
    """0/1 vector with exactly ceil(dim * rand) ones, positions uniform.

    Reads slot 2 for the size and the mask block for the positions.
    """
    u = rng.draw_uniform(key.advanced(SLOT_MASK_SIZE))
    count = int(math.ceil(dim * u))
    return _mask_from_perm(dim, count, key)


def forage_mask(dim: int, i: int, ps: int, key: rng.StreamKey) -> np.ndarray:
    """0/1 vector with exactly ceil(dim * i / ps) ones, positions uniform.

    Better ranks get sparser masks and so move fewer dimensions at a time.
    Reads the mask block.
    """
    count = int(math.ceil(dim * i / ps))
    return _mask_from_perm(dim, count, key)


def select_partner(i: int, ps: int, key: rng.StreamKey) -> int:
    """Uniform partner rank j != i for autotrophic foraging; reads slot 5.

    A population of one partners with itself.
    """
    if ps == 1:
        return i
    u = rng.draw_uniform(key.advanced(SLOT_PARTNER))
    j0 = int(u * (ps - 1))
    if j0 > ps - 2:
        j0 = ps - 2
    if j0 >= i - 1:
        j0 += 1
    return j0 + 1


def pair_neighbors_autotroph(i: int, ps: int, pairs: int, key: rng.StreamKey) -> np.ndarray:
    """Random neighbour pairs (km, kp) with km below rank i and kp above,
    1-based, shape (pairs, 2).

    At the ends the missing side falls back to ``i`` itself and its draw
    goes unread. Pair k reads the pair block counters 2k and 2k + 1.
    """
    base = key.advanced(PAIRS_BASE)
    out = np.empty((pairs, 2), dtype=np.int64)
    for k in range(pairs):
        if i == 1:
            km = 1
        else:
            u = rng.draw_uniform(base.advanced(2 * k))
            km = 1 + int(u * (i - 1))
            if km > i - 1:
                km = i - 1
        if i == ps:
            kp = ps
        else:
            u = rng.draw_uniform(base.advanced(2 * k + 1))
            kp = i + 1 + int(u * (ps - i))
            if kp > ps:
                kp = ps
        out[k, 0] = km
        out[k, 1] = kp
    return out


def pair_neighbors_heterotroph(i: int, ps: int, pairs: int) -> np.ndarray:
    """Deterministic neighbour pairs (max(i-k, 1), min(i+k, ps)) for
    k = 1..pairs, 1-based, shape (pairs, 2). Consumes no draws.
    """
    out = np.empty((pairs, 2), dtype=np.int64)
    for k in range(1, pairs + 1):
        out[k - 1, 0] = max(i - k, 1)
        out[k - 1, 1] = min(i + k, ps)
    return out


def weighted_rank_difference(pop: Population, pairs: np.ndarray, eps: float) -> np.ndarray:
    """Mean weighted neighbour difference (1/n) * sum_k w_k (X_km - X_kp).

    Accumulates in pair order; the compiled kernels do the same, keeping
    the two engines bit-identical.
    """
    acc = np.zeros(pop.dim)
    for km, kp in pairs:
        w = rank_weight(float(pop.fitness[km - 1]), float(pop.fitness[kp - 1]), eps)
        acc = acc + w * (pop.positions[km - 1] - pop.positions[kp - 1])
    return acc / len(pairs)


# ---------------------------------------------------------------------------
# Candidate construction (unclamped)
# ---------------------------------------------------------------------------


def dormancy_update(cfg: ApoConfig, key: rng.StreamKey) -> np.ndarray:
    """Fresh uniform position, each component in [lower, upper).

    Independent of the old position. Reads the vector block.
    """
    u = rng.draw_uniform_vector(key.advanced(VECTOR_BASE), cfg.dim)
    return cfg.bounds.lower + u * cfg.bounds.span


def reproduction_update(x: Individual, cfg: ApoConfig, key: rng.StreamKey) -> np.ndarray:
    """Signed, scaled perturbation of a random subset of dimensions.

    Moves by sign * rand times a fresh in-bounds offset on the masked
    dimensions only; one scalar sign per invocation. Reads slots 1 to 3,
    the vector block and the mask block.
    """
    sign = _draw_sign(key)
    magnitude = rng.draw_uniform(key.advanced(SLOT_MAGNITUDE))
    u = rng.draw_uniform_vector(key.advanced(VECTOR_BASE), cfg.dim)
    mask = reproduction_mask(cfg.dim, key)
    offsets = cfg.bounds.lower + u * cfg.bounds.span
    scale = sign * magnitude
    return x.position + (scale * offsets) * mask


def autotroph_update(i: int, pop: Population, cfg: ApoConfig, key: rng.StreamKey) -> np.ndarray:
    """Move rank ``i`` toward a random partner plus neighbour differences.

    Requires ``pop`` sorted by fitness; the iteration is taken from
    ``pop.iteration``. Reads slots 4 and 5, the mask block and the pair
    block.
    """
    x = pop.positions[i - 1]
    j = select_partner(i, pop.size, key)
    f = foraging_factor(key, pop.iteration, cfg.max_iterations)
    mask = forage_mask(cfg.dim, i, pop.size, key)
    pairs = pair_neighbors_autotroph(i, pop.size, cfg.neighbor_pairs, key)
    epn = weighted_rank_difference(pop, pairs, cfg.eps)
    direction = (pop.positions[j - 1] - x) + epn
    return x + (f * direction) * mask


def heterotroph_update(i: int, pop: Population, cfg: ApoConfig, iteration: int, key: rng.StreamKey) -> np.ndarray:
    """Move rank ``i`` toward a randomly shifted copy of itself plus fixed
    rank-offset neighbour differences.

    The shift is (1 +/- Rand * (1 - progress)) elementwise with one scalar
    sign, so it shrinks to nothing at the final iteration. Requires ``pop``
    sorted by fitness. Reads slots 1 and 4, the vector block and the mask
    block.
    """
    x = pop.positions[i - 1]
    sign = _draw_sign(key)
    f = foraging_factor(key, iteration, cfg.max_iterations)
    u = rng.draw_uniform_vector(key.advanced(VECTOR_BASE), cfg.dim)
    decay = 1.0 - iteration_ratio(iteration, cfg.max_iterations)
    near = (1.0 + (sign * u) * decay) * x
    mask = forage_mask(cfg.dim, i, pop.size, key)
    pairs = pair_neighbors_heterotroph(i, pop.size, cfg.neighbor_pairs)
    eph = weighted_rank_difference(pop, pairs, cfg.eps)
    direction = (near - x) + eph
    return x + (f * direction) * mask


# ---------------------------------------------------------------------------
# Selection and ordering
# ---------------------------------------------------------------------------


def greedy_select(old: Individual, candidate_position: np.ndarray, objective: Objective) -> SelectionResult:
    """Keep the better of the incumbent and an already clamped candidate.

    The candidate is evaluated at most once and replaces the incumbent only
    on a strict improvement; ties keep the incumbent. A candidate with a
    non-finite position or fitness is dropped and flagged.
    """
    if not np.all(np.isfinite(candidate_position)):
        return SelectionResult(old, False, True)
    fitness = evaluate_unchecked(objective, candidate_position)
    if not math.isfinite(fitness):
        return SelectionResult(old, False, True)
    if fitness < old.fitness:
        return SelectionResult(Individual(np.array(candidate_position, dtype=np.float64), fitness), True, False)
    return SelectionResult(old, False, False)


def sort_by_fitness(pop: Population) -> Population:
    """Population reordered by ascending fitness, ties keeping their order."""
    order = np.argsort(pop.fitness, kind="stable")
    return Population(
        pop.positions[order].copy(),
        pop.fitness[order].copy(),
        iteration=pop.iteration,
        fe_count=pop.fe_count,
        warnings=pop.warnings,
    )
