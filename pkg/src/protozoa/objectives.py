"""Benchmark objective functions and search-space bounds.

All functions are minimised. The six built-in functions are the unshifted,
unrotated basic forms, with 1-based component index i and dimension D:

    sphere                      sum_i x_i^2
    bent_cigar                  x_1^2 + 10^6 * sum_{i>=2} x_i^2
    high_conditioned_elliptic   sum_i (10^6)^((i-1)/(D-1)) * x_i^2
    hgbat                       |S2^2 - S1^2|^(1/2) + (0.5*S2 + S1)/D + 0.5
                                with S1 = sum_i x_i, S2 = sum_i x_i^2
    rosenbrock                  sum_{i<D} 100*(x_{i+1} - x_i^2)^2 + (x_i - 1)^2
    griewank                    1 + S2/4000 - prod_i cos(x_i / sqrt(i))

Sums and products accumulate left to right in component order. Both
execution backends follow the same order, so fitness values agree bit for
bit between them; do not "optimise" the accumulation order here without
touching the compiled kernels too.

Two more objective kinds exist for internal use: ``table``, a lookup of a
precomputed value table by the rounded first component (used by the image
thresholding application), and ``external``, a wrapper around a caller
supplied Python function (only the numpy backend can run these).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

# Stable codes used to dispatch inside compiled kernels.
SPHERE = 0
BENT_CIGAR = 1
HIGH_CONDITIONED_ELLIPTIC = 2
HGBAT = 3
ROSENBROCK = 4
GRIEWANK = 5
TABLE = 6
EXTERNAL = -1


@dataclass(frozen=True)
class Bounds:
    """Box constraint applied uniformly to every dimension."""

    lower: float
    upper: float
    dim: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"lower must be < upper, got [{self.lower}, {self.upper}]")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    @property
    def span(self) -> float:
        return self.upper - self.lower


def clamp(x: np.ndarray, bounds: Bounds) -> np.ndarray:
    """Project ``x`` onto the box, component-wise. NaN passes through."""
    if x.shape != (bounds.dim,):
        raise ValueError(f"expected shape ({bounds.dim},), got {x.shape}")
    return np.clip(x, bounds.lower, bounds.upper)


@dataclass(frozen=True)
class Objective:
    """A named minimisation target.

    ``code`` selects the compiled kernel implementation; ``table`` feeds the
    lookup objective; ``func`` holds an external Python callable.
    """

    name: str
    code: int
    min_dim: int = 1
    table: Optional[np.ndarray] = field(default=None, repr=False)
    func: Optional[Callable[[np.ndarray], float]] = field(default=None, repr=False)


@lru_cache(maxsize=None)
def elliptic_weights(dim: int) -> np.ndarray:
    """Per-component weights (10^6)^((i-1)/(D-1)), with weight 1 for D = 1.

    Computed once with scalar exponentiation and cached: numpy's pow kernel
    rounds differently from the scalar one on some platforms, and both
    backends must read identical weights.
    """
    if dim == 1:
        return np.ones(1)
    w = np.empty(dim)
    for i in range(dim):
        w[i] = 10.0 ** (6.0 * i / (dim - 1))
    w.setflags(write=False)
    return w


def _seq_sum(terms: np.ndarray) -> float:
    # Left-to-right accumulation, matching the compiled kernels' loops.
    if terms.size == 0:
        return 0.0
    return float(np.cumsum(terms)[-1])


def _sphere(x: np.ndarray) -> float:
    return _seq_sum(x * x)


def _bent_cigar(x: np.ndarray) -> float:
    tail = x[1:]
    return float(x[0] * x[0] + 1e6 * _seq_sum(tail * tail))


def _elliptic(x: np.ndarray) -> float:
    w = elliptic_weights(x.size)
    return _seq_sum(w * x * x)


def _hgbat(x: np.ndarray) -> float:
    s1 = _seq_sum(x)
    s2 = _seq_sum(x * x)
    return math.sqrt(abs(s2 * s2 - s1 * s1)) + (0.5 * s2 + s1) / x.size + 0.5


def _rosenbrock(x: np.ndarray) -> float:
    a = x[1:] - x[:-1] * x[:-1]
    b = x[:-1] - 1.0
    return _seq_sum(100.0 * (a * a) + b * b)


def _griewank(x: np.ndarray) -> float:
    s = _seq_sum(x * x)
    roots = np.sqrt(np.arange(1, x.size + 1, dtype=np.float64))
    p = float(np.cumprod(np.cos(x / roots))[-1])
    return 1.0 + s / 4000.0 - p


_FORMULAS: dict[int, Callable[[np.ndarray], float]] = {
    SPHERE: _sphere,
    BENT_CIGAR: _bent_cigar,
    HIGH_CONDITIONED_ELLIPTIC: _elliptic,
    HGBAT: _hgbat,
    ROSENBROCK: _rosenbrock,
    GRIEWANK: _griewank,
}

#: The functions selectable from the benchmark CLI, in menu order.
FUNCTION_NAMES = (
    "sphere",
    "bent_cigar",
    "high_conditioned_elliptic",
    "hgbat",
    "rosenbrock",
    "griewank",
)

_REGISTRY: dict[str, Objective] = {
    "sphere": Objective("sphere", SPHERE),
    "bent_cigar": Objective("bent_cigar", BENT_CIGAR),
    "high_conditioned_elliptic": Objective("high_conditioned_elliptic", HIGH_CONDITIONED_ELLIPTIC, min_dim=2),
    "hgbat": Objective("hgbat", HGBAT, min_dim=2),
    "rosenbrock": Objective("rosenbrock", ROSENBROCK, min_dim=2),
    "griewank": Objective("griewank", GRIEWANK),
}


def get_objective(name: str) -> Objective:
    """Look up a built-in objective by its CLI name."""
    try:
        return _REGISTRY[name]
    except KeyError:
        valid = ", ".join(FUNCTION_NAMES)
        raise ValueError(f"unknown objective {name!r}; valid ids: {valid}") from None


def table_objective(name: str, table: np.ndarray) -> Objective:
    """Objective that returns ``table[round(x[0])]``, index clamped to range.

    The first component is rounded half-up; values past either end of the
    table read the end entry. Only the first component matters.
    """
    t = np.ascontiguousarray(table, dtype=np.float64)
    if t.ndim != 1 or t.size < 1:
        raise ValueError("table must be a non-empty 1-D array")
    return Objective(name, TABLE, min_dim=1, table=t)


def external_objective(func: Callable[[np.ndarray], float], name: str = "external", min_dim: int = 1) -> Objective:
    """Wrap a user-supplied callable as an objective."""
    if not callable(func):
        raise TypeError("func must be callable")
    return Objective(name, EXTERNAL, min_dim=min_dim, func=func)


def resolve_objective(objective) -> Objective:
    """Accept an Objective, a built-in name, or a bare callable."""
    if isinstance(objective, Objective):
        return objective
    if isinstance(objective, str):
        return get_objective(objective)
    if callable(objective):
        return external_objective(objective)
    raise TypeError(f"cannot interpret {objective!r} as an objective")


def _table_lookup(table: np.ndarray, x0: float) -> float:
    idx = int(math.floor(x0 + 0.5))
    if idx < 0:
        idx = 0
    elif idx > table.size - 1:
        idx = table.size - 1
    return float(table[idx])


def evaluate_unchecked(objective: Objective, x: np.ndarray) -> float:
    """Evaluate without argument validation. Non-finite inputs flow through."""
    if objective.code == TABLE:
        return _table_lookup(objective.table, float(x[0]))
    if objective.code == EXTERNAL:
        return float(objective.func(x))
    return _FORMULAS[objective.code](x)


def evaluate(objective, x: np.ndarray) -> float:
    """Evaluate an objective at ``x``, validating the argument first.

    Raises ``ValueError`` if ``x`` is shorter than the objective's minimum
    dimension or contains a non-finite component.
    """
    obj = resolve_objective(objective)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < obj.min_dim:
        raise ValueError(f"{obj.name} needs a 1-D point with >= {obj.min_dim} components, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{obj.name}: input has non-finite components")
    return evaluate_unchecked(obj, x)
