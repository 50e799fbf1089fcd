"""Population-based optimizer modeled on protozoa foraging behaviour.

The package minimizes box-constrained objectives with a population whose
individuals forage (autotroph or heterotroph mode), reproduce, or go
dormant. Every random draw comes from a counter-based keyed generator, so
runs are reproducible bit for bit and the sequential and parallel engines
produce identical populations.

Quick start::

    import protozoa as pz

    cfg = pz.ApoConfig(ps=100, dim=10, bounds=pz.Bounds(-100.0, 100.0, 10),
                       max_iterations=500, seed=42)
    result = pz.run(cfg, "sphere")
    print(result.best_fitness)

Environment flags: ``PROTOZOA_KERNELS`` picks the compute backend
(``auto``, ``numba``, ``numpy``), ``PROTOZOA_SEED`` sets the CLI's default
seed.
"""

from .core import ApoConfig, ConfigError, Individual, Population
from .engine import (
    EngineMode,
    BenchmarkResult,
    ModeAggregate,
    RunResult,
    benchmark,
    initialize,
    run,
    step,
)
from .imaging import (
    GrayImage,
    Histogram,
    ImageFormatError,
    ThresholdResult,
    apply_threshold,
    apo_threshold,
    between_class_variance,
    brute_force_otsu,
    histogram,
    load_image,
    load_image_file,
    write_pgm,
)
from .objectives import (
    Bounds,
    FUNCTION_NAMES,
    Objective,
    clamp,
    evaluate,
    external_objective,
    get_objective,
    table_objective,
)
from .rng import StreamKey, draw_uniform, draw_uniform_vector, randperm

__version__ = "0.1.0"

__all__ = [
    "ApoConfig",
    "BenchmarkResult",
    "Bounds",
    "ConfigError",
    "EngineMode",
    "FUNCTION_NAMES",
    "GrayImage",
    "Histogram",
    "ImageFormatError",
    "Individual",
    "ModeAggregate",
    "Objective",
    "Population",
    "RunResult",
    "StreamKey",
    "ThresholdResult",
    "apply_threshold",
    "apo_threshold",
    "benchmark",
    "between_class_variance",
    "brute_force_otsu",
    "clamp",
    "draw_uniform",
    "draw_uniform_vector",
    "evaluate",
    "external_objective",
    "get_objective",
    "histogram",
    "initialize",
    "load_image",
    "load_image_file",
    "randperm",
    "run",
    "step",
    "table_objective",
    "write_pgm",
    "__version__",
]
