"""Tests for the objective functions.

Reference evaluators below are written as plain Python loops over the
printed formulas, using math.fsum, so they share no code (and no
accumulation order) with the package. Agreement is checked to a tight
relative tolerance; exactness claims use hand-computable points instead.
"""

import math

import numpy as np
import pytest

from protozoa import objectives
from protozoa.objectives import (
    Bounds,
    FUNCTION_NAMES,
    clamp,
    elliptic_weights,
    evaluate,
    external_objective,
    get_objective,
    resolve_objective,
    table_objective,
)


def ref_sphere(x):
    return math.fsum(v * v for v in x)


def ref_bent_cigar(x):
    return x[0] * x[0] + 1e6 * math.fsum(v * v for v in x[1:])


def ref_elliptic(x):
    d = len(x)
    return math.fsum((10.0**6) ** (i / (d - 1)) * x[i] * x[i] for i in range(d))


def ref_hgbat(x):
    s1 = math.fsum(x)
    s2 = math.fsum(v * v for v in x)
    return abs(s2 * s2 - s1 * s1) ** 0.5 + (0.5 * s2 + s1) / len(x) + 0.5


def ref_rosenbrock(x):
    return math.fsum(
        100.0 * (x[i + 1] - x[i] * x[i]) ** 2 + (x[i] - 1.0) ** 2 for i in range(len(x) - 1)
    )


def ref_griewank(x):
    s = math.fsum(v * v for v in x)
    p = 1.0
    for i, v in enumerate(x):
        p *= math.cos(v / math.sqrt(i + 1.0))
    return 1.0 + s / 4000.0 - p


REFERENCES = {
    "sphere": ref_sphere,
    "bent_cigar": ref_bent_cigar,
    "high_conditioned_elliptic": ref_elliptic,
    "hgbat": ref_hgbat,
    "rosenbrock": ref_rosenbrock,
    "griewank": ref_griewank,
}


def test_all_six_match_the_reference_evaluators():
    rnd = np.random.default_rng(42)
    for name in FUNCTION_NAMES:
        obj = get_objective(name)
        for _ in range(200):
            dim = int(rnd.integers(max(obj.min_dim, 2), 40))
            x = rnd.uniform(-100, 100, size=dim)
            got = evaluate(obj, x)
            want = REFERENCES[name](x.tolist())
            assert got == pytest.approx(want, rel=1e-12, abs=1e-9), (name, dim)


# ---------------------------------------------------------------------------
# hand-computable exact points


def test_sphere_exact_points():
    assert evaluate("sphere", np.zeros(4)) == 0.0
    assert evaluate("sphere", np.array([3.0, 4.0])) == 25.0
    assert evaluate("sphere", np.full(10, 2.0)) == 40.0


def test_bent_cigar_separates_head_and_tail():
    assert evaluate("bent_cigar", np.array([1.0, 0.0, 0.0])) == 1.0
    assert evaluate("bent_cigar", np.array([0.0, 1.0, 0.0])) == 1e6
    assert evaluate("bent_cigar", np.array([2.0, 0.0, 3.0])) == 4.0 + 9e6


def test_elliptic_weight_endpoints():
    w = elliptic_weights(11)
    assert w[0] == 1.0
    assert w[-1] == 1e6
    assert np.all(np.diff(w) > 0)
    assert elliptic_weights(1).tolist() == [1.0]
    # the cached array cannot be scribbled on by accident
    with pytest.raises(ValueError):
        w[0] = 2.0


def test_elliptic_exact_points():
    assert evaluate("high_conditioned_elliptic", np.zeros(5)) == 0.0
    # two dims: weights are exactly 1 and 1e6
    assert evaluate("high_conditioned_elliptic", np.array([2.0, 1.0])) == 4.0 + 1e6


def test_hgbat_zero_at_all_minus_one():
    for dim in (2, 3, 7, 30):
        assert evaluate("hgbat", np.full(dim, -1.0)) == 0.0


def test_rosenbrock_zero_at_ones():
    for dim in (2, 5, 20):
        assert evaluate("rosenbrock", np.ones(dim)) == 0.0
    assert evaluate("rosenbrock", np.array([0.0, 0.0])) == 1.0


def test_griewank_zero_at_origin():
    for dim in (1, 4, 25):
        assert evaluate("griewank", np.zeros(dim)) == 0.0


# ---------------------------------------------------------------------------
# validation and lookup


def test_min_dim_is_enforced():
    for name in ("high_conditioned_elliptic", "hgbat", "rosenbrock"):
        with pytest.raises(ValueError):
            evaluate(name, np.array([1.0]))
    assert evaluate("sphere", np.array([2.0])) == 4.0


def test_non_finite_input_is_rejected():
    with pytest.raises(ValueError):
        evaluate("sphere", np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        evaluate("sphere", np.array([np.inf, 0.0]))


def test_unknown_name_lists_the_valid_ids():
    with pytest.raises(ValueError) as err:
        get_objective("sphere2")
    for name in FUNCTION_NAMES:
        assert name in str(err.value)


def test_registry_menu_order():
    assert FUNCTION_NAMES == (
        "sphere", "bent_cigar", "high_conditioned_elliptic", "hgbat", "rosenbrock", "griewank",
    )
    for name in FUNCTION_NAMES:
        assert get_objective(name).name == name


# ---------------------------------------------------------------------------
# clamp


def test_clamp_projects_onto_the_box():
    b = Bounds(-1.0, 2.0, 4)
    x = np.array([-5.0, 0.5, 7.0, 2.0])
    assert clamp(x, b).tolist() == [-1.0, 0.5, 2.0, 2.0]


def test_clamp_lets_nan_through():
    b = Bounds(0.0, 1.0, 2)
    out = clamp(np.array([np.nan, 5.0]), b)
    assert math.isnan(out[0]) and out[1] == 1.0


def test_clamp_shape_mismatch():
    with pytest.raises(ValueError):
        clamp(np.zeros(3), Bounds(0.0, 1.0, 2))


def test_bounds_validation():
    with pytest.raises(ValueError):
        Bounds(1.0, 1.0, 3)
    with pytest.raises(ValueError):
        Bounds(0.0, math.inf, 3)
    with pytest.raises(ValueError):
        Bounds(0.0, 1.0, 0)


# ---------------------------------------------------------------------------
# table and external objectives


def test_table_lookup_rounds_half_up_and_clamps():
    t = table_objective("steps", np.array([10.0, 20.0, 30.0]))
    assert evaluate(t, np.array([0.0])) == 10.0
    assert evaluate(t, np.array([0.49])) == 10.0
    assert evaluate(t, np.array([0.5])) == 20.0   # half rounds up
    assert evaluate(t, np.array([1.5])) == 30.0
    assert evaluate(t, np.array([250.0])) == 30.0  # clamped to the last entry
    assert evaluate(t, np.array([-4.0])) == 10.0   # clamped to the first
    # only the first component is read
    assert evaluate(t, np.array([1.0, 99.0])) == 20.0


def test_table_objective_validation():
    with pytest.raises(ValueError):
        table_objective("empty", np.array([]))
    with pytest.raises(ValueError):
        table_objective("matrix", np.zeros((2, 2)))


def test_external_objective_wraps_a_callable():
    calls = []

    def f(x):
        calls.append(x.copy())
        return float(x.sum())

    obj = external_objective(f, name="summer")
    assert evaluate(obj, np.array([1.0, 2.0])) == 3.0
    assert len(calls) == 1
    with pytest.raises(TypeError):
        external_objective("not callable")


def test_resolve_objective_accepts_all_three_spellings():
    assert resolve_objective("sphere").code == objectives.SPHERE
    obj = get_objective("hgbat")
    assert resolve_objective(obj) is obj
    wrapped = resolve_objective(lambda x: 0.0)
    assert wrapped.code == objectives.EXTERNAL
    with pytest.raises(TypeError):
        resolve_objective(123)


# ---------------------------------------------------------------------------
# the compiled kernels evaluate the exact same numbers


def test_compiled_evaluator_is_bit_identical():
    from protozoa.kernels import numba_backend as nb

    rnd = np.random.default_rng(7)
    for name in FUNCTION_NAMES:
        obj = get_objective(name)
        code = obj.code
        for _ in range(50):
            dim = int(rnd.integers(max(obj.min_dim, 2), 30))
            x = np.ascontiguousarray(rnd.uniform(-80, 80, size=dim))
            if name == "high_conditioned_elliptic":
                table = np.array(elliptic_weights(dim))
            else:
                table = np.empty(0)
            got = nb._eval(np.int64(code), x, table)
            assert got == evaluate(obj, x), (name, dim)


def test_compiled_table_lookup_is_bit_identical():
    from protozoa.kernels import numba_backend as nb
    from protozoa.objectives import TABLE

    table = np.array([5.0, -1.0, 2.5, 9.0])
    for x0 in (-3.0, 0.0, 0.49, 0.5, 1.2, 2.51, 3.0, 77.0):
        got = nb._eval(np.int64(TABLE), np.array([x0]), table)
        assert got == evaluate(table_objective("t", table), np.array([x0]))
