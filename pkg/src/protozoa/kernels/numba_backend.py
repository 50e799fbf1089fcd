"""Compiled update phase: a numba mirror of the numpy reference path.

Every floating-point expression here follows the exact evaluation order of
its counterpart in :mod:`protozoa.core` and :mod:`protozoa.objectives`
(scalar transcendentals through libm, left-to-right accumulation), so both
backends produce bit-identical populations. Change them together or not at
all; the cross-backend equivalence tests will catch any drift.

The parallel driver distributes individuals across threads with no shared
mutable state: each row reads the pre-step snapshot and writes only its
own output slot, which makes the result independent of thread count and
schedule.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from numba import njit, prange

from ..core import ApoConfig, iteration_ratio, p_autotroph_heterotroph
from ..objectives import EXTERNAL, HIGH_CONDITIONED_ELLIPTIC, TABLE, Objective, elliptic_weights

NAME = "numba"

# Hash constants, shared with protozoa.rng.
_H0 = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xFF51AFD7ED558CCD)
_M2 = np.uint64(0xC4CEB9FE1A85EC53)
_S33 = np.uint64(33)
_S11 = np.uint64(11)
_INV_2_53 = 1.0 / 9007199254740992.0

# Draw slot layout, shared with protozoa.core.
_U_DECISION = np.uint64(0)
_U_SIGN = np.uint64(1)
_U_MASK_SIZE = np.uint64(2)
_U_MAGNITUDE = np.uint64(3)
_U_FORAGE = np.uint64(4)
_U_PARTNER = np.uint64(5)
_U_VECTOR = np.uint64(8)
_U_MASK = np.uint64(1 << 32)
_U_PAIRS = np.uint64(1 << 33)


def max_workers() -> int:
    return int(numba.config.NUMBA_NUM_THREADS)


@njit(cache=True)
def _mix(z):
    z ^= z >> _S33
    z *= _M1
    z ^= z >> _S33
    z *= _M2
    z ^= z >> _S33
    return z


@njit(cache=True)
def _stream_base(seed, iteration, individual):
    h = _mix(_H0 ^ seed)
    h = _mix(h ^ iteration)
    return _mix(h ^ individual)


@njit(cache=True)
def _u(base, counter):
    return np.float64(_mix(base ^ counter) >> _S11) * _INV_2_53


@njit(cache=True)
def _fill_mask(mask, perm, dim, count, base):
    # Partial Fisher-Yates over 1..dim, then scatter; mirrors rng.randperm.
    for d in range(dim):
        perm[d] = d + 1
    for j in range(count):
        u = _u(base, _U_MASK + np.uint64(j))
        r = j + int(u * (dim - j))
        if r > dim - 1:
            r = dim - 1
        t = perm[j]
        perm[j] = perm[r]
        perm[r] = t
    for d in range(dim):
        mask[d] = 0.0
    for j in range(count):
        mask[perm[j] - 1] = 1.0


@njit(cache=True)
def _eval(code, x, table):
    n = x.shape[0]
    if code == 0:  # sphere
        s = 0.0
        for d in range(n):
            s += x[d] * x[d]
        return s
    elif code == 1:  # bent_cigar
        s = 0.0
        for d in range(1, n):
            s += x[d] * x[d]
        return x[0] * x[0] + 1e6 * s
    elif code == 2:  # high_conditioned_elliptic; table holds the weights
        s = 0.0
        for d in range(n):
            s += (table[d] * x[d]) * x[d]
        return s
    elif code == 3:  # hgbat
        s1 = 0.0
        s2 = 0.0
        for d in range(n):
            s1 += x[d]
            s2 += x[d] * x[d]
        return math.sqrt(abs(s2 * s2 - s1 * s1)) + (0.5 * s2 + s1) / n + 0.5
    elif code == 4:  # rosenbrock
        s = 0.0
        for d in range(n - 1):
            a = x[d + 1] - x[d] * x[d]
            b = x[d] - 1.0
            s += 100.0 * (a * a) + b * b
        return s
    elif code == 5:  # griewank
        s = 0.0
        p = 1.0
        for d in range(n):
            s += x[d] * x[d]
            p *= math.cos(x[d] / math.sqrt(d + 1.0))
        return 1.0 + s / 4000.0 - p
    else:  # value table lookup by rounded first component
        idx = int(math.floor(x[0] + 0.5))
        if idx < 0:
            idx = 0
        if idx > table.shape[0] - 1:
            idx = table.shape[0] - 1
        return table[idx]


@njit(cache=True)
def _update_row(
    i0,
    positions,
    fitness,
    in_dr,
    out_pos,
    out_fit,
    out_acc,
    out_warn,
    seed,
    key_iteration,
    ps,
    dim,
    npairs,
    lower,
    upper,
    span,
    eps,
    p_ah,
    f_mult,
    decay,
    code,
    table,
):
    i = i0 + 1
    base = _stream_base(seed, key_iteration, np.uint64(i))
    cand = np.empty(dim)
    mask = np.empty(dim)
    perm = np.empty(dim, dtype=np.int64)
    u_dec = _u(base, _U_DECISION)

    if in_dr[i0]:
        q = 1.0 - i / ps
        thr = 0.5 * (1.0 - math.cos(q * math.pi))
        if u_dec < thr:
            # dormancy: fresh uniform position
            for d in range(dim):
                uv = _u(base, _U_VECTOR + np.uint64(d))
                cand[d] = lower + uv * span
        else:
            # reproduction: signed scaled offset on masked dims
            sgn = 1.0 if _u(base, _U_SIGN) < 0.5 else -1.0
            mag = _u(base, _U_MAGNITUDE)
            usize = _u(base, _U_MASK_SIZE)
            count = int(math.ceil(dim * usize))
            _fill_mask(mask, perm, dim, count, base)
            scale = sgn * mag
            for d in range(dim):
                uv = _u(base, _U_VECTOR + np.uint64(d))
                off = lower + uv * span
                cand[d] = positions[i0, d] + (scale * off) * mask[d]
    else:
        acc = np.empty(dim)
        for d in range(dim):
            acc[d] = 0.0
        if u_dec < p_ah:
            # autotroph: toward a random partner plus neighbour differences
            if ps == 1:
                j = i
            else:
                up = _u(base, _U_PARTNER)
                j0 = int(up * (ps - 1))
                if j0 > ps - 2:
                    j0 = ps - 2
                if j0 >= i - 1:
                    j0 += 1
                j = j0 + 1
            uf = _u(base, _U_FORAGE)
            f = uf * f_mult
            count = int(math.ceil(dim * i / ps))
            _fill_mask(mask, perm, dim, count, base)
            for k in range(npairs):
                if i == 1:
                    km = 1
                else:
                    ukm = _u(base, _U_PAIRS + np.uint64(2 * k))
                    km = 1 + int(ukm * (i - 1))
                    if km > i - 1:
                        km = i - 1
                if i == ps:
                    kp = ps
                else:
                    ukp = _u(base, _U_PAIRS + np.uint64(2 * k + 1))
                    kp = i + 1 + int(ukp * (ps - i))
                    if kp > ps:
                        kp = ps
                w = math.exp(-abs(fitness[km - 1] / (fitness[kp - 1] + eps)))
                for d in range(dim):
                    acc[d] = acc[d] + w * (positions[km - 1, d] - positions[kp - 1, d])
            for d in range(dim):
                epn = acc[d] / npairs
                direction = (positions[j - 1, d] - positions[i0, d]) + epn
                cand[d] = positions[i0, d] + (f * direction) * mask[d]
        else:
            # heterotroph: toward a shifted copy plus rank-offset differences
            sgn = 1.0 if _u(base, _U_SIGN) < 0.5 else -1.0
            uf = _u(base, _U_FORAGE)
            f = uf * f_mult
            count = int(math.ceil(dim * i / ps))
            _fill_mask(mask, perm, dim, count, base)
            for k in range(1, npairs + 1):
                km = i - k
                if km < 1:
                    km = 1
                kp = i + k
                if kp > ps:
                    kp = ps
                w = math.exp(-abs(fitness[km - 1] / (fitness[kp - 1] + eps)))
                for d in range(dim):
                    acc[d] = acc[d] + w * (positions[km - 1, d] - positions[kp - 1, d])
            for d in range(dim):
                uv = _u(base, _U_VECTOR + np.uint64(d))
                near = (1.0 + (sgn * uv) * decay) * positions[i0, d]
                eph = acc[d] / npairs
                direction = (near - positions[i0, d]) + eph
                cand[d] = positions[i0, d] + (f * direction) * mask[d]

    # clamp, evaluate, greedy select against the incumbent
    ok = True
    for d in range(dim):
        v = cand[d]
        if v < lower:
            v = lower
        elif v > upper:
            v = upper
        cand[d] = v
        if not math.isfinite(v):
            ok = False
    accepted = False
    warned = False
    new_fit = 0.0
    if ok:
        new_fit = _eval(code, cand, table)
        if math.isfinite(new_fit):
            accepted = new_fit < fitness[i0]
        else:
            warned = True
    else:
        warned = True
    if accepted:
        for d in range(dim):
            out_pos[i0, d] = cand[d]
        out_fit[i0] = new_fit
    else:
        for d in range(dim):
            out_pos[i0, d] = positions[i0, d]
        out_fit[i0] = fitness[i0]
    out_acc[i0] = accepted
    out_warn[i0] = warned


@njit(cache=True)
def _step_sequential(
    positions, fitness, in_dr, out_pos, out_fit, out_acc, out_warn,
    seed, key_iteration, npairs, lower, upper, span, eps, p_ah, f_mult, decay, code, table,
):
    ps = positions.shape[0]
    dim = positions.shape[1]
    for i0 in range(ps):
        _update_row(
            i0, positions, fitness, in_dr, out_pos, out_fit, out_acc, out_warn,
            seed, key_iteration, ps, dim, npairs, lower, upper, span, eps,
            p_ah, f_mult, decay, code, table,
        )


@njit(parallel=True, cache=True)
def _step_parallel(
    positions, fitness, in_dr, out_pos, out_fit, out_acc, out_warn,
    seed, key_iteration, npairs, lower, upper, span, eps, p_ah, f_mult, decay, code, table,
):
    ps = positions.shape[0]
    dim = positions.shape[1]
    for i0 in prange(ps):
        _update_row(
            i0, positions, fitness, in_dr, out_pos, out_fit, out_acc, out_warn,
            seed, key_iteration, ps, dim, npairs, lower, upper, span, eps,
            p_ah, f_mult, decay, code, table,
        )


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
    if objective.code == EXTERNAL:
        raise ValueError("the compiled backend cannot call external objective functions; use the numpy backend")
    if objective.code == HIGH_CONDITIONED_ELLIPTIC:
        table = np.array(elliptic_weights(cfg.dim))
    elif objective.code == TABLE:
        table = np.ascontiguousarray(objective.table)
    else:
        table = np.empty(0)

    positions = np.ascontiguousarray(positions, dtype=np.float64)
    fitness = np.ascontiguousarray(fitness, dtype=np.float64)
    in_dr = np.ascontiguousarray(in_dr, dtype=np.bool_)
    ps = positions.shape[0]
    out_pos = np.empty_like(positions)
    out_fit = np.empty(ps)
    out_acc = np.zeros(ps, dtype=np.bool_)
    out_warn = np.zeros(ps, dtype=np.bool_)

    ratio = iteration_ratio(iteration, cfg.max_iterations)
    args = (
        positions, fitness, in_dr, out_pos, out_fit, out_acc, out_warn,
        np.uint64(cfg.seed), np.uint64(key_iteration), cfg.neighbor_pairs,
        cfg.bounds.lower, cfg.bounds.upper, cfg.bounds.span, cfg.eps,
        p_autotroph_heterotroph(iteration, cfg.max_iterations),
        1.0 + math.cos(ratio * math.pi),
        1.0 - ratio,
        objective.code, table,
    )
    if parallel:
        numba.set_num_threads(max(1, min(workers, max_workers())))
        _step_parallel(*args)
    else:
        _step_sequential(*args)
    return out_pos, out_fit, out_acc, int(out_warn.sum())
