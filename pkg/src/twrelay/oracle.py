"""Brute-force ground truth and property validators.

Nothing in here trusts the dual solver: the grid search enumerates rate
profiles and time splits directly from the power formulas, including
splits that leave part of the frame idle, so it independently confirms
both the allocation energies and the full-frame design decision on small
instances. The convexity probe checks midpoint convexity of arbitrary
(T, f) energy surfaces by seeded sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channel import ChannelState
from .ratepower import Mode

_MAX_ORACLE_STATES = 4


@dataclass(frozen=True)
class GridSpec:
    """Resolution of the brute-force search.

    n_f interior points cover the time fraction axis. Per-state rate
    levels mix a geometric ramp near zero (silent and barely-active
    states matter) with a linear section above rate_knee; profiles are
    scaled afterwards to meet the average-rate constraint exactly, so the
    levels only need to cover relative shapes.
    """

    n_f: int = 99
    n_geom: int = 5
    n_lin: int = 10
    rate_floor: float = 0.01
    rate_knee: float = 0.1
    rate_cap: float = 1.0
    refine_rounds: int = 3
    refine_span: int = 3
    refine_step: float = 0.15
    refine_shrink: float = 0.3

    def __post_init__(self):
        if self.n_f < 3 or self.n_geom < 2 or self.n_lin < 2:
            raise ValueError("grid too coarse")
        if not (0.0 < self.rate_floor < self.rate_knee < self.rate_cap):
            raise ValueError("need 0 < rate_floor < rate_knee < rate_cap")
        if self.refine_rounds < 0 or self.refine_span < 1:
            raise ValueError("bad refinement lattice")
        if not (self.refine_step > 0.0 and 0.0 < self.refine_shrink < 1.0):
            raise ValueError("bad refinement step schedule")

    def f_values(self) -> np.ndarray:
        return np.arange(1, self.n_f + 1) / (self.n_f + 1.0)

    def rate_levels(self) -> np.ndarray:
        geom = np.geomspace(self.rate_floor, self.rate_knee, self.n_geom)
        lin = np.linspace(self.rate_knee, self.rate_cap, self.n_lin)
        return np.concatenate(([0.0], geom, lin[1:]))

    def halved(self) -> "GridSpec":
        return GridSpec(
            n_f=2 * self.n_f + 1,
            n_geom=2 * self.n_geom,
            n_lin=2 * self.n_lin,
            rate_floor=self.rate_floor,
            rate_knee=self.rate_knee,
            rate_cap=self.rate_cap,
            refine_rounds=self.refine_rounds,
            refine_span=self.refine_span,
            refine_step=0.5 * self.refine_step,
            refine_shrink=self.refine_shrink,
        )


@dataclass(frozen=True)
class OracleResult:
    energy: float
    f_u: float
    f_d: float
    rates_u: tuple[float, ...]
    rates_d: tuple[float, ...]
    grid: GridSpec


def _shape_matrix(levels: np.ndarray, n: int) -> np.ndarray:
    """All per-state level combinations, deduplicated up to scaling.

    Profiles are later rescaled to meet the rate constraint, so only the
    ray of each vector matters; normalizing to mean 1 and deduplicating
    keeps the search space small.
    """
    grids = np.meshgrid(*([levels] * n), indexing="ij")
    shapes = np.stack([g.ravel() for g in grids], axis=1)
    means = shapes.mean(axis=1)
    keep = means > 0.0
    shapes = shapes[keep] / means[keep, None]
    return np.unique(np.round(shapes, 12), axis=0)


def _uplink_power_matrix(rates: np.ndarray, states: Sequence[ChannelState],
                         modes: Sequence[Mode]) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = np.exp2(rates)
        cols = []
        for j, (state, mode) in enumerate(zip(states, modes)):
            xj = x[:, j]
            if mode is Mode.PNC:
                p = (xj - 0.5) * (1.0 / state.g1r + 1.0 / state.g2r)
            else:
                p = (xj - 1.0) / state.g_mr + xj * (xj - 1.0) / state.g_Mr
            cols.append(np.where(rates[:, j] > 0.0, p, 0.0))
    return np.stack(cols, axis=1)


def _downlink_power_matrix(rates: np.ndarray, states: Sequence[ChannelState]) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = np.exp2(rates)
        cols = []
        for j, state in enumerate(states):
            p = (x[:, j] - 1.0) / state.g_rm
            cols.append(np.where(rates[:, j] > 0.0, p, 0.0))
    return np.stack(cols, axis=1)


def brute_force_fixed_modes(states: Sequence[ChannelState], modes: Sequence[Mode],
                            target_rate: float, grid: GridSpec | None = None) -> OracleResult:
    """Grid-search the fixed-assignment problem directly from the formulas.

    Searches uplink and downlink fractions independently over all pairs
    with f_u + f_d <= 1 (slack included on purpose) and, per fraction,
    over scaled per-state rate profiles whose mean meets the phase target
    exactly. Intended for instances of at most four states.
    """
    grid = grid or GridSpec()
    n = len(states)
    if n == 0:
        raise ValueError("need at least one channel state")
    if n > _MAX_ORACLE_STATES:
        raise ValueError(f"brute force supports up to {_MAX_ORACLE_STATES} states, got {n}")
    if len(modes) != n:
        raise ValueError(f"got {n} states but {len(modes)} modes")
    if not (target_rate >= 0.0 and math.isfinite(target_rate)):
        raise ValueError(f"target rate must be nonnegative and finite, got {target_rate!r}")
    if target_rate == 0.0:
        zeros = tuple(0.0 for _ in range(n))
        return OracleResult(0.0, 0.5, 0.5, zeros, zeros, grid)

    shapes0 = _shape_matrix(grid.rate_levels(), n)  # every row has mean 1
    f_vals = grid.f_values()

    def up_eval(rates: np.ndarray) -> np.ndarray:
        return _uplink_power_matrix(rates, states, modes).mean(axis=1)

    def dn_eval(rates: np.ndarray) -> np.ndarray:
        return _downlink_power_matrix(rates, states).mean(axis=1)

    up_store, up_power, up_arg = _refined_phase(shapes0, f_vals, target_rate, up_eval, grid)
    dn_store, dn_power, dn_arg = _refined_phase(shapes0, f_vals, target_rate, dn_eval, grid)

    m_f = f_vals.shape[0]
    best = (math.inf, -1, -1)
    for i in range(m_f):
        eu = f_vals[i] * up_power[i]
        if not math.isfinite(eu):
            continue
        for j in range(m_f):
            if f_vals[i] + f_vals[j] > 1.0 + 1e-12:
                break
            total = eu + f_vals[j] * dn_power[j]
            if total < best[0]:
                best = (total, i, j)
    if not math.isfinite(best[0]):
        raise ValueError("no feasible grid point; grid cannot carry the rate target")
    energy, i, j = best
    rates_u = up_store[up_arg[i]] * (target_rate / f_vals[i])
    rates_d = dn_store[dn_arg[j]] * (target_rate / f_vals[j])
    return OracleResult(
        energy=float(energy),
        f_u=float(f_vals[i]),
        f_d=float(f_vals[j]),
        rates_u=tuple(float(v) for v in rates_u),
        rates_d=tuple(float(v) for v in rates_d),
        grid=grid,
    )


def _phase_minima(shape_mat: np.ndarray, f_vals: np.ndarray, target: float,
                  eval_powers) -> tuple[np.ndarray, np.ndarray]:
    m_f = f_vals.shape[0]
    power = np.empty(m_f)
    arg = np.empty(m_f, dtype=int)
    for i, f in enumerate(f_vals):
        p = eval_powers(shape_mat * (target / f))
        j = int(np.argmin(p))
        power[i], arg[i] = p[j], j
    return power, arg


def _refined_phase(shapes0: np.ndarray, f_vals: np.ndarray, target: float,
                   eval_powers, grid: GridSpec):
    """Per-fraction phase minima over the base grid plus local lattice passes.

    The coarse shape grid limits accuracy to a few tenths of a percent, far
    too loose to certify the solver to 1e-3. Each round builds an additive
    lattice around every shape that is currently the minimizer for some
    fraction, renormalizes, and merges the improved minima; the step
    shrinks geometrically, so a few rounds buy two extra digits without
    touching the solver. Returns (shape store, per-f power minima, per-f
    argmin indices into the store).
    """
    n = shapes0.shape[1]
    store = shapes0
    power, arg = _phase_minima(shapes0, f_vals, target, eval_powers)
    offsets = np.stack([g.ravel() for g in np.meshgrid(
        *([np.arange(-grid.refine_span, grid.refine_span + 1)] * n),
        indexing="ij")], axis=1).astype(float)
    step = grid.refine_step
    for _ in range(grid.refine_rounds):
        bases = np.unique(store[np.unique(arg)], axis=0)
        cand = (bases[:, None, :] + step * offsets[None, :, :]).reshape(-1, n)
        np.maximum(cand, 0.0, out=cand)
        means = cand.mean(axis=1)
        keep = means > 0.0
        cand = cand[keep] / means[keep, None]
        cand = np.unique(np.round(cand, 12), axis=0)
        p_new, a_new = _phase_minima(cand, f_vals, target, eval_powers)
        better = p_new < power
        power = np.where(better, p_new, power)
        arg = np.where(better, a_new + store.shape[0], arg)
        store = np.concatenate([store, cand], axis=0)
        step *= grid.refine_shrink
    return store, power, arg


@dataclass(frozen=True)
class ProbeResult:
    passed: bool
    worst_violation: float
    worst_pair: tuple = field(default=())


def midpoint_convexity_probe(fn: Callable[[float, float], float],
                             t_range: tuple[float, float],
                             f_range: tuple[float, float],
                             samples: int, seed: int,
                             tol: float = 1e-12) -> ProbeResult:
    """Sample midpoint convexity of fn(T, f) over a box.

    Draws `samples` point pairs with a seeded generator and checks
    fn(midpoint) <= (fn(a) + fn(b))/2 + tol. Returns the worst violation
    and the pair that produced it; a convex function passes with zero
    violations, and a concave control must fail.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    t_lo, t_hi = t_range
    f_lo, f_hi = f_range
    if not (t_lo <= t_hi and 0.0 < f_lo <= f_hi):
        raise ValueError("bad probe box")
    rng = np.random.default_rng(seed)
    t = rng.uniform(t_lo, t_hi, size=(samples, 2))
    f = rng.uniform(f_lo, f_hi, size=(samples, 2))
    worst = -math.inf
    worst_pair: tuple = ()
    for k in range(samples):
        a = (t[k, 0], f[k, 0])
        b = (t[k, 1], f[k, 1])
        mid = (0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]))
        gap = fn(*mid) - 0.5 * (fn(*a) + fn(*b))
        if gap > worst:
            worst = gap
            worst_pair = (a, b)
    return ProbeResult(passed=worst <= tol, worst_violation=worst, worst_pair=worst_pair)
