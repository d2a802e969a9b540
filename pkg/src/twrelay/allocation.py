"""Minimum-energy allocation for a fixed per-state strategy assignment.

Given fading states, a per-state uplink strategy, and a long-run average
exchange-rate target, this module finds the uplink/downlink time split,
per-state rates, and per-state powers that minimize the average energy
per channel use subject to

    f_u * mean(rate_u) >= target,   f_d * mean(rate_d) >= target,
    f_u + f_d <= 1.

Substituting the per-phase throughputs T = f * rate turns each phase's
energy into the perspective f * P(T/f) of a convex power curve, so the
fixed-split problem is convex and separable across states: every state's
rate is the stationary point of its power curve at a common multiplier,
clamped at zero, and the multiplier is found by bisection on the average
rate. The scalar time split is then minimized by golden-section search
with a derivative polish (the envelope theorem gives the exact reduced
derivative from the per-state terms).

One wrinkle is handled beyond the plain water-filling map: a silent state
consumes no power, but the PNC power curve does not vanish at zero rate
(the 1/2 SNR offset), so states whose stationary point sits barely above
the clamp can be cheaper to leave silent with their rate carried by the
others. See `_solve_uplink`.

Everything here is deterministic: fixed-order numpy reductions, fixed
iteration schedules, no RNG. All inputs are treated as immutable.
"""

from __future__ import annotations

import itertools
import math
from collections import namedtuple
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .channel import ChannelState
from .ratepower import Mode

LN2 = math.log(2.0)

# Root of x ln(x) - x + 1/2 = 0. A PNC state whose stationary point
# x = beta1 / (ln2 (1/g1r + 1/g2r)) lies below this value costs more to
# keep active at the margin than to silence outright.
_SILENCE_X = 2.155535203500502


@dataclass(frozen=True)
class KktPoint:
    """Multipliers of the two average-rate constraints and the time budget."""

    beta1: float
    beta2: float
    gamma: float

    def __post_init__(self):
        for name in ("beta1", "beta2", "gamma"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be nonnegative and finite, got {v!r}")


@dataclass(frozen=True)
class TimeSplit:
    """Uplink and downlink fractions of the frame; slack is never kept."""

    f_u: float
    f_d: float

    def __post_init__(self):
        if not (self.f_u > 0.0 and self.f_d > 0.0):
            raise ValueError(f"time fractions must be positive, got {self.f_u!r}, {self.f_d!r}")
        if self.f_u + self.f_d > 1.0 + 1e-12:
            raise ValueError(f"time fractions exceed the frame: {self.f_u!r} + {self.f_d!r} > 1")


@dataclass(frozen=True)
class StateAllocation:
    """Strategy, rates (bits/use), and powers for one fading state."""

    mode: Mode
    rate_u: float
    rate_d: float
    power_u: float
    power_d: float

    def __post_init__(self):
        for name in ("rate_u", "rate_d", "power_u", "power_d"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be nonnegative and finite, got {v!r}")
        # a silent phase transmits nothing
        if (self.rate_u == 0.0) != (self.power_u == 0.0):
            raise ValueError("rate_u and power_u must vanish together")
        if (self.rate_d == 0.0) != (self.power_d == 0.0):
            raise ValueError("rate_d and power_d must vanish together")


@dataclass(frozen=True)
class Allocation:
    """Complete solution: split, per-state schedule, duals, and averages.

    avg_energy is the average energy per channel use,
    mean_n(f_u * power_u + f_d * power_d); avg_rate_u and avg_rate_d are
    the time-scaled average rates f * mean(rate).
    """

    split: TimeSplit
    per_state: tuple[StateAllocation, ...]
    duals: KktPoint
    avg_energy: float
    avg_rate_u: float
    avg_rate_d: float

    def __post_init__(self):
        object.__setattr__(self, "per_state", tuple(self.per_state))


@dataclass(frozen=True)
class KktResiduals:
    """Stationarity residuals of an allocation; see `kkt_residuals`."""

    uplink_rate: float
    downlink_rate: float
    uplink_time: float
    downlink_time: float
    gamma: float
    clamped_uplink: tuple[int, ...]
    clamped_downlink: tuple[int, ...]

    @property
    def worst(self) -> float:
        return max(self.uplink_rate, self.downlink_rate, self.uplink_time, self.downlink_time)


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and switches of the allocation solver.

    rate_rtol: relative tolerance of the dual bisections on the average rate.
    f_tol: golden-section bracket width on the uplink fraction.
    f_lo, f_hi: search interval for the uplink fraction.
    max_bisect_iter: dual bisection iteration cap (exceeded means error).
    refine_uplink: exact treatment of near-silent PNC states (see module
        docstring); disable to get the plain water-filling map only.
    """

    rate_rtol: float = 1e-9
    f_tol: float = 1e-6
    f_lo: float = 1e-3
    f_hi: float = 1.0 - 1e-3
    max_bisect_iter: int = 200
    refine_uplink: bool = True

    def __post_init__(self):
        if not (self.rate_rtol > 0.0 and self.f_tol > 0.0):
            raise ValueError("tolerances must be positive")
        if not (0.0 < self.f_lo < self.f_hi < 1.0):
            raise ValueError("need 0 < f_lo < f_hi < 1")
        if self.max_bisect_iter < 1:
            raise ValueError("max_bisect_iter must be at least 1")


def _check_multiplier(beta: float) -> None:
    if not (beta >= 0.0 and math.isfinite(beta)):
        raise ValueError(f"multiplier must be nonnegative and finite, got {beta!r}")


def pnc_rate_given_beta1(beta1: float, state: ChannelState) -> float:
    """Stationary PNC uplink rate at multiplier beta1, clamped at zero.

    Setting the slope of the PNC sum power equal to beta1 gives
    2^rate = beta1 / (ln2 * (1/g1r + 1/g2r)).
    """
    _check_multiplier(beta1)
    if beta1 == 0.0:
        return 0.0
    x = beta1 / (LN2 * (1.0 / state.g1r + 1.0 / state.g2r))
    return max(0.0, math.log2(x))


def dnc_rate_given_beta1(beta1: float, state: ChannelState) -> float:
    """Stationary SPC-DNC uplink rate at multiplier beta1, clamped at zero.

    The slope condition is quadratic in x = 2^rate:

        (2 ln2 / g_Mr) x^2 + ln2 (1/g_mr - 1/g_Mr) x = beta1

    and the rate is log2 of its positive root. The root is evaluated in
    the cancellation-free form 2 beta1 / (b + sqrt(b^2 + 4 a beta1)).
    """
    _check_multiplier(beta1)
    if beta1 == 0.0:
        return 0.0
    a = 2.0 * LN2 / state.g_Mr
    b = LN2 * (1.0 / state.g_mr - 1.0 / state.g_Mr)
    x = 2.0 * beta1 / (b + math.sqrt(b * b + 4.0 * a * beta1))
    return max(0.0, math.log2(x))


def downlink_rate_given_beta2(beta2: float, state: ChannelState) -> float:
    """Stationary broadcast rate at multiplier beta2: max(0, log2(beta2 g_rm / ln2))."""
    _check_multiplier(beta2)
    if beta2 == 0.0:
        return 0.0
    return max(0.0, math.log2(beta2 * state.g_rm / LN2))


class _Arrays:
    """Per-state gain quantities in vector form, fixed for one solve."""

    __slots__ = ("n", "g_mr", "g_Mr", "g_rm", "inv_sum", "is_pnc", "qa", "qb",
                 "inv_ln2_sum", "any_pnc", "all_pnc")

    def __init__(self, states: Sequence[ChannelState], modes: Sequence[Mode] | None):
        g1 = np.array([s.g1r for s in states], dtype=float)
        g2 = np.array([s.g2r for s in states], dtype=float)
        gr1 = np.array([s.gr1 for s in states], dtype=float)
        gr2 = np.array([s.gr2 for s in states], dtype=float)
        self.n = len(states)
        self.g_mr = np.minimum(g1, g2)
        self.g_Mr = np.maximum(g1, g2)
        self.g_rm = np.minimum(gr1, gr2)
        self.inv_sum = 1.0 / g1 + 1.0 / g2
        self.inv_ln2_sum = 1.0 / (LN2 * self.inv_sum)
        if modes is None:
            self.is_pnc = np.zeros(self.n, dtype=bool)
        else:
            self.is_pnc = np.array([m is Mode.PNC for m in modes], dtype=bool)
        self.any_pnc = bool(self.is_pnc.any())
        self.all_pnc = bool(self.is_pnc.all())
        # SPC-DNC slope condition coefficients in x = 2^rate
        self.qa = 2.0 * LN2 / self.g_Mr
        self.qb = LN2 * (1.0 / self.g_mr - 1.0 / self.g_Mr)


def _uplink_x(arr: _Arrays, beta1):
    """Unclamped stationary points x = 2^rate; beta1 scalar or column vector."""
    if np.ndim(beta1) == 0:
        # scalar fast path: this sits inside every dual bisection step
        b = float(beta1)
        if b <= 0.0:
            return np.zeros(arr.n)
        if arr.all_pnc:
            return b * arr.inv_ln2_sum
        disc = np.sqrt(arr.qb * arr.qb + (4.0 * b) * arr.qa)
        x = (2.0 * b) / (arr.qb + disc)
        if arr.any_pnc:
            x = np.where(arr.is_pnc, b * arr.inv_ln2_sum, x)
        return x
    with np.errstate(invalid="ignore", divide="ignore"):
        x_pnc = beta1 / (LN2 * arr.inv_sum)
        disc = np.sqrt(arr.qb * arr.qb + 4.0 * arr.qa * beta1)
        x_dnc = np.where(beta1 > 0.0, 2.0 * beta1 / (arr.qb + disc), 0.0)
    return np.where(arr.is_pnc, x_pnc, x_dnc)


def _uplink_rates(arr: _Arrays, beta1, allowed=None):
    x = _uplink_x(arr, beta1)
    r = np.log2(np.maximum(x, 1.0))
    if allowed is not None:
        r = np.where(allowed, r, 0.0)
    return r


def _mean_uplink_rate(arr: _Arrays, beta1: float, allowed=None) -> float:
    x = _uplink_x(arr, beta1)
    np.maximum(x, 1.0, out=x)
    np.log2(x, out=x)
    if allowed is not None:
        x *= allowed
    return float(x.sum()) / arr.n


def _mean_downlink_rate(arr: _Arrays, beta2: float) -> float:
    x = arr.g_rm * (beta2 / LN2)
    np.maximum(x, 1.0, out=x)
    np.log2(x, out=x)
    return float(x.sum()) / arr.n


def _mean_uplink_slope(arr: _Arrays, beta1: float, allowed=None) -> float:
    """d(mean uplink rate)/d beta1 over the active, allowed states."""
    x = _uplink_x(arr, beta1)
    if arr.all_pnc:
        d = np.where(x > 1.0, 1.0 / (beta1 * LN2), 0.0)
    else:
        d = 1.0 / ((2.0 * arr.qa * x + arr.qb) * x * LN2)
        if arr.any_pnc:
            d = np.where(arr.is_pnc, 1.0 / (beta1 * LN2), d)
        d = np.where(x > 1.0, d, 0.0)
    if allowed is not None:
        d = d * allowed
    return float(d.sum()) / arr.n


def _mean_downlink_slope(arr: _Arrays, beta2: float) -> float:
    active = arr.g_rm * (beta2 / LN2) > 1.0
    return float(active.sum()) / (arr.n * beta2 * LN2)


def _newton_multiplier(beta: float, target: float, mean_rate, mean_slope) -> float:
    """Sharpen a bisected multiplier with a few Newton steps.

    Bisection stops once the average rate sits within its relative
    tolerance, which leaves the multiplier quantized at that level; the
    envelope derivatives used by the split search and the KKT report
    inherit the quantization scaled by the problem's power level. Newton
    on the same monotone map takes the rate error to machine level, so
    those derivatives stay clean at every energy scale.
    """
    for _ in range(3):
        err = mean_rate(beta) - target
        if abs(err) <= 1e-15 * target:
            break
        slope = mean_slope(beta)
        if slope <= 0.0:
            break
        nxt = beta - err / slope
        beta = nxt if nxt > 0.0 else 0.5 * beta
    return beta


def _uplink_powers(arr: _Arrays, rates):
    x = np.exp2(rates)
    p_pnc = (x - 0.5) * arr.inv_sum
    p_dnc = (x - 1.0) / arr.g_mr + x * (x - 1.0) / arr.g_Mr
    p = np.where(arr.is_pnc, p_pnc, p_dnc)
    return np.where(rates > 0.0, p, 0.0)


def _uplink_power_slope(arr: _Arrays, rates):
    x = np.exp2(rates)
    s_pnc = LN2 * x * arr.inv_sum
    s_dnc = LN2 * x / arr.g_mr + LN2 * (2.0 * x * x - x) / arr.g_Mr
    return np.where(arr.is_pnc, s_pnc, s_dnc)


def _downlink_rates(arr: _Arrays, beta2):
    x = beta2 * arr.g_rm / LN2
    return np.log2(np.maximum(x, 1.0))


def _downlink_powers(arr: _Arrays, rates):
    return np.where(rates > 0.0, (np.exp2(rates) - 1.0) / arr.g_rm, 0.0)


def _downlink_power_slope(arr: _Arrays, rates):
    return LN2 * np.exp2(rates) / arr.g_rm


def _bisect_multiplier(mean_rate: Callable[[float], float], target: float,
                       rtol: float, max_iter: int,
                       hint: float | None = None) -> float:
    """Solve mean_rate(beta) = target for beta >= 0 by bracketing bisection.

    The map is continuous and nondecreasing, zero at beta = 0 and unbounded,
    so a finite positive target always brackets. A hint (typically the
    multiplier of a neighbouring solve) seeds the bracket; a wrong hint only
    costs a couple of probes. Both the expansion and the bisection carry
    iteration caps that raise RuntimeError when exceeded.
    """
    if target <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    if hint is not None and hint > 0.0 and math.isfinite(hint):
        if mean_rate(hint) >= target:
            hi = hint
            probe = 0.25 * hint
            if mean_rate(probe) <= target:
                lo = probe
        else:
            lo, hi = hint, 4.0 * hint
    for _ in range(300):
        if mean_rate(hi) >= target:
            break
        lo = hi
        hi *= 4.0
        if not math.isfinite(hi):
            raise RuntimeError("multiplier bracket expansion failed: rate target unreachable")
    else:
        raise RuntimeError("multiplier bracket expansion failed: rate target unreachable")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = mean_rate(mid)
        if abs(val - target) <= rtol * target:
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
    raise RuntimeError("dual bisection did not reach tolerance within the iteration cap")


def _solve_uplink(arr: _Arrays, target: float, opts: SolverOptions,
                  warm: dict | None = None, fixed_allowed=None):
    """Uplink multiplier, rates, and mean power meeting the average-rate target.

    Returns (mean_power, beta1, rates). The base solve clamps every state at
    its stationary point. Because a silent state costs nothing while the PNC
    power curve starts at half the inverse-gain sum, any PNC state whose
    stationary point falls below x* = 2.1555... is a candidate for full
    silencing with the load reassigned through a larger multiplier.

    The candidates order themselves by their fixed power scale (the
    stationary point is beta over ln2 times the inverse-gain sum, so the
    x-order never changes with beta), and silencing states only pushes the
    multiplier up. The useful silent sets are therefore nested prefixes of
    the x-ascending candidate list, and self-consistency — the next
    unsilenced candidate must sit at or above x* — is monotone in the
    prefix length, so a binary search plus a small window around the
    crossing finds the best prefix. Tiny problems are still enumerated
    exhaustively over all candidate subsets, which keeps the small-instance
    behaviour exact.
    """
    hint0 = warm.get("b1") if warm else None

    def profile(allowed, hint=None):
        beta = _bisect_multiplier(
            lambda b: _mean_uplink_rate(arr, b, allowed), target,
            opts.rate_rtol, opts.max_bisect_iter, hint)
        beta = _newton_multiplier(beta, target,
                                  lambda b: _mean_uplink_rate(arr, b, allowed),
                                  lambda b: _mean_uplink_slope(arr, b, allowed))
        rates = _uplink_rates(arr, beta, allowed)
        power = float(np.mean(_uplink_powers(arr, rates)))
        return power, beta, rates

    if fixed_allowed is not None:
        best = profile(fixed_allowed, hint0)
        if warm is not None:
            warm["b1"] = best[1]
        return best

    best = profile(None, hint0)
    base = best
    refine = opts.refine_uplink and arr.any_pnc
    if refine:
        x = _uplink_x(arr, base[1])
        if bool(np.any(arr.is_pnc & (x > 1.0) & (x < _SILENCE_X))):
            cand = np.flatnonzero(arr.is_pnc & (x < _SILENCE_X))
            cand = cand[np.argsort(x[cand], kind="stable")]
            if arr.n <= 8:
                best = _refine_exhaustive(arr, cand, best, profile)
            else:
                best = _refine_nested(arr, cand, base, best, profile)
    if warm is not None:
        warm["b1"] = best[1]
    return best


def _refine_exhaustive(arr: _Arrays, cand, best, profile):
    for k in range(1, cand.size + 1):
        for combo in itertools.combinations(cand.tolist(), k):
            allowed = np.ones(arr.n, dtype=bool)
            allowed[list(combo)] = False
            if not allowed.any():
                continue
            try:
                trial = profile(allowed)
            except RuntimeError:
                continue
            if trial[0] < best[0]:
                best = trial
    return best


def _refine_nested(arr: _Arrays, cand, base, best, profile):
    big = cand.size
    inv = arr.inv_ln2_sum[cand]
    solved: dict[int, tuple | None] = {0: base}

    def chain(k):
        if k not in solved:
            allowed = np.ones(arr.n, dtype=bool)
            allowed[cand[:k]] = False
            if not allowed.any():
                solved[k] = None
            else:
                try:
                    solved[k] = profile(allowed, base[1])
                except RuntimeError:
                    solved[k] = None
        return solved[k]

    def settled(k):
        # prefix k is long enough once the next candidate's stationary
        # point has been pushed past the silence threshold
        e = chain(k)
        if e is None or k == big:
            return True
        return e[1] * inv[k] >= _SILENCE_X

    if settled(0):
        k_star = 0
    else:
        lo, hi = 0, big
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if settled(mid):
                hi = mid
            else:
                lo = mid
        k_star = hi
    for k in range(max(0, k_star - 2), min(big, k_star + 2) + 1):
        e = chain(k)
        if e is not None and e[0] < best[0]:
            best = e
    return best


_SplitEval = namedtuple(
    "_SplitEval",
    "f_u energy beta1 beta2 rates_u rates_d mean_pu mean_pd mean_dup mean_ddn",
)


def _evaluate_split(arr: _Arrays, lam: float, f_u: float, opts: SolverOptions,
                    warm: dict | None = None, fixed_allowed=None) -> _SplitEval:
    """Solve both phases at a fixed split and collect energy and derivatives."""
    f_d = 1.0 - f_u
    mean_pu, beta1, r_u = _solve_uplink(arr, lam / f_u, opts, warm, fixed_allowed)
    beta2 = _bisect_multiplier(
        lambda b: _mean_downlink_rate(arr, b), lam / f_d,
        opts.rate_rtol, opts.max_bisect_iter,
        warm.get("b2") if warm else None)
    beta2 = _newton_multiplier(beta2, lam / f_d,
                               lambda b: _mean_downlink_rate(arr, b),
                               lambda b: _mean_downlink_slope(arr, b))
    if warm is not None:
        warm["b2"] = beta2
    r_d = _downlink_rates(arr, beta2)
    p_u = _uplink_powers(arr, r_u)
    p_d = _downlink_powers(arr, r_d)
    # d(f * P(T/f))/df = P(rate) - rate * P'(rate); silent states pin it at 0
    dup = np.where(r_u > 0.0, p_u - r_u * _uplink_power_slope(arr, r_u), 0.0)
    ddn = np.where(r_d > 0.0, p_d - r_d * _downlink_power_slope(arr, r_d), 0.0)
    return _SplitEval(
        f_u=f_u,
        energy=float(np.mean(f_u * p_u + f_d * p_d)),
        beta1=beta1,
        beta2=beta2,
        rates_u=r_u,
        rates_d=r_d,
        mean_pu=mean_pu,
        mean_pd=float(np.mean(p_d)),
        mean_dup=float(np.mean(dup)),
        mean_ddn=float(np.mean(ddn)),
    )


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _polish_split(ev, ev_fast, a: float, b: float, opts: SolverOptions):
    """Sharpen the final golden bracket by bisecting the envelope derivative.

    Near the minimum the energy floor is flat at the level of the inner
    bisection jitter, so the raw-energy argmin can sit several bracket
    widths off the stationary split. The derivative mean_dup - mean_ddn is
    monotone wherever the reduced objective is smooth; golden's last
    bracket does not always straddle its sign change, so the bracket first
    slides outward (doubling steps) until it does, then sign bisection
    pins the split to ~1e-13. Once the bracket is tight the silent set no
    longer moves, so the inner bisections run with it frozen (ev_fast) and
    only the returned point gets a full evaluation. Returns None when no
    sign change exists inside [f_lo, f_hi] (boundary minimum or infeasible
    evals); the caller then falls back to the best raw-energy point.
    """
    ea, eb = ev(a), ev(b)
    if ea is None or eb is None:
        return None
    lo_f, dlo = a, ea.mean_dup - ea.mean_ddn
    hi_f, dhi = b, eb.mean_dup - eb.mean_ddn
    step = max(b - a, opts.f_tol)
    for _ in range(40):
        if dlo <= 0.0 <= dhi:
            break
        if dlo > 0.0:  # sign change is to the left of the bracket
            if lo_f <= opts.f_lo:
                return None
            hi_f, dhi = lo_f, dlo
            nxt = max(opts.f_lo, lo_f - step)
            e = ev(nxt)
            if e is None:
                return None
            lo_f, dlo = nxt, e.mean_dup - e.mean_ddn
        else:  # dhi < 0: sign change is to the right
            if hi_f >= opts.f_hi:
                return None
            lo_f, dlo = hi_f, dhi
            nxt = min(opts.f_hi, hi_f + step)
            e = ev(nxt)
            if e is None:
                return None
            hi_f, dhi = nxt, e.mean_dup - e.mean_ddn
        step *= 2.0
    else:
        return None
    polished_f = None
    mask = None
    for _ in range(48):
        if (hi_f - lo_f) < 1e-13:
            break
        mid = 0.5 * (lo_f + hi_f)
        if mask is None or (hi_f - lo_f) > 16.0 * opts.f_tol:
            em = ev(mid)
            if em is None:
                break
            mask = em.rates_u > 0.0
        else:
            em = ev_fast(mid, mask)
            if em is None:
                break
        polished_f = mid
        dm = em.mean_dup - em.mean_ddn
        if abs(dm) < 1e-11:
            break
        if dm < 0.0:
            lo_f = mid
        else:
            hi_f = mid
    if polished_f is None:
        return None
    return ev(polished_f)


def _optimize_split(arr: _Arrays, lam: float, opts: SolverOptions) -> _SplitEval:
    """Golden-section minimization of the reduced objective over f_u.

    The reduced objective is convex (both phase energies are partial minima
    of jointly convex perspectives). After the bracket shrinks to f_tol, a
    sign bisection on the envelope derivative mean_dup - mean_ddn sharpens
    the stationary point well below the bracket width. The best evaluation
    seen anywhere is returned, so the polish can never make things worse.
    """
    cache: dict[float, _SplitEval | None] = {}
    warm: dict = {}

    def ev(f: float) -> _SplitEval | None:
        if f not in cache:
            try:
                cache[f] = _evaluate_split(arr, lam, f, opts, warm)
            except RuntimeError:
                cache[f] = None
        return cache[f]

    def ev_fast(f: float, mask) -> _SplitEval | None:
        try:
            return _evaluate_split(arr, lam, f, opts, warm, fixed_allowed=mask)
        except RuntimeError:
            return None

    def energy(f: float) -> float:
        e = ev(f)
        return math.inf if e is None else e.energy

    a, b = opts.f_lo, opts.f_hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = energy(c), energy(d)
    while (b - a) > opts.f_tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = energy(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = energy(d)
    polished = _polish_split(ev, ev_fast, a, b, opts)
    if polished is not None:
        return polished
    best = None
    for e in cache.values():
        if e is not None and (best is None or e.energy < best.energy):
            best = e
    if best is None:
        raise RuntimeError(
            f"no feasible time split in [{opts.f_lo}, {opts.f_hi}] for target {lam}")
    return best


def _check_problem(states, modes, target_rate) -> None:
    if len(states) == 0:
        raise ValueError("need at least one channel state")
    if modes is not None and len(modes) != len(states):
        raise ValueError(f"got {len(states)} states but {len(modes)} modes")
    if not (target_rate >= 0.0 and math.isfinite(target_rate)):
        raise ValueError(f"target rate must be nonnegative and finite, got {target_rate!r}")


def solve_beta1(states: Sequence[ChannelState], modes: Sequence[Mode],
                target_avg_rate: float, opts: SolverOptions | None = None) -> float:
    """Uplink multiplier whose clamped stationary rates average to the target.

    Bisection on the (continuous, nondecreasing) average-rate map to the
    relative tolerance opts.rate_rtol, then a short Newton refinement of
    the accepted multiplier. Target 0 returns 0.
    """
    opts = opts or SolverOptions()
    _check_problem(states, modes, target_avg_rate)
    if target_avg_rate == 0.0:
        return 0.0
    arr = _Arrays(states, modes)
    beta = _bisect_multiplier(lambda b: float(np.mean(_uplink_rates(arr, b))),
                              target_avg_rate, opts.rate_rtol, opts.max_bisect_iter)
    return _newton_multiplier(beta, target_avg_rate,
                              lambda b: _mean_uplink_rate(arr, b),
                              lambda b: _mean_uplink_slope(arr, b))


def solve_beta2(states: Sequence[ChannelState], target_avg_rate: float,
                opts: SolverOptions | None = None) -> float:
    """Downlink counterpart of solve_beta1 (strategy-independent)."""
    opts = opts or SolverOptions()
    _check_problem(states, None, target_avg_rate)
    if target_avg_rate == 0.0:
        return 0.0
    arr = _Arrays(states, None)
    beta = _bisect_multiplier(lambda b: float(np.mean(_downlink_rates(arr, b))),
                              target_avg_rate, opts.rate_rtol, opts.max_bisect_iter)
    return _newton_multiplier(beta, target_avg_rate,
                              lambda b: _mean_downlink_rate(arr, b),
                              lambda b: _mean_downlink_slope(arr, b))


def solve_fixed_modes(states: Sequence[ChannelState], modes: Sequence[Mode],
                      target_rate: float, opts: SolverOptions | None = None) -> Allocation:
    """Minimum-energy allocation for the given per-state strategy assignment.

    A zero target is served by the all-silent allocation with the frame
    split evenly by convention. Otherwise the two phases are solved by dual
    bisection for each candidate split and the split by golden-section
    search over [opts.f_lo, opts.f_hi] with f_d = 1 - f_u; giving any slack
    to the downlink never costs energy, so the frame is always used fully.
    """
    opts = opts or SolverOptions()
    _check_problem(states, modes, target_rate)
    modes = list(modes)
    if target_rate == 0.0:
        per = tuple(StateAllocation(m, 0.0, 0.0, 0.0, 0.0) for m in modes)
        return Allocation(TimeSplit(0.5, 0.5), per, KktPoint(0.0, 0.0, 0.0), 0.0, 0.0, 0.0)
    arr = _Arrays(states, modes)
    ev = _optimize_split(arr, target_rate, opts)
    f_u = ev.f_u
    f_d = 1.0 - f_u
    p_u = _uplink_powers(arr, ev.rates_u)
    p_d = _downlink_powers(arr, ev.rates_d)
    per = tuple(
        StateAllocation(modes[i], float(ev.rates_u[i]), float(ev.rates_d[i]),
                        float(p_u[i]), float(p_d[i]))
        for i in range(arr.n))
    return Allocation(
        split=TimeSplit(f_u, f_d),
        per_state=per,
        duals=KktPoint(ev.beta1, ev.beta2, max(0.0, -ev.mean_ddn)),
        avg_energy=float(np.mean(f_u * p_u + f_d * p_d)),
        avg_rate_u=f_u * float(np.mean(ev.rates_u)),
        avg_rate_d=f_d * float(np.mean(ev.rates_d)),
    )


def kkt_residuals(alloc: Allocation, states: Sequence[ChannelState],
                  modes: Sequence[Mode] | None = None) -> KktResiduals:
    """Stationarity residuals of an allocation against its own multipliers.

    Per active state the rate conditions |P'(rate) - beta| are reported as
    maxima; clamped states are listed instead of checked (complementary
    slackness covers them). The time-budget multiplier gamma is recovered
    from the downlink split condition, so its residual vanishes by
    construction and the uplink split condition carries the information:
    it equals |d(avg energy)/d f_u| at the reported split.
    """
    if modes is None:
        modes = [sa.mode for sa in alloc.per_state]
    _check_problem(states, modes, 0.0)
    if len(alloc.per_state) != len(states):
        raise ValueError(f"allocation covers {len(alloc.per_state)} states, got {len(states)}")
    arr = _Arrays(states, modes)
    r_u = np.array([sa.rate_u for sa in alloc.per_state], dtype=float)
    r_d = np.array([sa.rate_d for sa in alloc.per_state], dtype=float)
    active_u = r_u > 0.0
    active_d = r_d > 0.0
    slope_u = _uplink_power_slope(arr, r_u)
    slope_d = _downlink_power_slope(arr, r_d)
    up_rate = float(np.max(np.abs(slope_u - alloc.duals.beta1), where=active_u, initial=0.0))
    dn_rate = float(np.max(np.abs(slope_d - alloc.duals.beta2), where=active_d, initial=0.0))
    p_u = _uplink_powers(arr, r_u)
    p_d = _downlink_powers(arr, r_d)
    dup = np.where(active_u, p_u - r_u * slope_u, 0.0)
    ddn = np.where(active_d, p_d - r_d * slope_d, 0.0)
    mean_dup = float(np.mean(dup))
    mean_ddn = float(np.mean(ddn))
    gamma = -mean_ddn
    return KktResiduals(
        uplink_rate=up_rate,
        downlink_rate=dn_rate,
        uplink_time=abs(mean_dup + gamma),
        downlink_time=abs(mean_ddn + gamma),
        gamma=gamma,
        clamped_uplink=tuple(int(i) for i in np.flatnonzero(~active_u)),
        clamped_downlink=tuple(int(i) for i in np.flatnonzero(~active_d)),
    )


def scan_split_energies(states: Sequence[ChannelState], modes: Sequence[Mode],
                        target_rate: float, f_values,
                        opts: SolverOptions | None = None) -> np.ndarray:
    """Reduced-objective energies on a grid of uplink fractions, vectorized.

    Dense scans of the split objective for diagnostics. Uses the plain
    water-filling map (no silent-PNC refinement), so it matches
    solve_fixed_modes run with refine_uplink=False.
    """
    opts = opts or SolverOptions()
    _check_problem(states, modes, target_rate)
    arr = _Arrays(states, modes)
    f = np.asarray(f_values, dtype=float)
    if np.any((f <= 0.0) | (f >= 1.0)):
        raise ValueError("grid fractions must lie strictly inside (0, 1)")
    if target_rate == 0.0:
        return np.zeros_like(f)

    def solve_vec(targets, rate_fn):
        m = targets.shape[0]
        hi = np.ones(m)
        for _ in range(400):
            mean = rate_fn(hi[:, None]).mean(axis=1)
            need = mean < targets
            if not need.any():
                break
            hi = np.where(need, hi * 4.0, hi)
        else:
            raise RuntimeError("multiplier bracket expansion failed in scan")
        lo = np.zeros(m)
        for _ in range(160):
            mid = 0.5 * (lo + hi)
            mean = rate_fn(mid[:, None]).mean(axis=1)
            under = mean < targets
            lo = np.where(under, mid, lo)
            hi = np.where(under, hi, mid)
        return 0.5 * (lo + hi)

    b1 = solve_vec(target_rate / f, lambda bb: _uplink_rates(arr, bb))
    b2 = solve_vec(target_rate / (1.0 - f), lambda bb: _downlink_rates(arr, bb))
    r_u = _uplink_rates(arr, b1[:, None])
    r_d = _downlink_rates(arr, b2[:, None])
    p_u = _uplink_powers(arr, r_u).mean(axis=1)
    p_d = _downlink_powers(arr, r_d).mean(axis=1)
    return f * p_u + (1.0 - f) * p_d


def perspective_energy(state: ChannelState, mode: Mode):
    """Scaled-phase uplink energy (T, f) -> f * P(T/f) on the smooth branch.

    Jointly convex on T >= 0, f > 0 as the perspective of a convex power
    curve. The zero-rate shortcut (silent means free) is deliberately not
    applied here; convexity probes exercise the smooth expression itself.
    """
    if mode is Mode.PNC:
        s = 1.0 / state.g1r + 1.0 / state.g2r
        return lambda t, f: f * (2.0 ** (t / f) - 0.5) * s
    g_mr, g_Mr = state.g_mr, state.g_Mr

    def theta(t, f):
        x = 2.0 ** (t / f)
        return f * ((x - 1.0) / g_mr + x * (x - 1.0) / g_Mr)

    return theta


def perspective_downlink_energy(state: ChannelState):
    """Scaled-phase broadcast energy (T, f) -> f * (2^(T/f) - 1)/g_rm."""
    g = state.g_rm
    return lambda t, f: f * (2.0 ** (t / f) - 1.0) / g
