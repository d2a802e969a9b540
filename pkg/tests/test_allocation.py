"""Fixed-assignment solver: dual rate maps, feasibility, KKT residuals,
and the split search against a dense scan."""

import dataclasses
import math

import numpy as np
import pytest

from twrelay import (
    Allocation,
    ChannelState,
    KktPoint,
    Mode,
    SolverOptions,
    StateAllocation,
    TimeSplit,
    dnc_rate_given_beta1,
    dnc_uplink_sum_power,
    downlink_power,
    downlink_rate_given_beta2,
    kkt_residuals,
    pnc_rate_given_beta1,
    pnc_uplink_sum_power,
    sample_states,
    scan_split_energies,
    solve_beta1,
    solve_beta2,
    solve_fixed_modes,
)

LN2 = math.log(2.0)
UNIT = ChannelState(1.0, 1.0, 1.0, 1.0)


def rand_instance(rng, n, p_pnc=0.5):
    states = []
    for _ in range(n):
        g1, g2 = rng.exponential(1.0, size=2)
        states.append(ChannelState(float(g1), float(g2), float(g1), float(g2)))
    modes = [Mode.PNC if rng.random() < p_pnc else Mode.SPCDNC for _ in range(n)]
    return states, modes


# ---------------------------------------------------------------- rate maps

def test_pnc_rate_map_values():
    assert abs(pnc_rate_given_beta1(8.0 * LN2, UNIT) - 2.0) <= 1e-12
    assert pnc_rate_given_beta1(2.0 * LN2, UNIT) == 0.0  # exact clamp boundary
    assert pnc_rate_given_beta1(LN2, UNIT) == 0.0


def test_dnc_rate_map_values():
    # unit gains: the linear term vanishes, x = sqrt(beta1 / (2 ln2))
    assert abs(dnc_rate_given_beta1(8.0 * LN2, UNIT) - 1.0) <= 1e-12
    assert dnc_rate_given_beta1(LN2, UNIT) == 0.0
    # gains (1, 2): quadratic ln2 x^2 + (ln2/2) x - beta1 = 0, so x = 2
    # needs beta1 = 4 ln2 + ln2 = 5 ln2
    s = ChannelState(1.0, 2.0, 1.0, 2.0)
    assert abs(dnc_rate_given_beta1(5.0 * LN2, s) - 1.0) <= 1e-12


def test_downlink_rate_map_values():
    assert abs(downlink_rate_given_beta2(2.0 * LN2, UNIT) - 1.0) <= 1e-12
    assert downlink_rate_given_beta2(LN2, UNIT) == 0.0
    s = ChannelState(1.0, 1.0, 4.0, 9.0)  # g_rm = 4
    assert abs(downlink_rate_given_beta2(LN2 / 2.0, s) - 1.0) <= 1e-12


def test_rate_maps_are_nondecreasing_in_beta():
    rng = np.random.default_rng(3)
    betas = np.linspace(0.0, 40.0, 400)
    for _ in range(10):
        g1, g2 = rng.exponential(1.0, size=2)
        s = ChannelState(float(g1), float(g2), float(g1), float(g2))
        for fn in (pnc_rate_given_beta1, dnc_rate_given_beta1, downlink_rate_given_beta2):
            vals = [fn(float(b), s) for b in betas]
            assert all(b >= a for a, b in zip(vals, vals[1:]))


# ------------------------------------------------------------- dual solves

def test_solve_beta1_inverts_the_rate_maps():
    b1 = solve_beta1([UNIT], [Mode.PNC], 2.0)
    assert abs(b1 - 8.0 * LN2) <= 1e-8 * 8.0 * LN2
    # identical states behave like a single one
    b1 = solve_beta1([UNIT, UNIT], [Mode.SPCDNC, Mode.SPCDNC], 1.0)
    assert abs(b1 - 8.0 * LN2) <= 1e-8 * 8.0 * LN2
    assert solve_beta1([UNIT], [Mode.PNC], 0.0) == 0.0


def test_solve_beta2_inverts_the_downlink_map():
    assert abs(solve_beta2([UNIT], 1.0) - 2.0 * LN2) <= 1e-8
    # g_rm 1 and 4 give rates 1 and 3 at beta2 = 2 ln2, mean 2
    two = [UNIT, ChannelState(1.0, 1.0, 4.0, 5.0)]
    assert abs(solve_beta2(two, 2.0) - 2.0 * LN2) <= 1e-8
    assert solve_beta2(two, 0.0) == 0.0


def test_solved_rates_meet_the_target_on_average():
    rng = np.random.default_rng(40)
    states, modes = rand_instance(rng, 30)
    for target in (0.3, 1.1, 2.7):
        b1 = solve_beta1(states, modes, target)
        rates = [
            pnc_rate_given_beta1(b1, s) if m is Mode.PNC else dnc_rate_given_beta1(b1, s)
            for s, m in zip(states, modes)
        ]
        assert abs(np.mean(rates) - target) <= 1e-9 * target


def test_solve_beta1_is_increasing_in_target():
    rng = np.random.default_rng(41)
    states, modes = rand_instance(rng, 12)
    betas = [solve_beta1(states, modes, t) for t in (0.2, 0.5, 1.0, 2.0)]
    assert all(b > a for a, b in zip(betas, betas[1:]))


# ------------------------------------------------------------- full solves

def test_zero_target_allocation_is_silent():
    rng = np.random.default_rng(50)
    states, modes = rand_instance(rng, 6)
    alloc = solve_fixed_modes(states, modes, 0.0)
    assert alloc.avg_energy == 0.0
    assert alloc.split.f_u == 0.5
    assert all(sa.rate_u == 0.0 and sa.power_u == 0.0 for sa in alloc.per_state)
    assert all(sa.rate_d == 0.0 and sa.power_d == 0.0 for sa in alloc.per_state)


def test_single_state_dnc_matches_closed_form():
    # unit gains, target 1/2: uplink power 4^R - 1, downlink 2^R - 1; the
    # optimum sits at f_u = 2/3 where both exponents equal 3/2, giving
    # total energy 2 sqrt2 - 1
    alloc = solve_fixed_modes([UNIT], [Mode.SPCDNC], 0.5)
    exact = 2.0 * math.sqrt(2.0) - 1.0
    assert abs(alloc.avg_energy - exact) <= 5e-8 * exact
    assert abs(alloc.split.f_u - 2.0 / 3.0) <= 1e-4


def test_single_state_pnc_regression_value():
    alloc = solve_fixed_modes([UNIT], [Mode.PNC], 0.5)
    assert abs(alloc.avg_energy - 1.9710941291371364) <= 1e-6 * 1.971


def test_feasibility_and_bookkeeping():
    rng = np.random.default_rng(60)
    states, modes = rand_instance(rng, 30)
    for lam in (0.3, 1.3):
        alloc = solve_fixed_modes(states, modes, lam)
        assert abs(alloc.avg_rate_u - lam) <= 1e-6 * lam
        assert abs(alloc.avg_rate_d - lam) <= 1e-6 * lam
        f_u, f_d = alloc.split.f_u, alloc.split.f_d
        assert abs(f_u + f_d - 1.0) <= 1e-12
        recomputed = np.mean([f_u * sa.power_u + f_d * sa.power_d for sa in alloc.per_state])
        assert abs(recomputed - alloc.avg_energy) <= 1e-12 * max(1.0, alloc.avg_energy)
        assert alloc.duals.beta1 > 0.0 and alloc.duals.beta2 > 0.0


def test_powers_are_linked_to_rates():
    rng = np.random.default_rng(61)
    states, modes = rand_instance(rng, 25)
    alloc = solve_fixed_modes(states, modes, 0.4)
    clamped = 0
    for sa, s, m in zip(alloc.per_state, states, modes):
        if sa.rate_u == 0.0:
            assert sa.power_u == 0.0
            clamped += 1
        else:
            want = (pnc_uplink_sum_power if m is Mode.PNC else dnc_uplink_sum_power)(sa.rate_u, s)
            assert abs(sa.power_u - want) <= 1e-12 * want
        if sa.rate_d == 0.0:
            assert sa.power_d == 0.0
        else:
            want = downlink_power(sa.rate_d, s)
            assert abs(sa.power_d - want) <= 1e-12 * want
    assert clamped > 0  # the low target should shut some weak states off


def test_silent_pnc_states_beat_plain_water_filling():
    # two states where the cheaper schedule shuts the bad PNC state off
    # entirely; the plain clamped map keeps it at a small positive rate
    # and pays about 19% more
    states = sample_states(2, 1102)
    modes = [Mode.PNC, Mode.SPCDNC]
    refined = solve_fixed_modes(states, modes, 0.5)
    plain = solve_fixed_modes(states, modes, 0.5, SolverOptions(refine_uplink=False))
    assert refined.avg_energy <= plain.avg_energy * (1.0 - 0.15)
    assert refined.per_state[0].rate_u == 0.0
    assert refined.per_state[0].power_u == 0.0
    assert abs(refined.avg_rate_u - 0.5) <= 1e-6 * 0.5


def test_refinement_never_hurts():
    rng = np.random.default_rng(62)
    for _ in range(10):
        states, modes = rand_instance(rng, 5)
        lam = float(rng.uniform(0.2, 2.0))
        refined = solve_fixed_modes(states, modes, lam)
        plain = solve_fixed_modes(states, modes, lam, SolverOptions(refine_uplink=False))
        assert refined.avg_energy <= plain.avg_energy * (1.0 + 1e-9)


# ---------------------------------------------------------- KKT residuals

def test_kkt_residuals_vanish_at_an_interior_optimum():
    alloc = solve_fixed_modes([UNIT], [Mode.PNC], 0.5)
    res = kkt_residuals(alloc, [UNIT])
    assert res.clamped_uplink == ()
    assert res.clamped_downlink == ()
    for r in (res.uplink_rate, res.downlink_rate, res.uplink_time, res.downlink_time):
        assert r <= 1e-6
    assert res.gamma > 0.0


def test_kkt_residuals_on_larger_instances(seed7_states):
    # all states active: the residual bound applies with no caveats
    active = sample_states(30, 60)
    alloc = solve_fixed_modes(active, [Mode.SPCDNC] * 30, 2.0)
    res = kkt_residuals(alloc, active)
    assert res.clamped_uplink == () and res.clamped_downlink == ()
    assert res.uplink_time <= 1e-6
    # the standard draw clamps a handful of deeply faded states and still
    # comes out clean
    alloc = solve_fixed_modes(seed7_states, [Mode.SPCDNC] * 1000, 2.0)
    res = kkt_residuals(alloc, seed7_states)
    assert res.uplink_rate <= 1e-6
    assert res.downlink_rate <= 1e-6
    assert res.uplink_time <= 1e-6


def _resolve_at_split(states, modes, lam, f_u):
    """Tight duals for a forced split; rate conditions hold, f is off."""
    f_d = 1.0 - f_u
    b1 = solve_beta1(states, modes, lam / f_u)
    b2 = solve_beta2(states, lam / f_d)
    per = []
    for s, m in zip(states, modes):
        if m is Mode.PNC:
            r_u = pnc_rate_given_beta1(b1, s)
            p_u = pnc_uplink_sum_power(r_u, s) if r_u > 0 else 0.0
        else:
            r_u = dnc_rate_given_beta1(b1, s)
            p_u = dnc_uplink_sum_power(r_u, s) if r_u > 0 else 0.0
        r_d = downlink_rate_given_beta2(b2, s)
        p_d = downlink_power(r_d, s) if r_d > 0 else 0.0
        per.append(StateAllocation(mode=m, rate_u=r_u, rate_d=r_d, power_u=p_u, power_d=p_d))
    energy = float(np.mean([f_u * sa.power_u + f_d * sa.power_d for sa in per]))
    return Allocation(
        split=TimeSplit(f_u, f_d),
        per_state=tuple(per),
        duals=KktPoint(beta1=b1, beta2=b2, gamma=0.0),
        avg_energy=energy,
        avg_rate_u=f_u * float(np.mean([sa.rate_u for sa in per])),
        avg_rate_d=f_d * float(np.mean([sa.rate_d for sa in per])),
    )


def test_perturbed_split_breaks_time_stationarity():
    states, modes = [UNIT], [Mode.PNC]
    base = solve_fixed_modes(states, modes, 0.5)
    shifted = _resolve_at_split(states, modes, 0.5, base.split.f_u + 0.05)
    res = kkt_residuals(shifted, states)
    assert res.uplink_rate <= 1e-6  # duals still tight
    assert res.uplink_time > 1e-3  # split stationarity is not


def test_zero_target_residuals_report_everything_clamped():
    rng = np.random.default_rng(70)
    states, modes = rand_instance(rng, 4)
    alloc = solve_fixed_modes(states, modes, 0.0)
    res = kkt_residuals(alloc, states)
    assert res.clamped_uplink == tuple(range(4))
    assert res.clamped_downlink == tuple(range(4))
    assert res.uplink_rate == 0.0 and res.downlink_rate == 0.0


# ------------------------------------------------------------ split search

def test_golden_section_matches_dense_scan():
    # the reduced objective is unimodal in f_u; the golden-section result
    # must land within one grid cell of a 10^4-point scan argmin
    rng = np.random.default_rng(80)
    f_grid = np.linspace(0.02, 0.98, 10_000)
    spacing = f_grid[1] - f_grid[0]
    opts = SolverOptions(refine_uplink=False)  # the scan uses the plain map
    for trial in range(20):
        states, modes = rand_instance(rng, int(rng.integers(1, 4)))
        lam = float(rng.uniform(0.3, 2.5))
        alloc = solve_fixed_modes(states, modes, lam, opts)
        energies = scan_split_energies(states, modes, lam, f_grid, opts)
        k = int(np.argmin(energies))
        assert abs(alloc.split.f_u - f_grid[k]) <= spacing + 1e-6, (trial, lam)
        assert alloc.avg_energy <= energies[k] * (1.0 + 1e-6)


def test_scan_rejects_fractions_outside_the_open_interval():
    with pytest.raises(ValueError, match="inside"):
        scan_split_energies([UNIT], [Mode.PNC], 0.5, [0.0, 0.5])


# ------------------------------------------------------------------ errors

def test_mismatched_modes_rejected():
    with pytest.raises(ValueError, match="modes"):
        solve_fixed_modes([UNIT], [Mode.PNC, Mode.PNC], 0.5)


def test_negative_target_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        solve_fixed_modes([UNIT], [Mode.PNC], -0.5)


def test_bad_solver_options_rejected():
    with pytest.raises(ValueError):
        SolverOptions(f_lo=0.9, f_hi=0.1)
    with pytest.raises(ValueError):
        SolverOptions(rate_rtol=0.0)


def test_options_are_plain_data():
    opts = SolverOptions()
    assert dataclasses.replace(opts, refine_uplink=False).refine_uplink is False
