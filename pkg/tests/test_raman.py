import math

import numpy as np
import pytest

from conftest import uniform_link
from isrs_nli.core import ChannelPlan, LinkConfig, ModelOptions, Span, build_nyquist_plan
from isrs_nli.raman import (
    NoBracketError,
    PowerProfile,
    SpanProfile,
    analytic_triangular_profile,
    exponential_profile,
    fit_effective_attenuation,
    isrs_power_transfer_db,
    solve_raman_ode,
    span_launch_powers,
)
from isrs_nli.units import dbm_to_watt


def test_loss_only_when_cr_zero(fiber, desk_plan):
    link = uniform_link(fiber, cr=0.0)
    prof = solve_raman_ode(link, desk_plan)
    end = prof.spans[0].rho[-1]
    assert end == pytest.approx(np.full(5, 10 ** -1.6), rel=1e-9)
    eff = fit_effective_attenuation(prof)
    assert eff.l_eff == pytest.approx(np.full(5, (1 - 10 ** -1.6) / fiber.alpha), rel=1e-9)
    assert eff.alpha_eff == pytest.approx(np.full(5, fiber.alpha), rel=1e-9)


def test_power_conservation_without_loss(fiber, wide_plan):
    link = uniform_link(fiber, alpha=0.0, cr=fiber.cr * 4)
    prof = solve_raman_ode(link, wide_plan, ModelOptions(ode_rtol=1e-10))
    total = prof.spans[0].rho @ wide_plan.powers
    assert np.max(np.abs(total / wide_plan.p_tot - 1)) < 1e-8
    assert isrs_power_transfer_db(prof) > 1.0


def test_lower_frequencies_end_stronger(fiber, wide_plan):
    prof = solve_raman_ode(uniform_link(fiber, 2), wide_plan)
    for sp in prof.spans:
        assert np.all(np.diff(sp.rho[-1]) < 0)
        assert np.all(np.diff(sp.rho[1]) < 0)


def test_effective_attenuation_sign(fiber, wide_plan):
    prof = solve_raman_ode(uniform_link(fiber), wide_plan)
    eff = fit_effective_attenuation(prof)
    c = wide_plan.center_index()
    assert np.all(eff.alpha_eff[:c] < fiber.alpha)
    assert np.all(eff.alpha_eff[c + 1:] > fiber.alpha)
    assert np.all(np.diff(eff.alpha_eff) > 0)


@pytest.mark.parametrize("alpha_db", [0.05, 0.2, 0.35])
def test_exponential_recovery(fiber, desk_plan, alpha_db):
    alpha = alpha_db / (10 / math.log(10)) / 1e3
    link = uniform_link(fiber)
    prof = exponential_profile(link, desk_plan, [alpha])
    eff = fit_effective_attenuation(prof)
    assert np.max(np.abs(eff.alpha_eff / alpha - 1)) < 1e-6
    assert eff.l_eff == pytest.approx(np.full(5, -math.expm1(-alpha * 80e3) / alpha), rel=1e-12)


def test_exponential_recovery_sampled(fiber, desk_plan):
    # finely sampled exponential: the log-linear rule is exact on every grid
    z = np.linspace(0, 80e3, 37)
    rho = np.exp(-np.outer(z, np.full(5, fiber.alpha)))
    prof = PowerProfile((SpanProfile(z, rho),), desk_plan, uniform_link(fiber))
    eff = fit_effective_attenuation(prof)
    assert np.max(np.abs(eff.alpha_eff / fiber.alpha - 1)) < 1e-6


@pytest.mark.parametrize("p_dbm", [0.0, 4.0, 8.0, 12.0])
def test_analytic_matches_ode(fiber, p_dbm):
    plan = build_nyquist_plan(15, 100e9, float(dbm_to_watt(p_dbm)))
    link = uniform_link(fiber, 2)
    ode = solve_raman_ode(link, plan)
    ana = analytic_triangular_profile(link, plan)
    if isrs_power_transfer_db(ode) <= 3.0:
        assert np.max(np.abs(10 * np.log10(ana.rho / ode.rho))) < 0.1


def test_power_transfer_grows_with_power(fiber):
    link = uniform_link(fiber)
    t = [isrs_power_transfer_db(solve_raman_ode(link, build_nyquist_plan(15, 100e9, float(dbm_to_watt(p)))))
         for p in (0, 5, 10, 15)]
    assert np.all(np.diff(t) > 0)
    assert t[0] > 0


def test_power_transfer_needs_two_channels(fiber):
    plan = build_nyquist_plan(1, 40e9, 1e-3)
    with pytest.raises(ValueError):
        isrs_power_transfer_db(solve_raman_ode(uniform_link(fiber), plan))


def test_no_bracket_for_lossless(fiber, desk_plan):
    prof = solve_raman_ode(uniform_link(fiber, alpha=0.0, cr=0.0), desk_plan)
    with pytest.raises(NoBracketError):
        fit_effective_attenuation(prof)


def test_fixed_gain_carries_tilt(fiber, wide_plan):
    link = LinkConfig.uniform(fiber, 3, 80e3, gain_policy="fixed-gain")
    prof = solve_raman_ode(link, wide_plan)
    launches = [prof.launch_powers(k) for k in range(3)]
    assert launches[0] == pytest.approx(wide_plan.powers)
    # tilt accumulates span after span
    tilts = [l[0] / l[-1] for l in launches]
    assert tilts[0] == pytest.approx(1.0) and tilts[1] > 1.0 and tilts[2] > tilts[1]
    ana = span_launch_powers(link, wide_plan)
    for a, b in zip(ana, launches):
        assert a == pytest.approx(b, rel=1e-4)


def test_explicit_launch_powers(fiber, desk_plan):
    launch = desk_plan.powers * np.linspace(0.5, 2.0, 5)
    link = LinkConfig((Span(80e3, fiber), Span(60e3, fiber, launch)))
    prof = solve_raman_ode(link, desk_plan)
    assert prof.launch_powers(1) == pytest.approx(launch)


def test_profile_csv_header(fiber, desk_plan):
    prof = solve_raman_ode(uniform_link(fiber, length=2e3), desk_plan)
    lines = prof.to_csv().splitlines()
    assert lines[0].startswith("z_m,rho_-0.080000THz")
    assert len(lines) == 1 + 3


def test_rho_at_interpolates_log_linearly(fiber, desk_plan):
    prof = exponential_profile(uniform_link(fiber), desk_plan, [fiber.alpha])
    assert prof.rho_at(0, 30e3) == pytest.approx(np.exp(-fiber.alpha * 30e3), rel=1e-12)


def test_zero_power_channel_allowed(fiber):
    plan = ChannelPlan(np.array([-1e11, 0.0, 1e11]), np.full(3, 1e11), np.array([1e-3, 0.0, 1e-3]))
    prof = solve_raman_ode(uniform_link(fiber), plan)
    assert np.all(np.isfinite(prof.rho))
