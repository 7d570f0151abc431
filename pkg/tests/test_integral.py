import math

import numpy as np
import pytest
from scipy import integrate

from conftest import db, uniform_link
from isrs_nli.core import ModelOptions, build_nyquist_plan, dispersion_to_betas
from isrs_nli.integral import (
    NliResult,
    conventional_gn,
    eta_effective_attenuation_integral,
    eta_isrs_gn_analytic,
    eta_isrs_gn_general,
    evaluate_channels,
    nli_power,
    phase_mismatch,
)
from isrs_nli.quadrature import filon_exponential, thin_grid
from isrs_nli.raman import exponential_profile, fit_effective_attenuation, solve_raman_ode
from isrs_nli.units import dbm_to_watt


def _oracle_single_channel(fiber, baud, length):
    """Loss-only, one channel, one span: z-integral in closed form, plane by scipy dblquad."""
    b = dispersion_to_betas(fiber)
    a = fiber.alpha

    def z_kernel(f2, f1):
        phi = -4 * math.pi**2 * f1 * f2 * (b.beta2 + math.pi * b.beta3 * (f1 + f2))
        s = complex(-a, phi)
        return abs(np.expm1(s * length) / s) ** 2

    half = baud / 2
    val, _ = integrate.dblquad(z_kernel, -half, half, lambda f1: max(-half, -half - f1),
                               lambda f1: min(half, half - f1), epsabs=0, epsrel=1e-8)
    return (16 / 27) * fiber.gamma**2 * baud / baud**3 * val


def test_matches_nested_quadrature(fiber):
    baud = 32e9
    plan = build_nyquist_plan(1, baud, 1e-3)
    link = uniform_link(fiber, cr=0.0)
    want = _oracle_single_channel(fiber, baud, 80e3)
    got = conventional_gn(plan, link, 0, ModelOptions(rtol=1e-5, max_level=6))
    assert abs(db(got.eta) - db(want)) < 2e-3


def test_eta_independent_of_power_without_raman(fiber, desk_plan):
    link = uniform_link(fiber, cr=0.0)
    a = conventional_gn(desk_plan, link, 2).eta
    b = conventional_gn(desk_plan.with_powers(desk_plan.powers * 10), link, 2).eta
    assert a == pytest.approx(b, rel=1e-9)


def test_zero_gamma_gives_zero(fiber, desk_plan):
    link = uniform_link(fiber, gamma=0.0)
    prof = solve_raman_ode(link, desk_plan)
    assert eta_isrs_gn_general(prof, None, 2).eta == 0.0
    assert eta_isrs_gn_analytic(link, desk_plan, 2).eta == 0.0


def test_mirror_symmetry_without_slope(fiber, desk_plan):
    # beta3 = 0 and no Raman: the outer channels see mirror-image interference
    lam = fiber.ref_wavelength
    flat = fiber.with_(disp_s=-2 * fiber.disp_d / lam, cr=0.0)
    assert abs(dispersion_to_betas(flat).beta3) < 1e-45
    link = uniform_link(flat)
    lo, hi = conventional_gn(desk_plan, link, 0), conventional_gn(desk_plan, link, 4)
    # the quadrature grids are not mirror images, so agreement is at integration accuracy
    assert lo.eta == pytest.approx(hi.eta, rel=1e-4)


def test_phase_mismatch_symmetric():
    rng = np.random.default_rng(3)
    f1, f2, fi = rng.uniform(-1e12, 1e12, (3, 50))
    a = phase_mismatch(f1, f2, fi, 1e3, -2e-26, 1e-40)
    b = phase_mismatch(f2, f1, fi, 1e3, -2e-26, 1e-40)
    assert a == pytest.approx(b, rel=1e-12)
    assert np.all(phase_mismatch(fi, f2, fi, 1e3, -2e-26, 1e-40) == 0)


def test_nli_power():
    assert nli_power(1e3, 1e-3) == pytest.approx(1e-6)
    with pytest.raises(ValueError):
        nli_power(-1.0, 1e-3)
    with pytest.raises(ValueError):
        nli_power(1.0, 0.0)


def test_coherent_accumulation(fiber, desk_plan):
    one = conventional_gn(desk_plan, uniform_link(fiber, 1, cr=0.0), 2).eta
    three = conventional_gn(desk_plan, uniform_link(fiber, 3, cr=0.0), 2).eta
    assert 3 * one < three < 9 * one


def test_analytic_equals_general_without_raman(fiber, desk_plan):
    link = uniform_link(fiber, 2, cr=0.0)
    prof = solve_raman_ode(link, desk_plan)
    g = eta_isrs_gn_general(prof, None, 1)
    a = eta_isrs_gn_analytic(link, desk_plan, 1)
    assert abs(g.eta_db - a.eta_db) < 5e-3


def test_analytic_matches_general_with_raman(fiber):
    plan = build_nyquist_plan(7, 100e9, float(dbm_to_watt(10.0)))
    link = uniform_link(fiber, 1)
    prof = solve_raman_ode(link, plan)
    for ch in (0, 6):
        g = eta_isrs_gn_general(prof, None, ch)
        a = eta_isrs_gn_analytic(link, plan, ch)
        assert abs(g.eta_db - a.eta_db) < 0.02


def test_raman_moves_eta_in_opposite_directions(fiber):
    plan = build_nyquist_plan(7, 100e9, float(dbm_to_watt(14.0)))
    link = uniform_link(fiber)
    prof = solve_raman_ode(link, plan)
    ref = [conventional_gn(plan, link, c).eta for c in (0, 6)]
    isrs = [eta_isrs_gn_general(prof, None, c).eta for c in (0, 6)]
    # the low-frequency channel is amplified along the span, the high-frequency one depleted
    assert isrs[0] > ref[0] and isrs[1] < ref[1]


def test_effective_attenuation_integral_without_raman(fiber, desk_plan):
    link = uniform_link(fiber, cr=0.0)
    eff = fit_effective_attenuation(solve_raman_ode(link, desk_plan))
    a = eta_effective_attenuation_integral(desk_plan, link, eff, 2)
    b = conventional_gn(desk_plan, link, 2)
    assert a.eta == pytest.approx(b.eta, rel=1e-9)
    with pytest.raises(ValueError):
        eta_effective_attenuation_integral(desk_plan, link, [eff, eff], 2)


def test_bad_channel(fiber, desk_plan):
    with pytest.raises(IndexError):
        conventional_gn(desk_plan, uniform_link(fiber), 5)


def test_lossless_fibre_rejected(fiber, desk_plan):
    with pytest.raises(ValueError, match="lossy"):
        conventional_gn(desk_plan, uniform_link(fiber, alpha=0.0, cr=0.0), 2)


def test_evaluate_channels_keeps_order(fiber, desk_plan):
    link = uniform_link(fiber, cr=0.0)
    seq = evaluate_channels(lambda c: conventional_gn(desk_plan, link, c), [4, 0, 2])
    par = evaluate_channels(lambda c: conventional_gn(desk_plan, link, c), [4, 0, 2], workers=3)
    assert [e.channel for e in par] == [4, 0, 2]
    assert [e.eta for e in par] == [e.eta for e in seq]
    res = NliResult.from_entries("gn", desk_plan, seq)
    lines = res.to_csv().splitlines()
    assert lines[0] == "channel,frequency_thz,eta_db,eta_per_w2,error_per_w2"
    assert lines[1].startswith("4,0.080000,")


def test_filon_exact_for_exponential():
    z = np.linspace(0, 80e3, 5)
    alpha, phi = 4.6e-5, np.array([0.0, 1e-4, 3e-3])
    log_g = -alpha * z
    got = filon_exponential(log_g[None, :].repeat(3, 0), z, phi)
    s = -alpha + 1j * phi
    want = np.expm1(s * 80e3) / s
    assert got == pytest.approx(want, rel=1e-10)


def test_thin_grid_within_tolerance():
    z = np.linspace(0, 1, 401)
    y = np.column_stack([np.sin(3 * z) + z**2, np.cos(5 * z)])
    keep = thin_grid(z, y, 1e-4)
    assert keep[0] == 0 and keep[-1] == 400 and len(keep) < 200
    for col in y.T:
        assert np.max(np.abs(np.interp(z, z[keep], col[keep]) - col)) <= 1e-4
