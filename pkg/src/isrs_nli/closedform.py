"""Closed-form NLI estimators.

* :func:`eta_effective_attenuation_cf` - conventional GN closed form for the
  central channel, evaluated per channel with its fitted effective attenuation.
* :func:`eta_isrs_gn_cf` - ISRS-aware closed form with an SPM term and a sum of
  XPM terms; cost is O(N_ch) per channel.

Both assume lumped amplification and identical spans (the span count enters
only through ``n`` and ``n^(1+epsilon)``). The symbol written ``a`` in the
SPM bracket is taken as the fibre attenuation ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ChannelPlan, LinkConfig, ModelOptions, dispersion_to_betas
from .integral import ChannelEta, NliResult, _check_channel, _check_lossy
from .raman import EffectiveAttenuation, span_launch_powers

# |phi_ik B_i / alpha| below this uses the atan series
ATAN_SERIES_THRESHOLD = 1e-6


@dataclass(frozen=True)
class ClosedFormTerms:
    """Auxiliary quantities of the ISRS closed form for a whole plan.

    ``phi`` (s^2) per channel, ``phi_ik`` (s^2) with rows ``i`` and columns ``k``,
    ``t`` (Np^2/m^2) per channel and ``a_sum = alpha + alpha_bar`` (Np/m).
    """

    phi: np.ndarray
    phi_ik: np.ndarray
    t: np.ndarray
    a_sum: float
    alpha: float
    alpha_bar: float
    p_tot: float

    @classmethod
    def build(cls, plan: ChannelPlan, link: LinkConfig) -> "ClosedFormTerms":
        fib = link.fiber
        b = dispersion_to_betas(fib)
        f = plan.frequencies
        phi = 1.5 * math.pi**2 * (b.beta2 + 2 * math.pi * b.beta3 * f)
        fi, fk = f[:, None], f[None, :]
        phi_ik = 2 * math.pi**2 * (fk - fi) * (b.beta2 + math.pi * b.beta3 * (fi + fk))
        # total power into the first span; later spans are assumed identical
        p_tot = float(np.sum(span_launch_powers(link, plan)[0]))
        a_sum = fib.alpha + fib.alpha_bar
        t = (a_sum - p_tot * fib.cr * f) ** 2
        return cls(phi, phi_ik, t, a_sum, fib.alpha, fib.alpha_bar, p_tot)


def coherence_epsilon(plan: ChannelPlan, link: LinkConfig, bandwidth=None) -> np.ndarray:
    """Asymptotic span-coherence exponent of the GN model for identical spans, per channel.

    ``0.3 ln(1 + 6 / (alpha L_s asinh(pi^2/2 |beta2_i| W^2 / alpha)))`` where ``W``
    is the bandwidth whose self-interference accumulates coherently: the channel
    bandwidth by default (SPM), or e.g. the occupied bandwidth for a whole-band
    estimate.
    """
    fib = link.fiber
    _check_lossy(fib.alpha)
    b = dispersion_to_betas(fib)
    beta2 = np.abs(b.beta2 + 2 * math.pi * b.beta3 * plan.frequencies)
    w = plan.bandwidths if bandwidth is None else np.broadcast_to(bandwidth, plan.frequencies.shape)
    l_s = link.spans[0].length
    if l_s == 0:
        return np.zeros(plan.n_ch)
    arg = np.arcsinh(0.5 * math.pi**2 * beta2 * w**2 / fib.alpha)
    with np.errstate(divide="ignore"):
        return np.where(arg > 0, 0.3 * np.log1p(6.0 / (fib.alpha * l_s * arg)), 0.0)


def resolve_epsilon(opts: ModelOptions, plan: ChannelPlan, link: LinkConfig, bandwidth=None):
    if opts.epsilon == "auto":
        return coherence_epsilon(plan, link, bandwidth)
    return float(opts.epsilon)


def _atan_over(phi, width, c):
    """``atan(phi * width / c) / phi`` with the removable singularity at ``phi = 0``."""
    x = phi * width / c
    small = np.abs(x) < ATAN_SERIES_THRESHOLD
    safe = np.where(small, 1.0, phi)
    return np.where(small, width / c * (1 - x**2 / 3), np.arctan(x) / safe)


def isrs_gn_cf_all(plan: ChannelPlan, link: LinkConfig, opts: ModelOptions = ModelOptions(),
                   terms: ClosedFormTerms | None = None) -> np.ndarray:
    """Closed-form ISRS GN ``eta`` (1/W^2) of every channel, vectorised."""
    p = plan.powers
    if np.any(p <= 0):
        raise ValueError("every channel needs a positive launch power")
    _check_lossy(link.fiber.alpha)
    terms = ClosedFormTerms.build(plan, link) if terms is None else terms
    if np.any(terms.phi == 0):
        raise ValueError("zero dispersion at a channel frequency; the SPM term is singular")
    fib = link.fiber
    gamma = fib.gamma
    n = link.n_spans
    alpha, abar, a_sum = terms.alpha, terms.alpha_bar, terms.a_sum
    b = plan.bandwidths
    t = terms.t
    denom = abar * (2 * alpha + abar)

    phi = terms.phi
    spm = (4.0 / 9.0) * gamma**2 / b**2 * math.pi * n ** (1 + resolve_epsilon(opts, plan, link)) / (phi * denom) * (
        (t - alpha**2) / alpha * np.arcsinh(phi * b**2 / (math.pi * alpha))
        + (a_sum**2 - t) / a_sum * np.arcsinh(phi * b**2 / (math.pi * a_sum)))

    bi = b[:, None]
    tk = t[None, :]
    ratio = (p[None, :] / p[:, None]) ** 2
    bracket = ((tk - alpha**2) / alpha * _atan_over(terms.phi_ik, bi, alpha)
               + (a_sum**2 - tk) / a_sum * _atan_over(terms.phi_ik, bi, a_sum))
    xpm = (32.0 / 27.0) * ratio * gamma**2 / b[None, :] * n / denom * bracket
    np.fill_diagonal(xpm, 0.0)
    return spm + xpm.sum(axis=1)


def eta_isrs_gn_cf(plan: ChannelPlan, link: LinkConfig, channel_index: int,
                   opts: ModelOptions = ModelOptions()) -> ChannelEta:
    """ISRS GN closed form for one channel (SPM plus XPM from every other channel)."""
    _check_channel(plan, channel_index)
    eta = isrs_gn_cf_all(plan, link, opts)[channel_index]
    return ChannelEta(channel_index, float(plan.frequencies[channel_index]), float(eta), 0.0, "isrs-gn-cf")


def effective_attenuation_cf_all(plan: ChannelPlan, link: LinkConfig, eff: EffectiveAttenuation,
                                 opts: ModelOptions = ModelOptions()) -> np.ndarray:
    """Effective-attenuation closed form ``eta`` (1/W^2) for every channel."""
    _check_lossy(link.fiber.alpha)
    b = dispersion_to_betas(link.fiber)
    beta2_i = np.abs(b.beta2 + 2 * math.pi * b.beta3 * plan.frequencies)
    if np.any(beta2_i == 0):
        raise ValueError("zero dispersion at a channel frequency")
    a_eff = np.asarray(eff.alpha_eff, dtype=float)
    l_eff = np.asarray(eff.l_eff, dtype=float)
    gamma = link.fiber.gamma
    n = link.n_spans
    bi = plan.bandwidths
    return ((8.0 / 27.0) * gamma**2 * n ** (1 + resolve_epsilon(opts, plan, link, plan.b_tot)) * a_eff * l_eff**2 / (math.pi * beta2_i * bi**2)
            * np.arcsinh(0.5 * math.pi**2 * beta2_i * plan.b_tot**2 / a_eff))


def eta_effective_attenuation_cf(plan: ChannelPlan, link: LinkConfig, eff: EffectiveAttenuation,
                                 channel_index: int, opts: ModelOptions = ModelOptions()) -> ChannelEta:
    """Effective-attenuation closed form for channel ``channel_index``."""
    _check_channel(plan, channel_index)
    eta = effective_attenuation_cf_all(plan, link, eff, opts)[channel_index]
    return ChannelEta(channel_index, float(plan.frequencies[channel_index]), float(eta), 0.0, "eff-attn-cf")


def closed_form_result(model: str, plan: ChannelPlan, eta: np.ndarray, **meta) -> NliResult:
    ch = np.arange(plan.n_ch)
    return NliResult(model, plan.frequencies.copy(), plan.powers.copy(), np.asarray(eta, dtype=float),
                     np.zeros(plan.n_ch), ch, dict(meta, converged=True))
