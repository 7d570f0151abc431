"""Integral-form NLI estimators.

* :func:`eta_isrs_gn_general` - GN integral for an arbitrary power profile of the
  whole link (the conventional GN model is its loss-only special case).
* :func:`eta_isrs_gn_analytic` - span sum with the closed-form triangular-gain
  kernel, one coherent phase term per span.
* :func:`eta_effective_attenuation_integral` - conventional GN integral with the
  fibre loss replaced by the channel's effective attenuation.

All return a :class:`ChannelEta`. ``eta`` is the NLI power in the channel
bandwidth divided by ``P_i^3``, with the NLI PSD taken at the channel centre.
The prefactor is the dual-polarisation ``16/27``, so the single-channel
loss-only case reproduces the conventional GN model.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ChannelPlan, LinkConfig, ModelOptions, dispersion_to_betas
from .quadrature import GnPlaneIntegrator, filon_exponential, thin_grid
from .raman import (
    EffectiveAttenuation,
    PowerProfile,
    TRIANGULAR_BANDWIDTH_LIMIT,
    exponential_profile,
    span_launch_powers,
    triangular_log_kernel,
)

GN_PREFACTOR = 16.0 / 27.0
THIN_TOL = 1e-4  # max log deviation of the thinned profile grid
PARTITION_TOL = 1e-5  # same for the bisected closed-form kernel


def phase_mismatch(f1, f2, fi, zeta, beta2: float, beta3: float):
    """FWM phase mismatch (rad) accumulated over distance ``zeta``."""
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    return -4 * math.pi**2 * (f1 - fi) * (f2 - fi) * (beta2 + math.pi * beta3 * (f1 + f2)) * zeta


def nli_power(eta, p_i):
    """NLI power ``eta * P_i^3`` (W)."""
    if np.any(np.asarray(eta) < 0):
        raise ValueError("eta must be >= 0")
    if np.any(np.asarray(p_i) <= 0):
        raise ValueError("p_i must be > 0")
    return eta * np.asarray(p_i) ** 3


@dataclass(frozen=True)
class ChannelEta:
    channel: int
    frequency: float
    eta: float
    error: float
    model: str
    converged: bool = True

    @property
    def eta_db(self) -> float:
        return 10 * math.log10(self.eta) if self.eta > 0 else -math.inf


@dataclass
class NliResult:
    """Per-channel NLI coefficients of one model."""

    model: str
    frequencies: np.ndarray
    powers: np.ndarray
    eta: np.ndarray
    error: np.ndarray
    channels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.eta < 0):
            raise ValueError("eta must be non-negative")

    @property
    def p_nli(self) -> np.ndarray:
        return self.eta * self.powers**3

    @property
    def eta_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.eta)

    @classmethod
    def from_entries(cls, model: str, plan: ChannelPlan, entries: Sequence[ChannelEta], **meta) -> "NliResult":
        ch = np.array([e.channel for e in entries], dtype=int)
        return cls(
            model=model,
            frequencies=plan.frequencies[ch],
            powers=plan.powers[ch],
            eta=np.array([e.eta for e in entries]),
            error=np.array([e.error for e in entries]),
            channels=ch,
            meta=dict(meta, converged=all(e.converged for e in entries)),
        )

    def to_csv(self, path=None) -> str:
        lines = ["channel,frequency_thz,eta_db,eta_per_w2,error_per_w2"]
        for c, f, e, err in zip(self.channels, self.frequencies, self.eta, self.error):
            eta_db = 10 * math.log10(e) if e > 0 else -math.inf
            lines.append(f"{c},{f / 1e12:.6f},{eta_db:.6f},{e:.9e},{err:.3e}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _span_betas(link: LinkConfig):
    return [dispersion_to_betas(s.fiber) for s in link.spans]


def _check_channel(plan: ChannelPlan, channel_index: int) -> None:
    if not 0 <= channel_index < plan.n_ch:
        raise IndexError(f"channel {channel_index} outside plan of {plan.n_ch} channels")
    if plan.powers[channel_index] <= 0:
        raise ValueError(f"channel {channel_index} has zero launch power")


def _check_lossy(alpha: float) -> None:
    if not alpha > 0:
        raise ValueError("the GN integral needs a lossy fibre (alpha > 0) in every span")


class _PhaseBook:
    """Per-span phase coefficients and the accumulated phase at each span start."""

    def __init__(self, link: LinkConfig, fi: float):
        self.fi = fi
        self.betas = _span_betas(link)
        self.lengths = link.span_lengths
        self.gammas = np.array([s.fiber.gamma for s in link.spans])

    def coefficients(self, f1, f2):
        return [phase_mismatch(f1, f2, self.fi, 1.0, b.beta2, b.beta3) for b in self.betas]


def _tail_sum(gammas, phis, g_start, g_end):
    """Oscillation-averaged ``|sum_k gamma_k int g_k e^{j phi_k z}|^2`` for large ``|phi|``.

    Each span contributes its boundary terms ``g/phi``; terms sharing a span
    boundary add coherently, different boundaries add in power.
    """
    n = len(phis)
    total = (gammas[0] * g_start[0] / phis[0]) ** 2
    for k in range(n - 1):
        total = total + (gammas[k] * g_end[k] / phis[k] - gammas[k + 1] * g_start[k + 1] / phis[k + 1]) ** 2
    return total + (gammas[-1] * g_end[-1] / phis[-1]) ** 2


class _ProfileKernel:
    """Integrand built from a sampled power profile."""

    def __init__(self, profile: PowerProfile, fi: float):
        link = profile.link
        self.profile = profile
        self.plan = profile.plan
        self.fi = fi
        self.book = _PhaseBook(link, fi)
        self.alpha = min(s.fiber.alpha for s in link.spans)
        _check_lossy(self.alpha)
        self.coherent_length = link.total_length
        self.beta2 = self.book.betas[0].beta2
        self.beta3 = self.book.betas[0].beta3
        sp0 = profile.spans[0]
        self.identical = link.n_spans > 1 and all(
            s.fiber == link.spans[0].fiber and s.length == link.spans[0].length
            and np.array_equal(p.z, sp0.z) and np.array_equal(p.rho, sp0.rho)
            for s, p in zip(link.spans, profile.spans))
        # nodes on which ln(rho) is log-linear to THIN_TOL for every channel
        self._z, self._lr = [], []
        for sp in profile.spans:
            lr = sp.log_rho
            idx = thin_grid(sp.z, lr, THIN_TOL)
            self._z.append(sp.z[idx])
            self._lr.append(np.ascontiguousarray(lr[idx].T))
        self._lri = [self._interp(k, np.array([fi]))[0] for k in range(profile.n_spans)]

    def _interp(self, k, f):
        """``ln rho`` at frequencies ``f`` on the thinned grid, shape (len(f), nz)."""
        lr = self._lr[k]
        fc = self.plan.frequencies
        if fc.size == 1:
            return np.repeat(lr[:1], f.size, axis=0)
        idx = np.clip(np.searchsorted(fc, f) - 1, 0, fc.size - 2)
        w = ((f - fc[idx]) / (fc[idx + 1] - fc[idx]))[:, None]
        return lr[idx] * (1.0 - w) + lr[idx + 1] * w

    def _log_g(self, k, f1, f2, f3):
        return 0.5 * (self._interp(k, f1) + self._interp(k, f2) + self._interp(k, f3) - self._lri[k][None, :])

    def _psd(self, f1, f2, f3):
        return self.plan.psd(f1) * self.plan.psd(f2) * self.plan.psd(f3)

    def resolved(self, f1, f2):
        f3 = f1 + f2 - self.fi
        phis = self.book.coefficients(f1, f2)
        gam, lengths = self.book.gammas, self.book.lengths
        if self.identical:
            k1 = gam[0] * filon_exponential(self._log_g(0, f1, f2, f3), self._z[0], phis[0])
            af = np.zeros_like(k1)
            for k in range(len(lengths)):
                af += np.exp(1j * phis[0] * lengths[0] * k)
            total = k1 * af
        else:
            total = np.zeros(f1.size, dtype=complex)
            theta = np.zeros(f1.size)
            for k in range(self.profile.n_spans):
                kk = filon_exponential(self._log_g(k, f1, f2, f3), self._z[k], phis[k])
                total += gam[k] * np.exp(1j * theta) * kk
                theta = theta + phis[k] * lengths[k]
        return self._psd(f1, f2, f3) * np.abs(total) ** 2

    def tail(self, f1, f2):
        f3 = f1 + f2 - self.fi
        phis = self.book.coefficients(f1, f2)
        g_start, g_end = [], []
        for k in range(self.profile.n_spans):
            lg = self._log_g(k, f1, f2, f3)
            g_start.append(np.exp(lg[:, 0]))
            g_end.append(np.exp(lg[:, -1]))
        return self._psd(f1, f2, f3) * _tail_sum(self.book.gammas, phis, g_start, g_end)


def _adaptive_partition(fn, a: float, b: float, tol: float, max_depth: int = 30) -> np.ndarray:
    """Bisect ``[a, b]`` until ``fn`` (vector valued) is linear to ``tol`` on every piece."""
    out = [a]

    def rec(lo, hi, depth):
        mid = 0.5 * (lo + hi)
        f = fn(np.array([lo, mid, hi]))
        dev = np.max(np.abs(f[1] - 0.5 * (f[0] + f[2])))
        if depth >= max_depth or (dev < tol and depth >= 1):
            out.append(hi)
            return
        rec(lo, mid, depth + 1)
        rec(mid, hi, depth + 1)

    if b > a:
        rec(a, b, 0)
    else:
        out.append(b)
    return np.array(out)


class _TriangularKernel:
    """Integrand of the span-sum model with the closed-form triangular-gain profile."""

    def __init__(self, link: LinkConfig, plan: ChannelPlan, fi: float, launches, tol: float = PARTITION_TOL):
        self.plan = plan
        self.fi = fi
        self.book = _PhaseBook(link, fi)
        self.alpha = min(s.fiber.alpha for s in link.spans)
        _check_lossy(self.alpha)
        self.coherent_length = link.total_length
        self.beta2 = self.book.betas[0].beta2
        self.beta3 = self.book.betas[0].beta3
        self.launches = [np.asarray(g, dtype=float) for g in launches]
        f_probe = np.array([plan.lower_edges.min(), plan.upper_edges.max()])
        self.z, self.c0, self.slope = [], [], []
        for span, g in zip(link.spans, self.launches):
            fib = span.fiber

            def lk(z, g=g, fib=fib):
                return triangular_log_kernel(z, f_probe, g, plan, fib.alpha, fib.cr)

            z = _adaptive_partition(lk, 0.0, span.length, tol)
            # ln kernel is affine in frequency: c0(z) - slope(z) * f
            two = triangular_log_kernel(z, np.array([0.0, 1e12]), g, plan, fib.alpha, fib.cr)
            self.z.append(z)
            self.c0.append(two[:, 0])
            self.slope.append((two[:, 0] - two[:, 1]) / 1e12)
        self.g1_fi = float(plan.psd([fi], self.launches[0])[0])
        self.identical = link.n_spans > 1 and link.is_uniform() and all(
            np.array_equal(g, self.launches[0]) for g in self.launches)

    def _log_kernel(self, k, f3):
        return self.c0[k][None, :] - f3[:, None] * self.slope[k][None, :]

    def _s(self, k, f1, f2, f3):
        g = self.launches[k]
        num = self.plan.psd(f1, g) * self.plan.psd(f2, g) * self.plan.psd(f3, g)
        den = float(self.plan.psd([self.fi], g)[0])
        return np.sqrt(num / den)

    def resolved(self, f1, f2):
        f3 = f1 + f2 - self.fi
        phis = self.book.coefficients(f1, f2)
        gam, lengths = self.book.gammas, self.book.lengths
        if self.identical:
            k1 = gam[0] * self._s(0, f1, f2, f3) * filon_exponential(self._log_kernel(0, f3), self.z[0], phis[0])
            af = np.zeros_like(k1)
            for k in range(len(lengths)):
                af += np.exp(1j * phis[0] * lengths[0] * k)
            total = k1 * af
        else:
            total = np.zeros(f1.size, dtype=complex)
            theta = np.zeros(f1.size)
            for k in range(len(lengths)):
                kk = filon_exponential(self._log_kernel(k, f3), self.z[k], phis[k])
                total += gam[k] * self._s(k, f1, f2, f3) * np.exp(1j * theta) * kk
                theta = theta + phis[k] * lengths[k]
        return self.g1_fi * np.abs(total) ** 2

    def tail(self, f1, f2):
        f3 = f1 + f2 - self.fi
        phis = self.book.coefficients(f1, f2)
        g_start, g_end = [], []
        for k in range(len(self.z)):
            s = self._s(k, f1, f2, f3)
            lk = self._log_kernel(k, f3)
            g_start.append(s * np.exp(lk[:, 0]))
            g_end.append(s * np.exp(lk[:, -1]))
        return self.g1_fi * _tail_sum(self.book.gammas, phis, g_start, g_end)


def _integrate(kernel, plan: ChannelPlan, channel_index: int, opts: ModelOptions):
    fi = plan.frequencies[channel_index]
    integ = GnPlaneIntegrator(kernel, plan.lower_edges, plan.upper_edges, fi, opts.phase_cutoff)
    return integ.integrate(opts.rtol, opts.max_level)


def _finish(plan, channel_index, q, model) -> ChannelEta:
    b_i = plan.bandwidths[channel_index]
    p_i = plan.powers[channel_index]
    scale = GN_PREFACTOR * b_i / p_i**3
    return ChannelEta(channel_index, float(plan.frequencies[channel_index]), max(q.value, 0.0) * scale,
                      q.error * scale, model, q.converged)


def eta_isrs_gn_general(profile: PowerProfile, plan: Optional[ChannelPlan], channel_index: int,
                        opts: ModelOptions = ModelOptions()) -> ChannelEta:
    """GN integral with an arbitrary sampled power profile of the whole link."""
    plan = profile.plan if plan is None else plan
    _check_channel(plan, channel_index)
    if all(s.fiber.gamma == 0 for s in profile.link.spans):
        return ChannelEta(channel_index, float(plan.frequencies[channel_index]), 0.0, 0.0, "isrs-gn-general")
    kernel = _ProfileKernel(profile, plan.frequencies[channel_index])
    return _finish(plan, channel_index, _integrate(kernel, plan, channel_index, opts), "isrs-gn-general")


def eta_isrs_gn_analytic(link: LinkConfig, plan: ChannelPlan, channel_index: int,
                         opts: ModelOptions = ModelOptions()) -> ChannelEta:
    """Span-sum model with the closed-form triangular-gain kernel and per-span launch spectra."""
    _check_channel(plan, channel_index)
    if plan.b_tot > TRIANGULAR_BANDWIDTH_LIMIT:
        warnings.warn("occupied bandwidth exceeds 15 THz; the triangular Raman gain is extrapolated",
                      RuntimeWarning, stacklevel=2)
    if all(s.fiber.gamma == 0 for s in link.spans):
        return ChannelEta(channel_index, float(plan.frequencies[channel_index]), 0.0, 0.0, "isrs-gn-analytic")
    kernel = _TriangularKernel(link, plan, plan.frequencies[channel_index], span_launch_powers(link, plan))
    return _finish(plan, channel_index, _integrate(kernel, plan, channel_index, opts), "isrs-gn-analytic")


def eta_effective_attenuation_integral(plan: ChannelPlan, link: LinkConfig, eff, channel_index: int,
                                       opts: ModelOptions = ModelOptions()) -> ChannelEta:
    """Conventional GN integral with ``exp(-alpha_eff,i z)`` for every frequency.

    ``eff`` is one :class:`EffectiveAttenuation` (applied to every span) or a
    sequence with one fit per span.
    """
    _check_channel(plan, channel_index)
    fits = [eff] * link.n_spans if isinstance(eff, EffectiveAttenuation) else list(eff)
    if len(fits) != link.n_spans:
        raise ValueError("need one effective-attenuation fit per span")
    alphas = [float(f.alpha_eff[channel_index]) for f in fits]
    profile = exponential_profile(link, plan, alphas)
    res = eta_isrs_gn_general(profile, plan, channel_index, opts)
    return ChannelEta(res.channel, res.frequency, res.eta, res.error, "eff-attn-integral", res.converged)


def conventional_gn(plan: ChannelPlan, link: LinkConfig, channel_index: int,
                    opts: ModelOptions = ModelOptions()) -> ChannelEta:
    """GN integral without Raman scattering (loss-only profile)."""
    profile = exponential_profile(link, plan, [s.fiber.alpha for s in link.spans])
    res = eta_isrs_gn_general(profile, plan, channel_index, opts)
    return ChannelEta(res.channel, res.frequency, res.eta, res.error, "gn", res.converged)


def evaluate_channels(fn: Callable[[int], ChannelEta], channels: Sequence[int], workers: int = 1):
    """Run a per-channel estimator over ``channels``, optionally on a thread pool.

    Results keep the order of ``channels``.
    """
    channels = list(channels)
    if workers <= 1 or len(channels) <= 1:
        return [fn(c) for c in channels]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, channels))
