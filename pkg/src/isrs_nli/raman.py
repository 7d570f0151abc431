"""Signal power profiles under inter-channel stimulated Raman scattering.

Profiles are stored per span as ``rho[z, channel]``: channel power divided by the
transmitter launch power of that channel. Two routes produce them, a fixed-step
RK4 integration of the coupled power equations and the closed-form solution of
the triangular-gain model. Both also feed the effective-attenuation regression
and the power-transfer metric.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .core import ChannelPlan, LinkConfig, ModelOptions
from .units import SPEED_OF_LIGHT

log = logging.getLogger(__name__)

TRIANGULAR_BANDWIDTH_LIMIT = 15e12


class RamanSolverError(RuntimeError):
    pass


class NoBracketError(ValueError):
    """The profile does not attenuate, so no effective attenuation exists."""


@dataclass(frozen=True)
class SpanProfile:
    z: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        rho = np.array(self.rho, dtype=float)
        if rho.ndim != 2 or rho.shape[0] != z.size:
            raise ValueError("rho must have shape (len(z), n_ch)")
        if np.any(~np.isfinite(rho)) or np.any(rho <= 0):
            raise RamanSolverError("power profile must be finite and strictly positive")
        z.setflags(write=False)
        rho.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "rho", rho)

    @property
    def length(self) -> float:
        return float(self.z[-1])

    @property
    def log_rho(self) -> np.ndarray:
        return np.log(self.rho)


@dataclass(frozen=True)
class PowerProfile:
    spans: tuple
    plan: ChannelPlan
    link: LinkConfig
    method: str = "ode"

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(self.spans))
        if len(self.spans) != self.link.n_spans:
            raise ValueError("one span profile per link span is required")
        for sp in self.spans:
            if sp.rho.shape[1] != self.plan.n_ch:
                raise ValueError("profile channel count does not match the plan")

    @property
    def n_spans(self) -> int:
        return len(self.spans)

    @property
    def span_boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.link.span_lengths)])

    @property
    def z_grid(self) -> np.ndarray:
        offsets = self.link.accumulated
        return np.concatenate([sp.z + off for sp, off in zip(self.spans, offsets)])

    @property
    def rho(self) -> np.ndarray:
        return np.vstack([sp.rho for sp in self.spans])

    def launch_powers(self, span_index: int) -> np.ndarray:
        return self.plan.powers * self.spans[span_index].rho[0]

    def log_rho_at_frequency(self, span_index: int, f) -> np.ndarray:
        """``ln rho`` on the span grid at arbitrary frequencies, shape (nz, len(f)).

        Interpolation is linear in frequency on ``ln rho`` between channel
        centres, extended linearly past the outer channels. This is exact for
        the triangular gain model where ``ln rho`` is affine in frequency.
        """
        lr = self.spans[span_index].log_rho
        fc = self.plan.frequencies
        f = np.asarray(f, dtype=float)
        if fc.size == 1:
            return np.repeat(lr[:, :1], f.size, axis=1)
        idx = np.clip(np.searchsorted(fc, f) - 1, 0, fc.size - 2)
        w = (f - fc[idx]) / (fc[idx + 1] - fc[idx])
        return lr[:, idx] * (1.0 - w) + lr[:, idx + 1] * w

    def rho_at(self, span_index: int, z: float) -> np.ndarray:
        """Per-channel ``rho`` at local distance ``z`` (log-linear in z)."""
        sp = self.spans[span_index]
        if sp.z.size == 1 or sp.length == 0:
            return sp.rho[0].copy()
        lr = sp.log_rho
        return np.exp(np.array([np.interp(z, sp.z, lr[:, j]) for j in range(lr.shape[1])]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["z_m"] + [f"rho_{f / 1e12:+.6f}THz" for f in self.plan.frequencies])
        for z, row in zip(self.z_grid, self.rho):
            writer.writerow([f"{z:.6f}"] + [f"{v:.12e}" for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True)
class EffectiveAttenuation:
    alpha_eff: np.ndarray
    l_eff: np.ndarray
    length: float


def _span_grid(length: float, z_step: float) -> np.ndarray:
    n = max(1, int(math.ceil(length / z_step - 1e-9)))
    return np.linspace(0.0, length, n + 1)


def _check_bandwidth(plan: ChannelPlan, what: str) -> None:
    if plan.b_tot > TRIANGULAR_BANDWIDTH_LIMIT:
        warnings.warn(
            f"{what}: occupied bandwidth {plan.b_tot / 1e12:.2f} THz exceeds the 15 THz range of the "
            "linear Raman gain approximation", RuntimeWarning, stacklevel=3)


def _coupling_matrix(plan: ChannelPlan, cr: float, ref_frequency: float, photon_ratio: bool) -> np.ndarray:
    """``c[i, j]`` such that ``d ln P_i/dz = -alpha + sum_j c[i, j] P_j``."""
    f = plan.frequencies
    df = f[None, :] - f[:, None]
    c = cr * df
    if photon_ratio:
        fa = f + ref_frequency
        # channel i pumps lower-frequency j: it loses f_i/f_j times the power j gains
        c = np.where(df < 0, c * fa[:, None] / fa[None, :], c)
    return c


def _rk4_span(u0, p_tx, alpha, coupling, z, substeps):
    """Integrate ``du/dz = -alpha + C @ (p_tx * exp(u))`` on grid ``z``."""
    out = np.empty((z.size, u0.size))
    out[0] = u0
    u = u0.copy()

    def rhs(v):
        return -alpha + coupling @ (p_tx * np.exp(v))

    for m in range(z.size - 1):
        h = (z[m + 1] - z[m]) / substeps
        for _ in range(substeps):
            k1 = rhs(u)
            k2 = rhs(u + 0.5 * h * k1)
            k3 = rhs(u + 0.5 * h * k2)
            k4 = rhs(u + h * k3)
            u = u + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise RamanSolverError(f"non-finite power at z={z[m + 1]:.1f} m")
        out[m + 1] = u
    return out


def _start_log_ratio(link: LinkConfig, plan: ChannelPlan, k: int, previous_end: Optional[np.ndarray],
                     previous_alpha_l: float) -> np.ndarray:
    span = link.spans[k]
    if span.launch_powers is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(plan.powers > 0, span.launch_powers / plan.powers, 1.0)
        if np.any(r <= 0):
            raise RamanSolverError("explicit launch powers must be > 0 where the transmitter launches power")
        return np.log(r)
    if k == 0 or link.gain_policy == "ideal-equalization":
        return np.zeros(plan.n_ch)
    # fixed gain: flat amplifier gain that only undoes the fibre loss
    return previous_end + previous_alpha_l


def solve_raman_ode(link: LinkConfig, plan: ChannelPlan, opts: ModelOptions = ModelOptions()) -> PowerProfile:
    """RK4 solution of the CW Raman equations with the linear (triangular) gain slope.

    The number of RK4 substeps per output interval is doubled until the
    profile changes by less than ``opts.ode_rtol`` (relative).
    """
    if plan.n_ch > 1 and plan.frequencies[-1] - plan.frequencies[0] > TRIANGULAR_BANDWIDTH_LIMIT:
        warnings.warn("channel separation exceeds 15 THz; the linear Raman gain slope is extrapolated",
                      RuntimeWarning, stacklevel=2)
    spans = []
    prev_end, prev_al = None, 0.0
    for k, span in enumerate(link.spans):
        fib = span.fiber
        z = _span_grid(span.length, opts.z_step)
        u0 = _start_log_ratio(link, plan, k, prev_end, prev_al)
        coupling = _coupling_matrix(plan, fib.cr, fib.ref_frequency, opts.photon_ratio)
        substeps = 1
        u = _rk4_span(u0, plan.powers, fib.alpha, coupling, z, substeps)
        for _ in range(14):
            substeps *= 2
            u_fine = _rk4_span(u0, plan.powers, fib.alpha, coupling, z, substeps)
            change = np.max(np.abs(np.expm1(u_fine - u)))
            u = u_fine
            if change < opts.ode_rtol:
                break
        else:
            raise RamanSolverError(f"span {k}: RK4 step refinement did not reach rtol={opts.ode_rtol}")
        log.debug("span %d solved with %d substeps per %.0f m", k, substeps, opts.z_step)
        spans.append(SpanProfile(z, np.exp(u)))
        prev_end, prev_al = u[-1], fib.alpha * span.length
    return PowerProfile(tuple(spans), plan, link, method="ode")


def _sinhc(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x * x / 6.0, np.sinh(xs) / xs)


def triangular_log_kernel(z, f, launch_powers, plan: ChannelPlan, alpha: float, cr: float):
    """``ln`` of the closed-form triangular-gain profile of one span.

    Returns ``ln[e^{-alpha z} P e^{-P cr Leff(z) f} / int G(nu) e^{-P cr Leff(z) nu} dnu]``
    with shape (len(z), len(f)); ``G`` is the rectangular PSD built from
    ``launch_powers`` and ``P`` their sum.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    f = np.atleast_1d(np.asarray(f, dtype=float))
    p_hat = float(np.sum(launch_powers))
    leff = -np.expm1(-alpha * z) / alpha if alpha > 0 else z
    a = p_hat * cr * leff
    if p_hat == 0 or cr == 0:
        return np.repeat((-alpha * z)[:, None], f.size, axis=1)
    # exact integral of the exponential over rectangular bands
    terms = launch_powers[None, :] * _sinhc(a[:, None] * plan.bandwidths[None, :] / 2)
    expo = -a[:, None] * plan.frequencies[None, :]
    shift = expo.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(terms * np.exp(expo - shift), axis=1)) + shift[:, 0]
    return (-alpha * z + math.log(p_hat) - log_z)[:, None] - a[:, None] * f[None, :]


def span_launch_powers(link: LinkConfig, plan: ChannelPlan) -> list:
    """Per-span launch powers under the link's gain policy (triangular-gain closed form)."""
    out = []
    prev = None
    for k, span in enumerate(link.spans):
        if span.launch_powers is not None:
            launch = np.array(span.launch_powers)
        elif k == 0 or link.gain_policy == "ideal-equalization":
            launch = np.array(plan.powers)
        else:
            pspan = link.spans[k - 1]
            end = triangular_log_kernel([pspan.length], plan.frequencies, prev, plan,
                                        pspan.fiber.alpha, pspan.fiber.cr)[0]
            launch = prev * np.exp(end + pspan.fiber.alpha * pspan.length)
        out.append(launch)
        prev = launch
    return out


def analytic_triangular_profile(link: LinkConfig, plan: ChannelPlan,
                                opts: ModelOptions = ModelOptions()) -> PowerProfile:
    """Closed-form profile of the linear-gain Raman model, same grid as the ODE route."""
    _check_bandwidth(plan, "analytic_triangular_profile")
    launches = span_launch_powers(link, plan)
    spans = []
    for span, launch in zip(link.spans, launches):
        z = _span_grid(span.length, opts.z_step)
        lk = triangular_log_kernel(z, plan.frequencies, launch, plan, span.fiber.alpha, span.fiber.cr)
        with np.errstate(divide="ignore", invalid="ignore"):
            start = np.where(plan.powers > 0, launch / plan.powers, 1.0)
        spans.append(SpanProfile(z, start[None, :] * np.exp(lk)))
    return PowerProfile(tuple(spans), plan, link, method="analytic")


def exponential_profile(link: LinkConfig, plan: ChannelPlan, alphas) -> PowerProfile:
    """Loss-only profile ``exp(-alpha z)``; ``alphas`` is one value per span
    (or per span and channel), every span restarting at ``rho = 1``."""
    spans = []
    for k, span in enumerate(link.spans):
        a = np.broadcast_to(np.asarray(alphas[k], dtype=float), (plan.n_ch,))
        z = np.array([0.0, span.length])
        spans.append(SpanProfile(z, np.exp(-np.outer(z, a))))
    return PowerProfile(tuple(spans), plan, link, method="exponential")


def _loglinear_integral(z, y):
    """Integral of samples ``y > 0`` interpolated log-linearly between nodes.

    Exact for exponentials, so a decaying span needs no fine grid.
    """
    dz = np.diff(z)[:, None]
    y0, y1 = y[:-1], y[1:]
    d = np.log(y1 / y0)
    small = np.abs(d) < 1e-8
    ds = np.where(small, 1.0, d)
    seg = np.where(small, y0 * (1.0 + d / 2.0), (y1 - y0) / ds)
    return np.sum(seg * dz, axis=0)


def fit_effective_attenuation(profile: PowerProfile, span_index: int = 0) -> EffectiveAttenuation:
    """Per-channel effective length and the attenuation whose exponential reproduces it."""
    sp = profile.spans[span_index]
    length = sp.length
    if length <= 0:
        raise ValueError("span has zero length")
    rho = sp.rho / sp.rho[0]
    l_eff = _loglinear_integral(sp.z, rho)
    alpha_eff = np.empty_like(l_eff)
    for i, le in enumerate(l_eff):
        if le >= length * (1.0 - 1e-12):
            raise NoBracketError(
                f"channel {i}: effective length {le:.1f} m >= span length {length:.1f} m; "
                "profile is not attenuating (lumped amplification assumed)")

        def resid(a, le=le):
            return -math.expm1(-a * length) / a - le

        lo = 1e-9 / length
        hi = 2.0 / le
        alpha_eff[i] = brentq(resid, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return EffectiveAttenuation(alpha_eff, l_eff, length)


def isrs_power_transfer_db(profile: PowerProfile) -> float:
    """Summed |dB| ISRS gain/loss of the outermost channels at the end of the first span,
    relative to loss-only propagation."""
    if profile.plan.n_ch < 2:
        raise ValueError("power transfer needs at least two channels")
    sp = profile.spans[0]
    alpha = profile.link.spans[0].fiber.alpha
    rel = sp.rho[-1] / sp.rho[0]
    loss_only = math.exp(-alpha * sp.length)
    i_lo = int(np.argmin(profile.plan.frequencies))
    i_hi = int(np.argmax(profile.plan.frequencies))
    return float(abs(10 * np.log10(rel[i_lo] / loss_only)) + abs(10 * np.log10(rel[i_hi] / loss_only)))
