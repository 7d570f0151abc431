"""Domain types shared by every estimator: fibre, WDM plan, link and options."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from . import units
from .units import SPEED_OF_LIGHT

GAIN_POLICIES = ("ideal-equalization", "fixed-gain")


def _frozen_array(x) -> np.ndarray:
    a = np.array(x, dtype=float, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FiberParams:
    """Per-span fibre constants in SI units.

    ``alpha`` is the power attenuation in Np/m, ``disp_d`` in s/m^2, ``disp_s``
    in s/m^3, ``gamma`` in 1/(W m) and ``cr`` (Raman gain slope) in 1/(W m Hz).
    """

    alpha: float
    gamma: float
    disp_d: float
    disp_s: float
    cr: float
    ref_wavelength: float
    alpha_bar: Optional[float] = None

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.cr < 0:
            raise ValueError(f"cr must be >= 0, got {self.cr}")
        if not self.ref_wavelength > 0:
            raise ValueError("ref_wavelength must be > 0")
        if self.alpha_bar is None:
            object.__setattr__(self, "alpha_bar", self.alpha)

    @classmethod
    def from_engineering(
        cls,
        alpha_db_per_km: float = 0.2,
        gamma_per_w_per_km: float = 1.2,
        dispersion_ps_per_nm_per_km: float = 18.0,
        slope_ps_per_nm2_per_km: float = 0.067,
        cr_per_w_per_km_per_thz: float = 0.0236,
        ref_wavelength_nm: float = 1570.0,
        alpha_bar_db_per_km: Optional[float] = None,
    ) -> "FiberParams":
        return cls(
            alpha=units.db_per_km_to_np_per_m(alpha_db_per_km),
            gamma=units.per_w_km_to_per_w_m(gamma_per_w_per_km),
            disp_d=units.ps_nm_km_to_s_m2(dispersion_ps_per_nm_per_km),
            disp_s=units.ps_nm2_km_to_s_m3(slope_ps_per_nm2_per_km),
            cr=units.cr_per_w_km_thz_to_si(cr_per_w_per_km_per_thz),
            ref_wavelength=ref_wavelength_nm * 1e-9,
            alpha_bar=None if alpha_bar_db_per_km is None else units.db_per_km_to_np_per_m(alpha_bar_db_per_km),
        )

    @property
    def ref_frequency(self) -> float:
        return SPEED_OF_LIGHT / self.ref_wavelength

    def with_(self, **changes) -> "FiberParams":
        if "alpha" in changes and "alpha_bar" not in changes and self.alpha_bar == self.alpha:
            changes["alpha_bar"] = None
        return replace(self, **changes)


@dataclass(frozen=True)
class DispersionCoeffs:
    """beta2 (s^2/m) and beta3 (s^3/m) at the reference frequency."""

    beta2: float
    beta3: float

    def beta2_at(self, f):
        """GVD at frequency offset ``f`` (Hz) from the reference."""
        return self.beta2 + 2.0 * math.pi * self.beta3 * np.asarray(f, dtype=float)[()]


def dispersion_to_betas(fp: FiberParams) -> DispersionCoeffs:
    lam = fp.ref_wavelength
    k = lam**2 / (2.0 * math.pi * SPEED_OF_LIGHT)
    beta2 = -fp.disp_d * k
    beta3 = (fp.disp_s + 2.0 * fp.disp_d / lam) * k**2
    return DispersionCoeffs(beta2=beta2, beta3=beta3)


def betas_to_dispersion(betas: DispersionCoeffs, ref_wavelength: float) -> tuple[float, float]:
    """Inverse of :func:`dispersion_to_betas`, returns ``(D, S)`` in SI."""
    lam = ref_wavelength
    k = lam**2 / (2.0 * math.pi * SPEED_OF_LIGHT)
    d = -betas.beta2 / k
    s = betas.beta3 / k**2 - 2.0 * d / lam
    return d, s


@dataclass(frozen=True)
class ChannelPlan:
    """WDM grid. Frequencies are offsets (Hz) from the reference carrier."""

    frequencies: np.ndarray
    bandwidths: np.ndarray
    powers: np.ndarray

    def __post_init__(self):
        f = _frozen_array(self.frequencies)
        b = _frozen_array(self.bandwidths)
        p = _frozen_array(self.powers)
        if not (f.size == b.size == p.size) or f.size == 0:
            raise ValueError("frequencies, bandwidths and powers must be non-empty and of equal length")
        if np.any(b <= 0):
            raise ValueError("bandwidths must be > 0")
        if np.any(p < 0):
            raise ValueError("powers must be >= 0")
        if np.any(np.diff(f) <= 0):
            raise ValueError("channels must be sorted by strictly increasing frequency")
        gap = (f[1:] - b[1:] / 2) - (f[:-1] + b[:-1] / 2)
        if np.any(gap < -1e-9 * np.maximum(b[1:], b[:-1])):
            raise ValueError("channel bands overlap")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "bandwidths", b)
        object.__setattr__(self, "powers", p)

    @property
    def n_ch(self) -> int:
        return self.frequencies.size

    @property
    def p_tot(self) -> float:
        return float(self.powers.sum())

    @property
    def lower_edges(self) -> np.ndarray:
        return self.frequencies - self.bandwidths / 2

    @property
    def upper_edges(self) -> np.ndarray:
        return self.frequencies + self.bandwidths / 2

    @property
    def b_tot(self) -> float:
        return float(self.upper_edges.max() - self.lower_edges.min())

    @property
    def psd_levels(self) -> np.ndarray:
        return self.powers / self.bandwidths

    def band_index(self, f) -> np.ndarray:
        """Index of the band containing each ``f``, -1 outside every band."""
        f = np.asarray(f, dtype=float)
        idx = np.searchsorted(self.lower_edges, f, side="right") - 1
        ok = idx >= 0
        safe = np.where(ok, idx, 0)
        ok &= f < self.upper_edges[safe]
        return np.where(ok, idx, -1)

    def psd(self, f, powers: Optional[np.ndarray] = None) -> np.ndarray:
        """Piecewise-constant PSD (W/Hz); ``powers`` overrides the launch powers."""
        levels = self.psd_levels if powers is None else np.asarray(powers) / self.bandwidths
        idx = self.band_index(f)
        return np.where(idx >= 0, levels[np.maximum(idx, 0)], 0.0)

    def with_powers(self, powers) -> "ChannelPlan":
        powers = np.broadcast_to(np.asarray(powers, dtype=float), self.frequencies.shape)
        return ChannelPlan(self.frequencies, self.bandwidths, powers)

    def center_index(self) -> int:
        return int(np.argmin(np.abs(self.frequencies - 0.5 * (self.upper_edges.max() + self.lower_edges.min()))))


def build_nyquist_plan(n_ch: int, baud: float, power_per_ch: float, center: float = 0.0) -> ChannelPlan:
    """Nyquist-spaced plan: ``n_ch`` channels of bandwidth ``baud`` spaced by ``baud``."""
    if n_ch < 1:
        raise ValueError("n_ch must be >= 1")
    if not baud > 0:
        raise ValueError("baud must be > 0")
    f = center + (np.arange(n_ch) - (n_ch - 1) / 2.0) * baud
    return ChannelPlan(f, np.full(n_ch, float(baud)), np.full(n_ch, float(power_per_ch)))


@dataclass(frozen=True)
class Span:
    length: float
    fiber: FiberParams
    # Explicit per-channel launch powers (W); None lets the link's gain policy decide.
    launch_powers: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.length >= 0:
            raise ValueError("span length must be >= 0")
        if self.launch_powers is not None:
            object.__setattr__(self, "launch_powers", _frozen_array(self.launch_powers))


@dataclass(frozen=True)
class LinkConfig:
    spans: tuple
    gain_policy: str = "ideal-equalization"

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(self.spans))
        if not self.spans:
            raise ValueError("a link needs at least one span")
        if self.gain_policy not in GAIN_POLICIES:
            raise ValueError(f"unknown gain policy {self.gain_policy!r}, expected one of {GAIN_POLICIES}")

    @classmethod
    def uniform(cls, fiber: FiberParams, n_spans: int, span_length: float,
                gain_policy: str = "ideal-equalization") -> "LinkConfig":
        return cls(tuple(Span(span_length, fiber) for _ in range(n_spans)), gain_policy)

    @property
    def n_spans(self) -> int:
        return len(self.spans)

    @property
    def span_lengths(self) -> np.ndarray:
        return np.array([s.length for s in self.spans])

    @property
    def accumulated(self) -> np.ndarray:
        """Distance at which each span starts (first entry 0)."""
        return np.concatenate([[0.0], np.cumsum(self.span_lengths)[:-1]])

    @property
    def total_length(self) -> float:
        return float(self.span_lengths.sum())

    @property
    def fiber(self) -> FiberParams:
        return self.spans[0].fiber

    def is_uniform(self) -> bool:
        first = self.spans[0]
        return all(s.length == first.length and s.fiber == first.fiber and s.launch_powers is None
                   for s in self.spans)

    def with_fiber(self, **changes) -> "LinkConfig":
        spans = tuple(replace(s, fiber=s.fiber.with_(**changes)) for s in self.spans)
        return replace(self, spans=spans)


@dataclass(frozen=True)
class ModelOptions:
    """Numerical and modelling knobs.

    ``epsilon`` is the span-coherence exponent of the closed forms, a number or
    ``"auto"`` for the asymptotic GN coherence factor of the link. ``rtol`` is
    the relative target of the double integral, ``z_step`` the spacing (m) of
    sampled power profiles, ``phase_cutoff`` the phase mismatch (in units of
    the fibre attenuation) beyond which the distance integral is replaced by its
    oscillation-averaged asymptote.
    """

    epsilon: Union[float, str] = 0.0
    rtol: float = 1e-3
    max_level: int = 3
    z_step: float = 1000.0
    ode_rtol: float = 1e-6
    phase_cutoff: float = 40.0
    photon_ratio: bool = False
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.epsilon, str):
            if self.epsilon != "auto":
                raise ValueError(f"epsilon must be a number >= 0 or 'auto', got {self.epsilon!r}")
        elif not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if not self.z_step > 0:
            raise ValueError("z_step must be > 0")
        if not self.rtol > 0:
            raise ValueError("rtol must be > 0")
