"""Split-step Fourier reference simulator.

Dual-polarisation Manakov propagation of Nyquist-shaped Gaussian-symbol WDM
channels. Raman scattering is not solved inside the simulator; each linear
step instead scales every channel band by the amplitude ratio of a supplied
power profile, so the simulation isolates the NLI model from the Raman solver.
Outside the channel bands only the fibre loss applies.

Field convention is ``E = A exp(j(omega t - beta z))``: a spectral line at
offset ``f`` follows ``exp(-j(beta2/2 w^2 + beta3/6 w^3) z)`` with ``w = 2 pi f``,
and the Kerr phase is ``-j (8/9) gamma (|Ax|^2 + |Ay|^2) h``. The 8/9 Manakov
factor makes the dual-polarisation GN prefactor 16/27 apply directly.

The NLI coefficient is read from the noiseless residual: after ideal
chromatic-dispersion compensation each channel is matched-filtered and sampled
at the symbol rate, a complex gain per polarisation is fitted against the
transmitted symbols and the residual power (referred to the transmitter by that
gain) is divided by ``P_i^3``.
"""

from __future__ import annotations

import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ChannelPlan, LinkConfig, ModelOptions, dispersion_to_betas
from .raman import PowerProfile, SpanProfile, exponential_profile, solve_raman_ode

log = logging.getLogger(__name__)

MANAKOV_FACTOR = 8.0 / 9.0
DUMP_MAGIC = b"ISNF"
DUMP_VERSION = 1
_DUMP_HEADER = struct.Struct("<4sIdQI")


class SsfmStepError(RuntimeError):
    """The step policy cannot keep the nonlinear phase per step below the abort threshold."""


@dataclass(frozen=True)
class SsfmConfig:
    """Simulation set-up.

    ``samples_per_symbol`` of ``None`` picks the smallest power of two for which
    the sample rate covers twice the occupied bandwidth, so third-order mixing
    products cannot alias back into the signal band. Steps follow
    ``h = nl_phase / ((8/9) gamma P(z))`` limited by ``fwm_phase / (4 pi^2 |beta2| B_tot^2)``
    and ``max_step``; ``step`` forces a fixed step instead.
    """

    plan: ChannelPlan
    link: LinkConfig
    symbols: int = 4096
    realizations: int = 2
    samples_per_symbol: Optional[int] = None
    seed: int = 0
    nl_phase: float = 1e-3
    fwm_phase: float = 0.2 * math.pi
    max_step: float = 1000.0
    step: Optional[float] = None
    nl_phase_abort: float = 0.05
    isrs: bool = True
    profile: Optional[PowerProfile] = None
    profile_z_step: float = 250.0
    max_samples: int = 1 << 23
    workers: int = 1
    dump_path: Optional[str] = None

    def __post_init__(self):
        if self.symbols < 2 or self.symbols & (self.symbols - 1):
            raise ValueError(f"symbols must be a power of two, got {self.symbols}")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if self.samples_per_symbol is not None and self.samples_per_symbol < 1:
            raise ValueError("samples_per_symbol must be >= 1")
        if not np.allclose(self.plan.bandwidths, self.plan.bandwidths[0], rtol=1e-12, atol=0):
            raise ValueError("the simulator needs one common symbol rate for all channels")
        if np.any(self.plan.powers <= 0):
            raise ValueError("every simulated channel needs a positive launch power")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be > 0")

    @property
    def baud(self) -> float:
        return float(self.plan.bandwidths[0])

    @property
    def sps(self) -> int:
        if self.samples_per_symbol is not None:
            return self.samples_per_symbol
        lo, hi = self.plan.lower_edges.min(), self.plan.upper_edges.max()
        # mixing products of [lo, hi] span [2lo - hi, 2hi - lo]; their alias must miss [lo, hi]
        need = max(2.0 * (hi - lo), 2.0 * max(abs(lo), abs(hi))) / self.baud
        return 1 << max(0, math.ceil(math.log2(need - 1e-9)))

    @property
    def n_samples(self) -> int:
        return self.symbols * self.sps

    @property
    def sample_rate(self) -> float:
        return self.sps * self.baud


@dataclass
class SsfmResult:
    plan: ChannelPlan
    eta: np.ndarray
    eta_realizations: np.ndarray
    stderr: np.ndarray
    steps: int
    meta: dict = field(default_factory=dict)

    @property
    def p_nli(self) -> np.ndarray:
        return self.eta * self.plan.powers**3

    @property
    def snr_db(self) -> np.ndarray:
        """NLI-limited SNR, ``P_i / P_NLI``."""
        return 10 * np.log10(1.0 / (self.eta * self.plan.powers**2))

    @property
    def eta_db(self) -> np.ndarray:
        return 10 * np.log10(self.eta)


class _Grid:
    def __init__(self, cfg: SsfmConfig):
        if cfg.n_samples > cfg.max_samples:
            raise MemoryError(f"{cfg.n_samples} samples per polarisation exceed max_samples={cfg.max_samples}")
        self.n = cfg.n_samples
        self.s = cfg.symbols
        self.fs = cfg.sample_rate
        self.df = self.fs / self.n
        self.f = np.fft.fftfreq(self.n, 1.0 / self.fs)
        pos = cfg.plan.frequencies / self.df
        if np.any(np.abs(pos - np.round(pos)) > 1e-6):
            raise ValueError("channel centres must fall on the frequency grid (baud / symbols spacing)")
        if cfg.plan.upper_edges.max() > self.fs / 2 or cfg.plan.lower_edges.min() < -self.fs / 2:
            raise ValueError("simulation bandwidth does not cover the channel plan")
        centres = np.round(pos).astype(int)
        m = np.fft.fftfreq(self.s, 1.0 / self.s).astype(int)  # symbol-spectrum order
        self.bins = (centres[:, None] + m[None, :]) % self.n  # (n_ch, S)
        self.band = np.full(self.n, -1)
        for c, b in enumerate(self.bins):
            self.band[b] = c
        self.in_band = self.band >= 0


def _launch_field(cfg: SsfmConfig, grid: _Grid, rng: np.random.Generator):
    """Spectrum (2, N) of the transmitted field and the symbols (n_ch, 2, S)."""
    p = cfg.plan.powers
    sym = (rng.standard_normal((p.size, 2, grid.s)) + 1j * rng.standard_normal((p.size, 2, grid.s)))
    sym *= np.sqrt(p / 4.0)[:, None, None]  # P/2 per polarisation
    spec = np.zeros((2, grid.n), dtype=complex)
    scale = grid.n / grid.s
    for c in range(p.size):
        spec[:, grid.bins[c]] = np.fft.fft(sym[c], axis=-1) * scale
    return spec, sym


def _profile_for(cfg: SsfmConfig) -> PowerProfile:
    if cfg.profile is not None:
        return cfg.profile
    link, plan = cfg.link, cfg.plan
    if cfg.isrs and any(s.fiber.cr > 0 for s in link.spans) and plan.n_ch > 1:
        return solve_raman_ode(link, plan, ModelOptions(z_step=cfg.profile_z_step))
    return exponential_profile(link, plan, [s.fiber.alpha for s in link.spans])


class _SpanLog:
    """Per-span log-profile interpolation in distance."""

    def __init__(self, sp: SpanProfile):
        self.z = sp.z
        self.lr = sp.log_rho

    def log_rho(self, z: float) -> np.ndarray:
        if self.z.size == 1:
            return self.lr[0].copy()
        return np.array([np.interp(z, self.z, self.lr[:, j]) for j in range(self.lr.shape[1])])


def _step_size(cfg, gamma, power, beta2_max, b_tot, remaining):
    nl = MANAKOV_FACTOR * gamma * power
    if cfg.step is not None:
        h = cfg.step
    else:
        h = cfg.max_step
        if nl > 0:
            h = min(h, cfg.nl_phase / nl)
        if beta2_max > 0:
            h = min(h, cfg.fwm_phase / (4 * math.pi**2 * beta2_max * b_tot**2))
    h = min(h, remaining)
    if nl * h > cfg.nl_phase_abort:
        raise SsfmStepError(f"nonlinear phase per step {nl * h:.3g} rad exceeds {cfg.nl_phase_abort} rad "
                            f"(step {h:.3g} m at {power:.3g} W)")
    return h


def _propagate(cfg: SsfmConfig, grid: _Grid, profile: PowerProfile, spec: np.ndarray, record=None):
    """Propagate the spectrum through the link; returns (spectrum, accumulated dispersion phase, steps)."""
    omega = 2 * math.pi * grid.f
    total_phase = np.zeros(grid.n)
    n_steps = 0
    b_tot = cfg.plan.b_tot
    for k, span in enumerate(cfg.link.spans):
        fib = span.fiber
        bet = dispersion_to_betas(fib)
        disp_rate = bet.beta2 / 2 * omega**2 + bet.beta3 / 6 * omega**3
        beta2_max = max(abs(bet.beta2 + 2 * math.pi * bet.beta3 * f) for f in (grid.f.min(), grid.f.max()))
        slog = _SpanLog(profile.spans[k])
        # amplitude already applied to each bin within this span (log)
        applied = np.zeros(grid.n)
        z = 0.0
        lr_prev = slog.log_rho(0.0)
        if record is not None:
            record(k, 0.0, spec)
        while z < span.length * (1 - 1e-12):
            power = float(np.sum(np.abs(spec) ** 2)) / grid.n**2
            h = _step_size(cfg, fib.gamma, power, beta2_max, b_tot, span.length - z)
            zm, zb = z + h / 2, z + h
            for za, zc in ((z, zm), (zm, zb)):
                lr_c = slog.log_rho(zc)
                dlog = np.where(grid.in_band, 0.5 * (lr_c - lr_prev)[grid.band], -0.5 * fib.alpha * (zc - za))
                applied += dlog
                spec *= np.exp(dlog - 1j * disp_rate * (zc - za))[None, :]
                lr_prev = lr_c
                if za == z and fib.gamma > 0:
                    field_t = np.fft.ifft(spec, axis=-1)
                    inten = np.sum(np.abs(field_t) ** 2, axis=0)
                    field_t *= np.exp(-1j * MANAKOV_FACTOR * fib.gamma * inten * h)[None, :]
                    spec = np.fft.fft(field_t, axis=-1)
            total_phase += disp_rate * h
            z = zb
            n_steps += 1
            if record is not None:
                record(k, z, spec)
        # amplifier: undo what this span applied, then set the next span's launch level
        if k + 1 < cfg.link.n_spans:
            nxt = profile.spans[k + 1].log_rho[0]
        elif cfg.link.gain_policy == "ideal-equalization":
            nxt = np.zeros(cfg.plan.n_ch)
        else:
            nxt = profile.spans[k].log_rho[-1] + fib.alpha * span.length
        start = profile.spans[k].log_rho[0]
        target = np.where(grid.in_band, 0.5 * (nxt - start)[grid.band], 0.0)
        spec *= np.exp(target - applied)[None, :]
    return spec, total_phase, n_steps


def _receive(grid: _Grid, spec: np.ndarray, total_phase: np.ndarray, sym: np.ndarray, powers: np.ndarray):
    """Per-channel NLI coefficient of one realisation."""
    spec = spec * np.exp(1j * total_phase)[None, :]
    eta = np.empty(powers.size)
    scale = grid.s / grid.n
    for c in range(powers.size):
        rx = np.fft.ifft(spec[:, grid.bins[c]] * scale, axis=-1)
        tx = sym[c]
        h = np.sum(np.conj(tx) * rx, axis=-1) / np.sum(np.abs(tx) ** 2, axis=-1)
        resid = rx - h[:, None] * tx
        # refer the residual to the transmitter through the fitted gain
        p_nli = float(np.sum(np.mean(np.abs(resid) ** 2, axis=-1) / np.abs(h) ** 2))
        eta[c] = p_nli / powers[c] ** 3
    return eta, spec


def write_field_dump(path, field_t: np.ndarray, sample_rate: float) -> None:
    """Binary dump: header ``<4sIdQI`` (magic, version, sample rate, samples, polarisations)
    followed by little-endian complex64 samples, polarisations interleaved per sample."""
    field_t = np.atleast_2d(field_t)
    npol, n = field_t.shape
    with open(path, "wb") as fh:
        fh.write(_DUMP_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, float(sample_rate), n, npol))
        fh.write(np.ascontiguousarray(field_t.T).astype("<c8").tobytes())


def read_field_dump(path):
    """Inverse of :func:`write_field_dump`; returns ``(field (npol, n), sample_rate)``."""
    with open(path, "rb") as fh:
        magic, version, fs, n, npol = _DUMP_HEADER.unpack(fh.read(_DUMP_HEADER.size))
        if magic != DUMP_MAGIC or version != DUMP_VERSION:
            raise ValueError(f"{path}: not a field dump (magic={magic!r}, version={version})")
        data = np.frombuffer(fh.read(), dtype="<c8")
    if data.size != n * npol:
        raise ValueError(f"{path}: expected {n * npol} samples, found {data.size}")
    return data.reshape(n, npol).T.astype(complex), fs


def _one_realization(cfg, grid, profile, seq):
    rng = np.random.default_rng(seq)
    spec, sym = _launch_field(cfg, grid, rng)
    spec, phase, steps = _propagate(cfg, grid, profile, spec)
    eta, rx_spec = _receive(grid, spec, phase, sym, cfg.plan.powers)
    return eta, steps, rx_spec


def simulate(cfg: SsfmConfig) -> SsfmResult:
    """Run all realisations and average the per-channel NLI coefficient."""
    grid = _Grid(cfg)
    profile = _profile_for(cfg)
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.realizations)
    if cfg.workers > 1 and cfg.realizations > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(lambda s: _one_realization(cfg, grid, profile, s), seqs))
    else:
        runs = [_one_realization(cfg, grid, profile, s) for s in seqs]
    etas = np.array([r[0] for r in runs])
    if cfg.dump_path is not None:
        write_field_dump(cfg.dump_path, np.fft.ifft(runs[0][2], axis=-1), grid.fs)
    mean = etas.mean(axis=0)
    stderr = etas.std(axis=0, ddof=1) / math.sqrt(cfg.realizations) if cfg.realizations > 1 else np.zeros_like(mean)
    meta = dict(samples=grid.n, sample_rate_hz=grid.fs, samples_per_symbol=cfg.sps, symbols=cfg.symbols,
                realizations=cfg.realizations, seed=cfg.seed, profile=profile.method)
    return SsfmResult(cfg.plan, mean, etas, stderr, runs[0][1], meta)


def measure_power_profile(cfg: SsfmConfig) -> PowerProfile:
    """Per-channel power versus distance read from the simulated field (first realisation).

    Powers are normalised by the realised launch power of each channel, so the
    result is directly comparable with the Raman solver output.
    """
    grid = _Grid(cfg)
    profile = _profile_for(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    spec, _ = _launch_field(cfg, grid, rng)
    p0 = np.array([np.sum(np.abs(spec[:, b]) ** 2) for b in grid.bins])
    samples = [([], []) for _ in cfg.link.spans]

    def record(k, z, s):
        p = np.array([np.sum(np.abs(s[:, b]) ** 2) for b in grid.bins])
        samples[k][0].append(z)
        samples[k][1].append(p / p0)

    _propagate(cfg, grid, profile, spec, record)
    spans = tuple(SpanProfile(np.array(z), np.array(r)) for z, r in samples)
    return PowerProfile(spans, cfg.plan, cfg.link, method="ssfm")
