"""Cross-model comparison: per-channel NLI coefficients, deviations from a
reference model and launch-power sweeps against the ISRS power transfer.

Outputs are plain data (CSV with ``.`` decimals and a JSON summary); the same
inputs always produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .closedform import effective_attenuation_cf_all, isrs_gn_cf_all
from .config import MODELS, Scenario, load_schema
from .integral import (
    conventional_gn,
    eta_effective_attenuation_integral,
    eta_isrs_gn_analytic,
    eta_isrs_gn_general,
    evaluate_channels,
)
from .raman import fit_effective_attenuation, isrs_power_transfer_db, solve_raman_ode

log = logging.getLogger(__name__)


class LongRunningError(RuntimeError):
    """A scenario marked long-running was started without explicit permission."""


@dataclass
class ModelRun:
    """Per-channel ``eta`` (1/W^2) of one model, or the reason it failed."""

    model: str
    eta: Optional[np.ndarray] = None
    error: Optional[np.ndarray] = None
    failure: Optional[str] = None
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.failure is None


def _db(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return 10 * np.log10(x)


def _num(x):
    """JSON-safe float: non-finite values become null."""
    x = float(x)
    return x if math.isfinite(x) else None


class _Context:
    """Shared, lazily computed inputs of the model evaluations of one scenario."""

    def __init__(self, sc: Scenario, seed: Optional[int] = None, allow_long_running: bool = False):
        self.sc = sc
        self.seed = seed
        self.allow_long_running = allow_long_running
        self._profile = None
        self._effs = None

    @property
    def profile(self):
        if self._profile is None:
            self._profile = solve_raman_ode(self.sc.link, self.sc.plan, self.sc.options)
        return self._profile

    @property
    def effs(self):
        if self._effs is None:
            self._effs = [fit_effective_attenuation(self.profile, k) for k in range(self.sc.link.n_spans)]
        return self._effs

    def power_transfer_db(self) -> Optional[float]:
        if self.sc.plan.n_ch < 2:
            return None
        return isrs_power_transfer_db(self.profile)


def run_model(ctx: _Context, model: str, channels: Sequence[int]) -> ModelRun:
    sc = ctx.sc
    plan, link, opts = sc.plan, sc.link, sc.options
    ch = list(channels)
    try:
        if model in ("isrs-gn-cf", "eff-attn-cf"):
            if model == "isrs-gn-cf":
                eta = isrs_gn_cf_all(plan, link, opts)
            else:
                eta = effective_attenuation_cf_all(plan, link, ctx.effs[0], opts)
            return ModelRun(model, eta[ch], np.zeros(len(ch)))
        if model == "ssfm":
            return _run_ssfm(ctx, ch)
        if model == "isrs-gn-general":
            fn = lambda i: eta_isrs_gn_general(ctx.profile, plan, i, opts)
        elif model == "isrs-gn-analytic":
            fn = lambda i: eta_isrs_gn_analytic(link, plan, i, opts)
        elif model == "eff-attn-integral":
            fn = lambda i: eta_effective_attenuation_integral(plan, link, ctx.effs, i, opts)
        elif model == "gn":
            fn = lambda i: conventional_gn(plan, link, i, opts)
        else:
            raise ValueError(f"unknown model {model!r}, expected one of {MODELS}")
        entries = evaluate_channels(fn, ch, opts.workers)
        return ModelRun(model, np.array([e.eta for e in entries]), np.array([e.error for e in entries]),
                        meta=dict(converged=all(e.converged for e in entries)))
    except LongRunningError:
        raise
    except Exception as exc:  # reported, not hidden: the report keeps a failure record
        log.error("model %s failed: %s", model, exc)
        return ModelRun(model, failure=f"{type(exc).__name__}: {exc}")


def _run_ssfm(ctx: _Context, ch: list) -> ModelRun:
    from .ssfm import SsfmConfig, simulate

    sc = ctx.sc
    if sc.long_running and not ctx.allow_long_running:
        raise LongRunningError(f"scenario {sc.name!r} is marked long-running; pass --allow-long-running")
    kwargs = dict(sc.ssfm)
    if ctx.seed is not None:
        kwargs["seed"] = ctx.seed
    res = simulate(SsfmConfig(sc.plan, sc.link, **kwargs))
    return ModelRun("ssfm", res.eta[ch], res.stderr[ch], meta=dict(res.meta, steps=res.steps))


@dataclass
class DeviationReport:
    """Per-channel ``eta`` of every model and its deviation (dB) from the reference."""

    scenario: str
    reference_model: str
    channels: np.ndarray
    frequencies: np.ndarray
    runs: dict
    power_transfer_db: Optional[float] = None
    options: dict = field(default_factory=dict)

    @property
    def models(self) -> list:
        return list(self.runs)

    @property
    def failures(self) -> list:
        return [dict(model=m, error=r.failure) for m, r in self.runs.items() if not r.ok]

    def eta_db(self, model: str) -> np.ndarray:
        return _db(self.runs[model].eta)

    def deviation_db(self, model: str) -> Optional[np.ndarray]:
        ref = self.runs.get(self.reference_model)
        run = self.runs[model]
        if ref is None or not ref.ok or not run.ok:
            return None
        if model == self.reference_model:
            return np.zeros(len(self.channels))
        return self.eta_db(model) - self.eta_db(self.reference_model)

    def summary(self) -> dict:
        out = {}
        for m in self.runs:
            d = self.deviation_db(m)
            if d is None:
                continue
            a = np.abs(d)
            out[m] = dict(max_abs_db=_num(a.max()), mean_abs_db=_num(a.mean()))
        return out

    def eta_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        ok = [m for m, r in self.runs.items() if r.ok]
        w.writerow(["channel", "frequency_thz"] + [f"eta_db_{m}" for m in ok] + [f"eta_per_w2_{m}" for m in ok])
        for j, (c, f) in enumerate(zip(self.channels, self.frequencies)):
            row = [int(c), f"{f / 1e12:.6f}"]
            row += [f"{self.eta_db(m)[j]:.6f}" for m in ok]
            row += [f"{self.runs[m].eta[j]:.9e}" for m in ok]
            w.writerow(row)
        return buf.getvalue()

    def deviation_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "reference_model", "channel", "frequency_thz", "deviation_db"])
        for m in self.runs:
            d = self.deviation_db(m)
            if d is None:
                continue
            for c, f, v in zip(self.channels, self.frequencies, d):
                w.writerow([m, self.reference_model, int(c), f"{f / 1e12:.6f}", f"{v:.6f}"])
        return buf.getvalue()

    def to_json(self) -> dict:
        return dict(
            kind="compare",
            version=__version__,
            scenario=self.scenario,
            reference_model=self.reference_model,
            models=self.models,
            channels=[int(c) for c in self.channels],
            frequencies_thz=[_num(f / 1e12) for f in self.frequencies],
            power_transfer_db=None if self.power_transfer_db is None else _num(self.power_transfer_db),
            eta_db={m: [_num(v) for v in self.eta_db(m)] for m, r in self.runs.items() if r.ok},
            deviation_db={m: [_num(v) for v in d] for m in self.runs if (d := self.deviation_db(m)) is not None},
            summary=self.summary(),
            failures=self.failures,
            options=self.options,
        )


def _pick_reference(models: Sequence[str], preferred: str) -> str:
    """The preferred reference when it was run, else the first selected model."""
    return preferred if preferred in models else models[0]


def _options_dict(sc: Scenario) -> dict:
    o = sc.options
    return dict(epsilon=o.epsilon, rtol=o.rtol, max_level=o.max_level, z_step_m=o.z_step,
                ode_rtol=o.ode_rtol, phase_cutoff=o.phase_cutoff, photon_ratio=o.photon_ratio)


def compare(sc: Scenario, models: Optional[Sequence[str]] = None, channels: Optional[Sequence[int]] = None,
            reference: Optional[str] = None, seed: Optional[int] = None,
            allow_long_running: bool = False) -> DeviationReport:
    """Run the selected models on one scenario and tabulate deviations from the reference."""
    models = list(models or sc.models)
    if not models:
        raise ValueError("at least one model must be selected")
    ch = list(channels if channels is not None else (sc.channels or range(sc.plan.n_ch)))
    ref = _pick_reference(models, reference or sc.reference_model)
    ctx = _Context(sc, seed, allow_long_running)
    runs = {m: run_model(ctx, m, ch) for m in models}
    try:
        transfer = ctx.power_transfer_db()
    except Exception as exc:
        log.error("power transfer unavailable: %s", exc)
        transfer = None
    return DeviationReport(sc.name, ref, np.array(ch), sc.plan.frequencies[ch], runs, transfer, _options_dict(sc))


@dataclass
class SweepReport:
    """Deviation from the reference versus launch power and ISRS power transfer."""

    scenario: str
    reference_model: str
    points: list  # one DeviationReport per launch power
    powers_dbm: list

    @property
    def power_transfer_db(self) -> list:
        return [p.power_transfer_db for p in self.points]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["power_dbm_per_ch", "power_transfer_db", "model", "channel", "frequency_thz",
                    "eta_db", "deviation_db"])
        for p_dbm, rep in zip(self.powers_dbm, self.points):
            pt = "" if rep.power_transfer_db is None else f"{rep.power_transfer_db:.6f}"
            for m, run in rep.runs.items():
                if not run.ok:
                    continue
                d = rep.deviation_db(m)
                for j, (c, f) in enumerate(zip(rep.channels, rep.frequencies)):
                    dv = "" if d is None else f"{d[j]:.6f}"
                    w.writerow([f"{p_dbm:.3f}", pt, m, int(c), f"{f / 1e12:.6f}", f"{rep.eta_db(m)[j]:.6f}", dv])
        return buf.getvalue()

    def to_json(self) -> dict:
        failures = [dict(f, power_dbm_per_ch=p) for p, rep in zip(self.powers_dbm, self.points) for f in rep.failures]
        return dict(
            kind="sweep",
            version=__version__,
            scenario=self.scenario,
            reference_model=self.reference_model,
            powers_dbm_per_ch=[_num(p) for p in self.powers_dbm],
            power_transfer_db=[None if t is None else _num(t) for t in self.power_transfer_db],
            points=[rep.to_json() for rep in self.points],
            failures=failures,
        )


def default_probe_channels(n_ch: int) -> list:
    """Band edges and centre."""
    return sorted({0, (n_ch - 1) // 2, n_ch - 1})


def sweep_power_transfer(sc: Scenario, powers_dbm: Optional[Sequence[float]] = None,
                         models: Optional[Sequence[str]] = None, probe_channels: Optional[Sequence[int]] = None,
                         reference: Optional[str] = None, seed: Optional[int] = None,
                         allow_long_running: bool = False) -> SweepReport:
    """Evaluate the models at the probe channels for every launch power (flat spectrum)."""
    powers = list(powers_dbm if powers_dbm is not None else (sc.sweep_dbm or ()))
    if not powers:
        raise ValueError("the sweep needs at least one launch power")
    if not all(math.isfinite(p) for p in powers):
        raise ValueError("sweep powers must be finite")
    probes = list(probe_channels or sc.probe_channels or default_probe_channels(sc.plan.n_ch))
    models = list(models or sc.models)
    ref = _pick_reference(models, reference or sc.reference_model)
    points = [compare(sc.with_power_dbm(p), models, probes, ref, seed, allow_long_running) for p in powers]
    return SweepReport(sc.name, ref, points, powers)


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def validate_summary(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, load_schema("summary"), cls=jsonschema.Draft202012Validator)


def write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_compare(report: DeviationReport, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_json()
    validate_summary(doc)
    write_text(out / "eta.csv", report.eta_csv())
    write_text(out / "deviation.csv", report.deviation_csv())
    write_text(out / "summary.json", _dump_json(doc))
    return doc


def write_sweep(report: SweepReport, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_json()
    validate_summary(doc)
    write_text(out / "sweep.csv", report.to_csv())
    write_text(out / "summary.json", _dump_json(doc))
    return doc
