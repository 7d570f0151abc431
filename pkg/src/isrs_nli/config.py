"""JSON scenario files: schema validation and conversion to domain objects.

Every numeric key carries its unit in the name (``alpha_db_per_km``,
``span_length_km``, ...). Conversion to SI happens here and nowhere else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .core import ChannelPlan, FiberParams, LinkConfig, ModelOptions, Span, build_nyquist_plan
from .units import dbm_to_watt

MODELS = ("eff-attn-integral", "isrs-gn-general", "isrs-gn-analytic", "eff-attn-cf", "isrs-gn-cf", "ssfm", "gn")
DEFAULT_MODELS = ("eff-attn-integral", "isrs-gn-general", "isrs-gn-analytic", "eff-attn-cf", "isrs-gn-cf")
REFERENCE_MODEL = "isrs-gn-general"

_FIBER_KEYS = {
    "alpha_db_per_km": "alpha_db_per_km",
    "alpha_bar_db_per_km": "alpha_bar_db_per_km",
    "gamma_per_w_per_km": "gamma_per_w_per_km",
    "dispersion_ps_per_nm_per_km": "dispersion_ps_per_nm_per_km",
    "slope_ps_per_nm2_per_km": "slope_ps_per_nm2_per_km",
    "cr_per_w_per_km_per_thz": "cr_per_w_per_km_per_thz",
    "ref_wavelength_nm": "ref_wavelength_nm",
}

_OPTION_KEYS = {
    "epsilon": "epsilon",
    "rtol": "rtol",
    "max_level": "max_level",
    "z_step_m": "z_step",
    "ode_rtol": "ode_rtol",
    "phase_cutoff": "phase_cutoff",
    "photon_ratio": "photon_ratio",
    "workers": "workers",
}

_SSFM_KEYS = {
    "symbols": "symbols",
    "realizations": "realizations",
    "samples_per_symbol": "samples_per_symbol",
    "seed": "seed",
    "nl_phase_rad": "nl_phase",
    "fwm_phase_rad": "fwm_phase",
    "max_step_m": "max_step",
    "step_m": "step",
    "nl_phase_abort_rad": "nl_phase_abort",
    "isrs": "isrs",
    "profile_z_step_m": "profile_z_step",
    "max_samples": "max_samples",
}


class ConfigError(ValueError):
    """Scenario file is unreadable, violates the schema or describes an invalid system."""


def load_schema(name: str = "scenario") -> dict:
    text = resources.files("isrs_nli").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(doc: dict, name: str = "scenario") -> None:
    validator = jsonschema.Draft202012Validator(load_schema(name))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {err.message}")


@dataclass(frozen=True)
class Scenario:
    name: str
    plan: ChannelPlan
    link: LinkConfig
    options: ModelOptions
    models: tuple
    reference_model: str
    channels: Optional[tuple]
    ssfm: dict = field(default_factory=dict)
    sweep_dbm: Optional[tuple] = None
    probe_channels: Optional[tuple] = None
    long_running: bool = False
    expected: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def with_power_dbm(self, p_dbm: float) -> "Scenario":
        return replace(self, plan=self.plan.with_powers(float(dbm_to_watt(p_dbm))))


def _fiber(base: dict, override: Optional[dict] = None) -> FiberParams:
    merged = dict(base)
    merged.update(override or {})
    return FiberParams.from_engineering(**{_FIBER_KEYS[k]: v for k, v in merged.items()})


def _plan(doc: dict) -> ChannelPlan:
    if "channels" in doc:
        ch = doc["channels"]
        return ChannelPlan(
            np.array([c["frequency_thz"] for c in ch]) * 1e12,
            np.array([c["bandwidth_ghz"] for c in ch]) * 1e9,
            dbm_to_watt(np.array([c["power_dbm"] for c in ch])),
        )
    return build_nyquist_plan(doc["n_ch"], doc["baud_gbd"] * 1e9, float(dbm_to_watt(doc["power_dbm_per_ch"])),
                              doc.get("center_thz", 0.0) * 1e12)


def _link(doc: dict, fiber_doc: dict, n_ch: int) -> LinkConfig:
    policy = doc.get("gain_policy", "ideal-equalization")
    if "spans" not in doc:
        return LinkConfig.uniform(_fiber(fiber_doc), doc["n_spans"], doc["span_length_km"] * 1e3, policy)
    spans = []
    for k, s in enumerate(doc["spans"]):
        launch = None
        if "launch_power_dbm" in s:
            if len(s["launch_power_dbm"]) != n_ch:
                raise ConfigError(f"link/spans/{k}/launch_power_dbm: expected {n_ch} entries")
            launch = dbm_to_watt(np.array(s["launch_power_dbm"], dtype=float))
        spans.append(Span(s["length_km"] * 1e3, _fiber(fiber_doc, s.get("fiber")), launch))
    return LinkConfig(tuple(spans), policy)


def scenario_from_dict(doc: dict, name: str = "scenario") -> Scenario:
    validate(doc)
    try:
        plan = _plan(doc["plan"])
        link = _link(doc["link"], doc["fiber"], plan.n_ch)
        options = ModelOptions(**{_OPTION_KEYS[k]: v for k, v in doc.get("options", {}).items()})
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    channels = doc.get("channels")
    if channels is not None and max(channels) >= plan.n_ch:
        raise ConfigError(f"channels: index {max(channels)} outside plan of {plan.n_ch} channels")
    ssfm_doc = dict(doc.get("ssfm", {}))
    long_running = bool(ssfm_doc.pop("long_running", False))
    sweep = doc.get("sweep")
    probes = tuple(sweep["probe_channels"]) if sweep and "probe_channels" in sweep else None
    if probes is not None and max(probes) >= plan.n_ch:
        raise ConfigError(f"sweep/probe_channels: index {max(probes)} outside plan of {plan.n_ch} channels")
    models = tuple(doc.get("models", DEFAULT_MODELS))
    return Scenario(
        name=doc.get("name", name),
        plan=plan,
        link=link,
        options=options,
        models=models,
        reference_model=doc.get("reference_model", REFERENCE_MODEL),
        channels=tuple(channels) if channels is not None else None,
        ssfm={_SSFM_KEYS[k]: v for k, v in ssfm_doc.items()},
        sweep_dbm=tuple(sweep["power_dbm_per_ch"]) if sweep else None,
        probe_channels=probes,
        long_running=long_running,
        expected=doc.get("expected", {}),
        raw=doc,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return scenario_from_dict(doc, name=path.stem)


def bundled_scenarios() -> list:
    """Names of the scenario files shipped with the package."""
    root = resources.files("isrs_nli").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_scenario_path(name: str):
    return resources.files("isrs_nli").joinpath("scenarios", f"{name}.json")
