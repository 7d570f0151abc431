"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 model failure (partial
outputs are still written).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import MODELS, ConfigError, bundled_scenario_path, bundled_scenarios, load_scenario
from .raman import analytic_triangular_profile, fit_effective_attenuation, isrs_power_transfer_db, solve_raman_ode
from .report import (
    LongRunningError,
    _Context,
    _dump_json,
    _num,
    compare,
    run_model,
    sweep_power_transfer,
    validate_summary,
    write_compare,
    write_sweep,
    write_text,
)
from .units import np_per_m_to_db_per_km

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3

log = logging.getLogger("isrs_nli")


def _resolve(path: str):
    p = Path(path)
    if p.exists():
        return load_scenario(p)
    if path in bundled_scenarios():
        with resources.as_file(bundled_scenario_path(path)) as real:
            return load_scenario(real)
    raise ConfigError(f"{path}: no such file or bundled scenario (bundled: {', '.join(bundled_scenarios())})")


def _models(args, sc, allow_ssfm=True):
    models = args.model or list(sc.models)
    if not allow_ssfm:
        models = [m for m in models if m != "ssfm"]
    if not models:
        raise ConfigError("no model selected")
    return models


def _cmd_profile(args) -> int:
    sc = _resolve(args.scenario)
    if args.method == "analytic":
        prof = analytic_triangular_profile(sc.link, sc.plan, sc.options)
    elif args.method == "ssfm":
        from .ssfm import SsfmConfig, measure_power_profile

        if sc.long_running and not args.allow_long_running:
            raise LongRunningError(f"scenario {sc.name!r} is marked long-running; pass --allow-long-running")
        kwargs = dict(sc.ssfm)
        if args.seed is not None:
            kwargs["seed"] = args.seed
        try:
            cfg = SsfmConfig(sc.plan, sc.link, **kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        prof = measure_power_profile(cfg)
    else:
        prof = solve_raman_ode(sc.link, sc.plan, sc.options)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "profile.csv", prof.to_csv())
    effs = [fit_effective_attenuation(prof, k) for k in range(prof.n_spans)]
    lines = ["span,channel,frequency_thz,alpha_eff_db_per_km,l_eff_km"]
    for k, e in enumerate(effs):
        for c, f in enumerate(sc.plan.frequencies):
            lines.append(f"{k},{c},{f / 1e12:.6f},{np_per_m_to_db_per_km(e.alpha_eff[c]):.9f},{e.l_eff[c] / 1e3:.9f}")
    write_text(out / "effective_attenuation.csv", "\n".join(lines) + "\n")
    transfer = isrs_power_transfer_db(prof) if sc.plan.n_ch > 1 else None
    doc = dict(kind="profile", version=__version__, scenario=sc.name, method=args.method,
               power_transfer_db=None if transfer is None else _num(transfer),
               alpha_eff_db_per_km=[[_num(v) for v in np_per_m_to_db_per_km(e.alpha_eff)] for e in effs],
               l_eff_km=[[_num(v / 1e3) for v in e.l_eff] for e in effs])
    validate_summary(doc)
    write_text(out / "summary.json", _dump_json(doc))
    print(f"power transfer: {'n/a' if transfer is None else f'{transfer:.4f} dB'}")
    return EXIT_OK


def _channels(args, sc):
    ch = args.channels if args.channels is not None else (sc.channels or range(sc.plan.n_ch))
    ch = list(ch)
    if any(not 0 <= c < sc.plan.n_ch for c in ch):
        raise ConfigError(f"--channels: indices must lie in [0, {sc.plan.n_ch})")
    return ch


def _cmd_eta(args) -> int:
    sc = _resolve(args.scenario)
    models = _models(args, sc, allow_ssfm=False)
    ch = _channels(args, sc)
    ctx = _Context(sc, args.seed, args.allow_long_running)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = []
    for m in models:
        run = run_model(ctx, m, ch)
        if not run.ok:
            failures.append(dict(model=m, error=run.failure))
            continue
        lines = ["channel,frequency_thz,eta_db,eta_per_w2,error_per_w2"]
        for c, e, err in zip(ch, run.eta, run.error):
            eta_db = 10 * math.log10(e) if e > 0 else -math.inf
            lines.append(f"{c},{sc.plan.frequencies[c] / 1e12:.6f},{eta_db:.6f},{e:.9e},{err:.3e}")
        write_text(out / f"eta_{m}.csv", "\n".join(lines) + "\n")
        print(f"{m}: " + " ".join(f"{10 * math.log10(e):.3f}" if e > 0 else "-inf" for e in run.eta) + " dB(1/W^2)")
    doc = dict(kind="eta", version=__version__, scenario=sc.name, models=models, channels=ch, failures=failures)
    validate_summary(doc)
    write_text(out / "summary.json", _dump_json(doc))
    return EXIT_MODEL if failures else EXIT_OK


def _cmd_ssfm(args) -> int:
    from .ssfm import SsfmConfig, simulate

    sc = _resolve(args.scenario)
    if sc.long_running and not args.allow_long_running:
        raise LongRunningError(f"scenario {sc.name!r} is marked long-running; pass --allow-long-running")
    kwargs = dict(sc.ssfm)
    if args.seed is not None:
        kwargs["seed"] = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.dump:
        kwargs["dump_path"] = str(out / "field.bin")
    try:
        cfg = SsfmConfig(sc.plan, sc.link, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = simulate(cfg)
    lines = ["channel,frequency_thz,eta_db,eta_per_w2,stderr_per_w2,snr_db"]
    for c, (f, e, s, snr) in enumerate(zip(sc.plan.frequencies, res.eta, res.stderr, res.snr_db)):
        lines.append(f"{c},{f / 1e12:.6f},{10 * math.log10(e):.6f},{e:.9e},{s:.3e},{snr:.6f}")
    write_text(out / "ssfm.csv", "\n".join(lines) + "\n")
    stderr_db = 10 * np.log10(1 + res.stderr / res.eta)
    doc = dict(kind="ssfm", version=__version__, scenario=sc.name, seed=int(cfg.seed),
               eta_db=[_num(v) for v in res.eta_db], stderr_db=[_num(v) for v in stderr_db],
               samples=int(res.meta["samples"]), steps=int(res.steps),
               samples_per_symbol=int(cfg.sps), symbols=int(cfg.symbols), realizations=int(cfg.realizations))
    validate_summary(doc)
    write_text(out / "summary.json", _dump_json(doc))
    print("ssfm: " + " ".join(f"{v:.3f}" for v in res.eta_db) + " dB(1/W^2)")
    return EXIT_OK


def _print_summary(doc: dict) -> None:
    ref = doc["reference_model"]
    for m, s in doc["summary"].items():
        print(f"{m:>18s} vs {ref}: max {s['max_abs_db']:.4f} dB, mean {s['mean_abs_db']:.4f} dB")
    for f in doc["failures"]:
        print(f"{f['model']:>18s} FAILED: {f['error']}", file=sys.stderr)


def _cmd_compare(args) -> int:
    sc = _resolve(args.scenario)
    rep = compare(sc, _models(args, sc), _channels(args, sc), args.reference, args.seed, args.allow_long_running)
    doc = write_compare(rep, args.out)
    _print_summary(doc)
    return EXIT_MODEL if doc["failures"] else EXIT_OK


def _cmd_sweep(args) -> int:
    sc = _resolve(args.scenario)
    powers = args.powers if args.powers is not None else sc.sweep_dbm
    if not powers:
        raise ConfigError("sweep needs launch powers (scenario 'sweep' block or --powers)")
    if not all(math.isfinite(p) for p in powers):
        raise ConfigError("--powers must be finite")
    rep = sweep_power_transfer(sc, powers, _models(args, sc), args.channels, args.reference, args.seed,
                               args.allow_long_running)
    doc = write_sweep(rep, args.out)
    for p, t in zip(doc["powers_dbm_per_ch"], doc["power_transfer_db"]):
        print(f"{p:7.2f} dBm/ch  transfer {'n/a' if t is None else f'{t:.3f}'} dB")
    for f in doc["failures"]:
        print(f"{f['model']} at {f['power_dbm_per_ch']} dBm FAILED: {f['error']}", file=sys.stderr)
    return EXIT_MODEL if doc["failures"] else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isrs-nli", description="NLI estimation under inter-channel Raman scattering.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, models=True):
        sp.add_argument("scenario", help="scenario JSON path or bundled scenario name")
        sp.add_argument("-o", "--out", default="out", help="output directory (default: out)")
        sp.add_argument("--seed", type=int, default=None, help="override the simulator seed")
        sp.add_argument("--allow-long-running", action="store_true",
                        help="permit scenarios marked long-running (full-band simulation)")
        if models:
            sp.add_argument("-m", "--model", action="append", choices=MODELS, help="model to run (repeatable)")
            sp.add_argument("--channels", type=int, nargs="+", default=None, help="channel indices")

    sp = sub.add_parser("profile", help="Raman power profile, effective attenuation and power transfer")
    common(sp, models=False)
    sp.add_argument("--method", choices=("ode", "analytic", "ssfm"), default="ode")
    sp.set_defaults(func=_cmd_profile)

    sp = sub.add_parser("eta", help="per-channel NLI coefficients of the selected models")
    common(sp)
    sp.set_defaults(func=_cmd_eta)

    sp = sub.add_parser("ssfm", help="split-step Fourier reference simulation")
    common(sp, models=False)
    sp.add_argument("--dump", action="store_true", help="write the received field to field.bin")
    sp.set_defaults(func=_cmd_ssfm)

    sp = sub.add_parser("compare", help="deviation of every model from the reference")
    common(sp)
    sp.add_argument("--reference", choices=MODELS, default=None)
    sp.set_defaults(func=_cmd_compare)

    sp = sub.add_parser("sweep", help="deviation versus launch power and ISRS power transfer")
    common(sp)
    sp.add_argument("--reference", choices=MODELS, default=None)
    sp.add_argument("--powers", type=float, nargs="+", default=None, help="launch powers (dBm per channel)")
    sp.set_defaults(func=_cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, LongRunningError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"model failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
