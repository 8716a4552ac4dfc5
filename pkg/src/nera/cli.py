"""Batch command-line front end: ``nera <subcommand> [options]``.

Every run writes CSV tables plus ``<subcommand>_manifest.json`` into
``--out-dir``. The manifest holds the fully resolved parameters and settings;
passing it back through ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import PARAM_ORDER
from .bifurcation import SWEEP_LCE, SweepConfig, detect_boundaries, regimes, sweep
from .calibration import (CalibrationProblem, GAConfig, ObservedSeries, DEFAULT_BOUNDS,
                          calibrate, load_bounds)
from .equilibria import closed_form_equilibria, find_all_numeric, find_I3
from .integrate import IntegrationError, IntegratorConfig, integrate
from .io import ConfigError, make_manifest, read_kv, write_csv, write_manifest
from .lyapunov import LyapunovConfig, LyapunovError, lyapunov_batch
from .model import DEFAULT_H, PRESETS, STATE_NAMES, ModelVariant, ParameterSet
from .stability import StabilityError, eigenvalues_at

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2
DEFAULT_S0 = "0.5, 0.1, 0.05, 0.01"

TRAJECTORY_HEADER = ["t", *STATE_NAMES]
EQUILIBRIA_HEADER = ["label", *STATE_NAMES, "residual", "feasible", "converged",
                     "cond_rate_gap", "cond_state_positive", "cond_oscillatory", "note"]
STABILITY_HEADER = ["label", "index", "re", "im", "class"]
LYAPUNOV_HEADER = ["beta1", "lambda1", "lambda2", "lambda3", "lambda4", "classification",
                   "kaplan_yorke"]
LYAPUNOV_DETAIL_HEADER = LYAPUNOV_HEADER + ["pattern", "hausdorff_label", "trace_average",
                                            "sum_rule_error", "convergence"]
TRACE_HEADER = ["beta1", "t", "lambda1", "lambda2", "lambda3", "lambda4"]
PEAKS_HEADER = ["beta1", "peak_value"]
SAMPLES_HEADER = ["beta1", "n_peaks", "amplitude", "regime", "error"]
BOUNDARY_HEADER = ["beta1", "left", "right", "left_regime", "right_regime", "criterion"]
HISTORY_HEADER = ["generation", "best_fitness", "mean_fitness"]

REPRODUCE = {
    "colorado": {"lo": 0.02, "hi": 0.8, "steps": 157},
    "washington": {"lo": 0.02, "hi": 0.36, "steps": 69},
}


# --- settings schema --------------------------------------------------------

def _floats(raw):
    if isinstance(raw, (list, tuple)):
        return tuple(float(v) for v in raw)
    return tuple(float(v) for v in str(raw).replace(";", ",").split(",") if v.strip())


def _bool(raw):
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _int(raw):
    value = float(raw)
    if value != int(value):
        raise ValueError(f"not an integer: {raw!r}")
    return int(value)


_COMMON = {"variant": (str, "full")}
_INTEGRATOR = {f.name: ({"scheme": str, "record_stride": _int}.get(f.name, float), f.default)
               for f in fields(IntegratorConfig)}
_LYAP = {f.name: (float, f.default) for f in fields(LyapunovConfig)}

SCHEMAS = {
    "simulate": {**_COMMON, **_INTEGRATOR, "s0": (_floats, DEFAULT_S0)},
    "equilibria": {**_COMMON, "grid": (_int, 5), "i3_seed": (_floats, "0.1, 0.1, 0.1, 0")},
    "stability": {**_COMMON, "label": (str, "I2"), "i3_seed": (_floats, "0.1, 0.1, 0.1, 0")},
    "lyapunov": {**_COMMON, **_LYAP, "s0": (_floats, DEFAULT_S0),
                 "beta1_values": (_floats, ""), "trace": (_bool, False)},
    "bifurcate": {
        **_COMMON, "lo": (float, 0.02), "hi": (float, 0.8), "steps": (_int, 400),
        "obs": (str, "N"), "seeding": (str, "warm"), "with_lce": (_bool, False),
        "transient": (float, 5e3), "window": (float, 2e3), "min_peaks": (_int, 16),
        "max_window": (float, 5e4), "max_transient": (float, 5e4),
        "seed_floor": (float, 1e-6), "dt": (float, 0.05), "s0": (_floats, DEFAULT_S0),
        "lce_total_time": (float, SWEEP_LCE.total_time),
        "lce_tangent_transient": (float, SWEEP_LCE.tangent_transient),
        "lce_zero_tolerance": (float, SWEEP_LCE.zero_tolerance),
        "criterion": (str, "auto"),
    },
    "calibrate": {
        **_COMMON,
        **{f.name: ((float if f.type == "float" else _int), f.default)
           for f in fields(GAConfig) if f.name != "threads"},
        "dt": (float, 0.05), "fill": (_floats, "0, 0, 0, 0"),
        "weights": (_floats, "1, 1, 1, 1"), "mask": (str, "NERA"),
    },
}
SCHEMAS["reproduce"] = {**SCHEMAS["bifurcate"], "with_lce": (_bool, True),
                        "steps": (_int, 0), "lo": (float, 0.0), "hi": (float, 0.0)}


def _coerce(schema, key, raw, source):
    kind = schema[key][0]
    try:
        return kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(source, getattr(raw, "line", None), key, str(exc)) from None


def _load_config(path):
    """Flat entries from a key-value file or from a previous run's manifest."""
    path = Path(path)
    if path.suffix == ".json":
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
            cfg = manifest["config"]
            return {**cfg.get("parameters", {}), **cfg.get("settings", {})}
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(str(path), None, None, f"not a run manifest: {exc}") from None
    return read_kv(path)


def resolve(subcommand, preset_name=None, config_path=None, overrides=None):
    """Merged ``(ParameterSet, settings)``: defaults < preset < config < flags."""
    schema = SCHEMAS[subcommand]
    source = str(config_path) if config_path else "<command line>"
    entries = _load_config(config_path) if config_path else {}

    params = dict(PRESETS[preset_name].as_dict()) if preset_name else {}
    settings = {k: _coerce(schema, k, d, "<defaults>") if isinstance(d, str) else d
                for k, (_, d) in schema.items()}
    for key, raw in entries.items():
        if key in PARAM_ORDER:
            try:
                params[key] = float(raw)
            except (TypeError, ValueError):
                raise ConfigError(source, getattr(raw, "line", None), key,
                                  f"not a number: {raw!r}") from None
        elif key in schema:
            settings[key] = _coerce(schema, key, raw, source)
        else:
            raise ConfigError(source, getattr(raw, "line", None), key,
                              f"unknown key for '{subcommand}'")
    for key, value in (overrides or {}).items():
        if value is not None:
            settings[key] = _coerce(schema, key, value, "<command line>")
    if subcommand == "calibrate":
        # rates are the unknowns here; only the half-saturation constant is used
        settings["h"] = float(params.get("h", DEFAULT_H))
        p = None
    elif not params:
        raise ConfigError(source, None, None, "no parameters: give --preset or a config "
                                              "with beta1..gamma1")
    else:
        p = ParameterSet.from_mapping(params, source=source)
    try:
        settings["variant"] = ModelVariant.parse(settings["variant"]).value
    except ValueError as exc:
        raise ConfigError(source, None, "variant", str(exc)) from None
    return p, settings


# --- helpers ----------------------------------------------------------------

class NumericalFailure(RuntimeError):
    pass


def _state(values, source, key="s0"):
    if len(values) != 4:
        raise ConfigError(source, None, key, "expected four comma-separated values")
    return np.array(values, dtype=float)


def _finish(args, subcommand, p, settings, outputs, extra=None):
    config = {"parameters": p.as_dict() if p is not None else {}, "settings": settings}
    if extra:
        config.update(extra)
    source = args.config or (f"preset:{args.preset}" if args.preset else None)
    manifest = make_manifest(subcommand, config, source=source,
                             seed=getattr(args, "seed", None), outputs=[Path(o).name
                                                                         for o in outputs])
    manifest["argv"] = list(args.argv)
    path = args.out / f"{subcommand}_manifest.json"
    write_manifest(path, manifest)
    return path


def _lyap_row(beta1, sp):
    return [beta1, *sp.exponents, sp.classification.value, sp.kaplan_yorke]


def _lyap_detail(beta1, sp):
    return _lyap_row(beta1, sp) + [sp.pattern, sp.hausdorff_label, sp.trace_average,
                                   sp.sum_rule_error, sp.convergence]


def _cond_cells(rep):
    if not rep.conditions:
        return [None, None, None]
    return [c.passed for c in rep.conditions]


def _eq_row(rep):
    return [rep.label, *rep.state, rep.residual, rep.feasible, rep.converged,
            *_cond_cells(rep), rep.note]


# --- subcommands ------------------------------------------------------------

def cmd_simulate(args, p, st):
    cfg = IntegratorConfig(**{k: st[k] for k in _INTEGRATOR})
    s0 = _state(st["s0"], args.config or "<defaults>")
    out = args.out / "trajectory.csv"
    try:
        traj = integrate(p, s0, cfg, st["variant"])
    except IntegrationError as exc:
        if exc.trajectory is not None:
            write_csv(out, TRAJECTORY_HEADER, np.column_stack([exc.trajectory.times,
                                                               exc.trajectory.states]))
        raise NumericalFailure(f"integration aborted: {exc}") from exc
    write_csv(out, TRAJECTORY_HEADER, np.column_stack([traj.times, traj.states]))
    return [out], {"integrator_meta": traj.meta}


def cmd_equilibria(args, p, st):
    reports = closed_form_equilibria(p, st["variant"])
    reports.append(find_I3(p, _state(st["i3_seed"], "<settings>", "i3_seed"), st["variant"]))
    numeric = find_all_numeric(p, st["grid"], st["variant"])
    for rep in numeric:
        if not any(np.all(np.isfinite(r.state)) and np.max(np.abs(r.state - rep.state)) < 1e-6
                   for r in reports):
            reports.append(rep)
    out = args.out / "equilibria.csv"
    write_csv(out, EQUILIBRIA_HEADER, [_eq_row(r) for r in reports])
    return [out], {"numeric_seeds": numeric.n_seeds, "numeric_failures": numeric.n_failed}


def cmd_stability(args, p, st):
    label = st["label"]
    if label == "I3":
        rep = find_I3(p, _state(st["i3_seed"], "<settings>", "i3_seed"), st["variant"])
    else:
        match = [r for r in closed_form_equilibria(p, st["variant"]) if r.label == label]
        if not match:
            raise ConfigError("<settings>", None, "label",
                              f"unknown equilibrium {label!r}; use O, I1, I2, J2 or I3")
        rep = match[0]
    if not rep.feasible or not np.isfinite(rep.residual) or rep.residual >= 1e-8:
        raise NumericalFailure(f"{label} is not a feasible equilibrium for these parameters "
                               f"(residual {rep.residual:.3g})")
    try:
        sr = eigenvalues_at(p, rep, st["variant"])
    except StabilityError as exc:
        raise NumericalFailure(str(exc)) from exc
    out = args.out / "stability.csv"
    write_csv(out, STABILITY_HEADER, [[label, i, ev.real, ev.imag, sr.classification.value]
                                      for i, ev in enumerate(sr.eigenvalues, start=1)])
    return [out], {"state": rep.state.tolist(), "margin": sr.margin}


def cmd_lyapunov(args, p, st):
    cfg = LyapunovConfig(**{k: st[k] for k in _LYAP})
    betas = st["beta1_values"] or (p.beta1,)
    if args.range:
        lo, hi = _floats(args.range)
        betas = tuple(np.linspace(lo, hi, args.steps or 2))
    s0 = _state(st["s0"], "<settings>")
    params = [p.with_(beta1=float(b)) for b in betas]
    results = lyapunov_batch(params, [s0] * len(params), cfg, st["variant"], args.threads)
    rows, detail, trace, failed = [], [], [], []
    for b, sp in zip(betas, results):
        if isinstance(sp, LyapunovError):
            failed.append(f"beta1={b:.6g}: {sp}")
            continue
        rows.append(_lyap_row(b, sp))
        detail.append(_lyap_detail(b, sp))
        if st["trace"]:
            step = max(1, len(sp.times) // 2000)
            trace.extend([b, t, *lam] for t, lam in zip(sp.times[::step], sp.running[::step]))
    outs = [args.out / "lyapunov.csv", args.out / "lyapunov_detail.csv"]
    write_csv(outs[0], LYAPUNOV_HEADER, rows)
    write_csv(outs[1], LYAPUNOV_DETAIL_HEADER, detail)
    if st["trace"]:
        outs.append(args.out / "lyapunov_trace.csv")
        write_csv(outs[-1], TRACE_HEADER, trace)
    if failed:
        raise NumericalFailure("; ".join(failed))
    return outs, {"beta1_values": list(map(float, betas))}


def _sweep_config(st, threads):
    lce = LyapunovConfig(transient=0.0, total_time=st["lce_total_time"],
                         tangent_transient=st["lce_tangent_transient"],
                         zero_tolerance=st["lce_zero_tolerance"])
    try:
        return SweepConfig(lo=st["lo"], hi=st["hi"], steps=st["steps"], obs=st["obs"],
                           transient=st["transient"], window=st["window"],
                           min_peaks=st["min_peaks"], max_window=st["max_window"],
                           seed_floor=st["seed_floor"], max_transient=st["max_transient"],
                           seeding=st["seeding"], s0=_floats(st["s0"]), dt=st["dt"],
                           with_lce=st["with_lce"], lce=lce, threads=threads)
    except ValueError as exc:
        raise ConfigError("<settings>", None, None, str(exc)) from None


def _write_sweep(args, d, criterion):
    labels = regimes(d, criterion)
    peaks, samples, lyap = [], [], []
    for smp, lab in zip(d.samples, labels):
        if smp.peaks is not None:
            peaks.extend([smp.beta1, v] for v in smp.peaks)
        samples.append([smp.beta1, None if smp.peaks is None else smp.peaks.size,
                        smp.amplitude, lab, smp.error])
        if smp.spectrum is not None:
            lyap.append(_lyap_detail(smp.beta1, smp.spectrum))
    bounds = detect_boundaries(d, criterion)
    used = criterion
    if criterion == "auto":
        used = "lce" if lyap and len(lyap) == sum(not s.failed for s in d.samples) else "peaks"
    outs = [args.out / "bifurcation.csv", args.out / "bifurcation_samples.csv",
            args.out / "boundaries.csv"]
    write_csv(outs[0], PEAKS_HEADER, peaks)
    write_csv(outs[1], SAMPLES_HEADER, samples)
    write_csv(outs[2], BOUNDARY_HEADER, [[b.beta1, b.left, b.right, b.left_regime,
                                         b.right_regime, used] for b in bounds])
    if lyap:
        outs.append(args.out / "lyapunov.csv")
        write_csv(outs[-1], LYAPUNOV_DETAIL_HEADER, lyap)
    failed = [s for s in d.samples if s.failed]
    return outs, bounds, failed, used


def cmd_bifurcate(args, p, st):
    cfg = _sweep_config(st, args.threads)
    d = sweep(p, cfg, st["variant"])
    outs, bounds, failed, used = _write_sweep(args, d, st["criterion"])
    for b in bounds:
        print(f"boundary beta1={b.beta1:.5f} ({b.left_regime} -> {b.right_regime})")
    if failed:
        raise NumericalFailure("integration failed at "
                               + ", ".join(f"beta1={s.beta1:.6g} ({s.error})" for s in failed))
    return outs, {"criterion_used": used, "boundaries": [b.beta1 for b in bounds]}


def cmd_calibrate(args, p, st):
    if not args.data:
        raise ConfigError("<command line>", None, "--data", "a data CSV is required")
    series = ObservedSeries.from_csv(args.data)
    bounds = load_bounds(args.bounds) if args.bounds else dict(DEFAULT_BOUNDS)
    ga_entries = read_kv(args.ga) if args.ga else {}
    ga_keys = {f.name for f in fields(GAConfig)}
    for key, raw in ga_entries.items():
        if key not in ga_keys:
            raise ConfigError(str(args.ga), raw.line, key, "unknown GA setting")
        if key in st:
            st[key] = _coerce(SCHEMAS["calibrate"], key, raw, str(args.ga))
    ga_kwargs = {k: st[k] for k in ga_keys if k in st}
    if args.seed is not None:
        st["rng_seed"] = ga_kwargs["rng_seed"] = args.seed
    ga_kwargs["threads"] = args.threads
    mask = tuple(c in st["mask"].upper() for c in STATE_NAMES)
    try:
        ga = GAConfig(**ga_kwargs)
        prob = CalibrationProblem(series, bounds, h=st["h"], weights=_floats(st["weights"]),
                                  fill=_floats(st["fill"]), dt=st["dt"],
                                  variant=ModelVariant.parse(st["variant"]), mask=mask)
    except ValueError as exc:
        raise ConfigError("<settings>", None, None, str(exc)) from None
    res = calibrate(prob, ga)
    outs = [args.out / "best_params.cfg", args.out / "fitness_history.csv"]
    res.best.save(outs[0], header=f"calibrated by nera {__version__}; fitness {res.fitness!r}")
    write_csv(outs[1], HISTORY_HEADER,
              [[g + 1, b, m] for g, (b, m) in enumerate(zip(res.best_history,
                                                             res.mean_history))])
    print(f"best fitness {res.fitness:.6g} (GA {res.ga_fitness:.6g}); {res.evaluations} "
          f"evaluations")
    return outs, {"data": str(args.data), "bounds": {k: list(v) for k, v in bounds.items()},
                  "fitness": res.fitness, "ga_fitness": res.ga_fitness}


def cmd_reproduce(args, p, st):
    name = args.name
    for key, value in REPRODUCE[name].items():
        if not st[key]:
            st[key] = value
    if args.range:
        st["lo"], st["hi"] = _floats(args.range)
    if args.steps:
        st["steps"] = args.steps
    outs, _ = cmd_equilibria(args, p, {"variant": st["variant"], "grid": 5,
                                       "i3_seed": (0.1, 0.1, 0.1, 0.0)})
    stab_rows = []
    for rep in closed_form_equilibria(p, st["variant"]):
        if rep.feasible and rep.residual < 1e-8:
            sr = eigenvalues_at(p, rep, st["variant"])
            stab_rows.extend([rep.label, i, ev.real, ev.imag, sr.classification.value]
                             for i, ev in enumerate(sr.eigenvalues, start=1))
    outs.append(args.out / "stability.csv")
    write_csv(outs[-1], STABILITY_HEADER, stab_rows)
    d = sweep(p, _sweep_config(st, args.threads), st["variant"])
    more, bounds, failed, used = _write_sweep(args, d, st["criterion"])
    outs.extend(more)
    print(f"{name}: {len(bounds)} boundaries ({used} labels)")
    for b in bounds:
        print(f"  beta1={b.beta1:.5f} ({b.left_regime} -> {b.right_regime})")
    if failed:
        raise NumericalFailure("integration failed at "
                               + ", ".join(f"beta1={s.beta1:.6g}" for s in failed))
    return outs, {"criterion_used": used, "boundaries": [b.beta1 for b in bounds]}


COMMANDS = {
    "simulate": (cmd_simulate, "integrate one trajectory"),
    "equilibria": (cmd_equilibria, "closed-form and numeric fixed points"),
    "stability": (cmd_stability, "eigenvalues and class of one fixed point"),
    "lyapunov": (cmd_lyapunov, "Lyapunov spectra at one or more beta1 values"),
    "bifurcate": (cmd_bifurcate, "beta1 sweep: peak diagram and regime boundaries"),
    "calibrate": (cmd_calibrate, "fit the ten rates to a prevalence series"),
    "reproduce": (cmd_reproduce, "full pipeline for a bundled preset"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nera", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nera {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        if name == "reproduce":
            sp.add_argument("name", choices=sorted(REPRODUCE), help="preset to reproduce")
        else:
            sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--config", help="key-value config file or a previous manifest")
        sp.add_argument("--out-dir", default=".", help="output directory (created)")
        sp.add_argument("--seed", type=int, help="RNG seed (calibrate)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads")
        if name in ("lyapunov", "bifurcate", "reproduce"):
            sp.add_argument("--range", help="beta1 range as lo,hi")
            sp.add_argument("--steps", type=int, help="number of beta1 samples")
        if name in ("bifurcate", "reproduce"):
            sp.add_argument("--obs", choices=STATE_NAMES)
            sp.add_argument("--with-lce", action="store_true", default=None)
        if name == "stability":
            sp.add_argument("--label", help="O, I1, I2, J2 or I3")
        if name == "calibrate":
            sp.add_argument("--data", help="CSV with header t,N,E,R,A")
            sp.add_argument("--bounds", help="bounds file: name = lo, hi")
            sp.add_argument("--ga", help="GA settings file")
    return parser


def _overrides(args):
    out = {}
    if getattr(args, "range", None) and args.command == "bifurcate":
        try:
            out["lo"], out["hi"] = _floats(args.range)
        except ValueError:
            raise ConfigError("<command line>", None, "--range", "expected lo,hi") from None
    if getattr(args, "steps", None) and args.command == "bifurcate":
        out["steps"] = args.steps
    for key in ("obs", "with_lce", "label"):
        if getattr(args, key, None) is not None:
            out[key] = getattr(args, key)
    return out


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    if args.command == "reproduce":
        args.preset = args.name
    if args.threads < 1:
        print("nera: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    handler = COMMANDS[args.command][0]
    try:
        p, settings = resolve(args.command, args.preset, args.config, _overrides(args))
        args.out = Path(args.out_dir)
        args.out.mkdir(parents=True, exist_ok=True)
        outputs, extra = handler(args, p, settings)
        _finish(args, args.command, p, settings, outputs, extra)
    except ConfigError as exc:
        print(f"nera: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, IntegrationError, LyapunovError, StabilityError) as exc:
        print(f"nera: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
