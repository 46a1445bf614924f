"""Command-line front end: ``python -m holodfs <command>``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort,
4 fidelity below ``--assert-fidelity``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .holonomy import CalibrationError
from .lindblad import NumericalAbort
from .models import KHZ, MHZ
from .scenarios import (
    BUILTIN,
    BUILTIN_SWEEPS,
    SWEEPABLE,
    ConfigError,
    ScenarioConfig,
    calibrate,
    list_scenarios,
    parse_config,
    run_builtin_sweep,
    run_scenario,
    run_sweep,
)

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_THRESHOLD = 0, 2, 3, 4

# sweep values on the command line use config-file units
_SWEEP_UNITS = {"kappa": KHZ, "g": MHZ, "delta_big": MHZ, "anharmonicity": MHZ, "dt": 1.0}


def _load(source: str) -> ScenarioConfig:
    if source in BUILTIN:
        return BUILTIN[source]
    if not Path(source).exists() and "/" not in source and not source.endswith((".ini", ".cfg")):
        known = ", ".join(n for n, _ in list_scenarios())
        raise ConfigError(f"{source!r} is neither a config file nor a built-in scenario ({known})")
    return parse_config(source)


def _with_outputs(cfg: ScenarioConfig, out_dir: str | None, dt_ns: float | None) -> ScenarioConfig:
    if dt_ns is not None:
        if not dt_ns > 0:
            raise ConfigError("--dt-ns must be positive")
        cfg = replace(cfg, dt=dt_ns)
    out = Path(out_dir or ".")
    trace = cfg.trace_csv or f"{cfg.name}_trace.csv"
    summary = cfg.summary_json or f"{cfg.name}_summary.json"
    return replace(cfg, trace_csv=str(out / trace), summary_json=str(out / summary))


def _print_summary(s) -> None:
    print(f"{s.scenario}: F_final={s.final_fidelity:.6f} F_peak={s.peak_fidelity:.6f} "
          f"@ {s.peak_time_ns:.3f} ns, tau={s.tau_ns:.4f} ns, leakage={s.leakage:.3g}, "
          f"trace drift={s.trace_drift:.2g}, {s.wall_seconds:.1f} s")
    for w in s.warnings:
        print(f"  warning: {w}")


def cmd_run(args) -> int:
    if args.config in BUILTIN_SWEEPS:
        sweep = BUILTIN_SWEEPS[args.config]
        if args.dt_ns is not None:
            sweep = dataclasses.replace(sweep, curves={k: replace(c, dt=args.dt_ns)
                                                       for k, c in sweep.curves.items()})
        Path(args.out_dir or ".").mkdir(parents=True, exist_ok=True)
        curves = run_builtin_sweep(sweep, out_dir=args.out_dir or ".")
        worst = 1.0
        for label, rows in curves.items():
            print(f"[{label}]")
            for v, s in zip(sweep.values, rows):
                print(f"  kappa={v / KHZ:8.1f} kHz  F_peak={s.peak_fidelity:.6f}  F_final={s.final_fidelity:.6f}")
                worst = min(worst, s.peak_fidelity)
        return _threshold(args, worst)
    cfg = _with_outputs(_load(args.config), args.out_dir, args.dt_ns)
    _, summary = run_scenario(cfg)
    _print_summary(summary)
    print(f"wrote {cfg.trace_csv} and {cfg.summary_json}")
    return _threshold(args, summary.final_fidelity)


def _parse_values(text: str, parameter: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"--values: cannot parse {text!r}") from None
    if not vals:
        raise ConfigError("--values: empty value list")
    return [v * _SWEEP_UNITS[parameter] for v in vals]


def cmd_sweep(args) -> int:
    if args.param not in SWEEPABLE:
        raise ConfigError(f"--param {args.param!r} is not sweepable; choose from {', '.join(SWEEPABLE)}")
    cfg = _load(args.config)
    if args.dt_ns is not None:
        cfg = replace(cfg, dt=args.dt_ns)
    values = _parse_values(args.values, args.param)
    out = Path(args.out_dir or ".")
    table = out / f"{cfg.name}_sweep_{args.param}.csv"
    rows = run_sweep(cfg, args.param, values, table_csv=str(table))
    unit = {"kappa": "kHz", "dt": "ns"}.get(args.param, "MHz")
    for v, s in zip(sorted(values), rows):
        print(f"{args.param}={v / _SWEEP_UNITS[args.param]:.6g} {unit}  F_final={s.final_fidelity:.6f}  "
              f"F_peak={s.peak_fidelity:.6f}")
    print(f"wrote {table}")
    return _threshold(args, min(s.final_fidelity for s in rows))


def cmd_calibrate(args) -> int:
    cfg = _load(args.config)
    cal = calibrate(cfg)
    out = {"scenario": cfg.name, "kind": cal.kind, "alphas": list(cal.alphas), "phases": list(cal.phases),
           "xi": cal.xi, "xi_mhz": cal.xi / MHZ, "tau_ns": cal.tau, "diagnostics": cal.diagnostics}
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_list(args) -> int:
    for name, desc in list_scenarios():
        print(f"{name:22s} {desc}")
    return EXIT_OK


def _threshold(args, value: float) -> int:
    if args.assert_fidelity is not None and value < args.assert_fidelity:
        print(f"fidelity {value:.6f} below required {args.assert_fidelity}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="holodfs", description="Holonomic DFS gate simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out-dir", default=None, help="directory for CSV/JSON output (default: cwd)")
        sp.add_argument("--dt-ns", type=float, default=None, help="override the RK4 step (ns)")
        sp.add_argument("--assert-fidelity", type=float, default=None, metavar="MIN",
                        help="exit with code 4 if the fidelity falls below MIN")

    sp = sub.add_parser("run", help="run a config file or built-in scenario")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="sweep one parameter of a scenario")
    sp.add_argument("config")
    sp.add_argument("--param", required=True, help=f"one of {', '.join(SWEEPABLE)}")
    sp.add_argument("--values", required=True,
                    help="comma-separated values in config units (kappa kHz; g, delta_big, anharmonicity MHz; dt ns)")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("calibrate", help="print the drive calibration without simulating")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("list-scenarios", help="list built-in scenarios")
    sp.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CalibrationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
