"""Command line driver: ``movarray <scenario> [options]``.

Exit codes: 0 success, 1 usage error, 2 numeric failure, 3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .experiments import (
    SCENARIOS,
    ConfigError,
    ExperimentConfig,
    Table,
    apply_settings,
    default_config,
    parse_config_text,
    preset_config,
    run_experiment,
)
from .numerics import ConvergenceError, DomainError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3
SIGNIFICANT_DIGITS = 15


def format_value(x) -> str:
    """Decimal notation (never exponent form) with 15 significant digits."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not np.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if x == 0.0:
        return "0"
    return np.format_float_positional(x, precision=SIGNIFICANT_DIGITS, unique=False,
                                      fractional=False, trim="-")


def render_csv(table: Table, config: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(f"# movarray {__version__}\n")
    for line in config.describe():
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def plot_script(csv_path: str, table: Table, config: ExperimentConfig) -> str:
    """Companion gnuplot script for a written CSV table."""
    base = os.path.basename(csv_path)
    cols = list(table.columns)
    x = cols.index("s_th") + 1
    if config.scenario == "validate":
        return ""
    y_names = [c for c in cols if c not in ("preset", "system", "s_th", "analytic_kind",
                                            "ci_low", "ci_high")]
    log_y = config.scenario in ("ccdf_curve", "lcr_curve")
    lines = [
        f"# plots {base}",
        "set datafile separator ','",
        "set key outside",
        "set xlabel 'SNR threshold'",
        f"set ylabel '{_YLABEL[config.scenario]}'",
    ]
    if log_y:
        lines.append("set logscale y")
    if config.thresholds.scale == "log":
        lines.append("set logscale x")
    lines.append(f"set output '{os.path.splitext(base)[0]}.png'")
    lines.append("set terminal pngcairo size 900,600")
    plots = []
    for system in config.systems:
        for name in y_names:
            y = cols.index(name) + 1
            style = "lines" if "analytic" in name else "points"
            plots.append(f"'{base}' using (stringcolumn(1) eq '{system.name}' ? ${x} : 1/0):{y} "
                         f"with {style} title '{system.name} {name}'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


_YLABEL = {"lcr_curve": "level crossing rate", "ccdf_curve": "ccdf",
           "cdf_curve": "cdf", "comparison": "cdf", "validate": ""}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="movarray",
                                description="Movable-array SNR bounds, crossing rates and "
                                            "Monte Carlo checks.")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--preset", help="named preset (fig2a..fig5e, validate) or group (fig2..fig5)")
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", dest="settings", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration value (repeatable)")
    p.add_argument("--out", help="output CSV path ('-' for stdout)")
    p.add_argument("--seed", type=int, help="Monte Carlo seed (64-bit unsigned)")
    p.add_argument("--no-sim", action="store_true", help="analytic columns only")
    p.add_argument("--threads", type=int, help="worker threads (does not change results)")
    p.add_argument("--plot", action="store_true",
                   help="also write a gnuplot script next to the CSV")
    p.add_argument("--version", action="version", version=f"movarray {__version__}")
    return p


def resolve_config(args) -> ExperimentConfig:
    if args.preset:
        config = preset_config(args.preset, args.scenario)
    else:
        config = default_config(args.scenario)
    items = []
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                items.extend(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    for s in args.settings:
        if "=" not in s:
            raise ConfigError(f"--set expects key=value, got {s!r}")
        k, v = s.split("=", 1)
        items.append((k.strip(), v.strip()))
    if args.seed is not None:
        items.append(("seed", str(args.seed)))
    if args.no_sim:
        if args.scenario == "validate":
            raise ConfigError("validate always runs the simulator")
        items.append(("sim", "false"))
    config = apply_settings(config, items)
    if args.out is not None:
        config = replace(config, output_path=args.out)
    return config


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        config = resolve_config(args)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
    except (ConfigError, DomainError) as exc:
        print(f"movarray: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        table = run_experiment(config, threads=args.threads)
    except ConfigError as exc:
        print(f"movarray: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, ConvergenceError, DomainError, np.linalg.LinAlgError) as exc:
        print(f"movarray: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        _write(config.output_path, render_csv(table, config))
        if args.plot and config.output_path != "-":
            script = plot_script(config.output_path, table, config)
            if script:
                _write(os.path.splitext(config.output_path)[0] + ".gp", script)
    except OSError as exc:
        print(f"movarray: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if config.scenario == "validate":
        failed = [r[0] for r in table.rows if r[1] == "fail"]
        for row in table.rows:
            print(f"{row[1]:>4}  {row[0]}  measured={format_value(row[2])}  "
                  f"reference={format_value(row[3])}", file=sys.stderr)
        if failed:
            print(f"movarray: {len(failed)} validation check(s) failed", file=sys.stderr)
            return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
