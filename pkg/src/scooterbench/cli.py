"""Command-line entry point.

Exit codes: 0 success, 2 configuration problem, 3 simulation failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, ScooterBenchError
from .harness import (
    DEFAULT_GRADES,
    SweepConfig,
    emit_report,
    run_coastdown,
    run_dyno_sweep,
    run_road_vs_dyno,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3


def _parse_grades(text: str) -> tuple:
    if text == "default":
        return DEFAULT_GRADES
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"cannot parse grade list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scooterbench",
        description="Roller-dynamometer simulation bench for 50 cc scooter restriction strategies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coastdown", help="identify road-load coefficients from coast-down runs")
    p.add_argument("--config", default=None, help="config file (defaults to the built-in calibration)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--v0", type=float, default=45.0, help="initial velocity, km/h")
    p.add_argument("--grade-split", type=float, default=0.0,
                   help="grade of run A (run B uses the opposite sign)")
    p.add_argument("--noise", type=float, default=0.0, help="multiplicative velocity noise fraction")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sweep", help="gradient sweep at top speed, both restriction strategies")
    p.add_argument("--config", default=None)
    p.add_argument("--grades", default="default", help="'default' or comma-separated fractions")
    p.add_argument("--strategy", choices=("or", "vc", "both"), default="both")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)

    p = sub.add_parser("road-vs-dyno", help="steady cruise throttle, road load vs dyno load")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="regenerate derived tables and figures from sweep records")
    p.add_argument("--in", dest="in_dir", required=True, help="directory holding sweep output")
    p.add_argument("--format", default="csv", choices=("csv",))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "coastdown":
            cfg = load_config(args.config)
            result = run_coastdown(cfg, out_dir=args.out, v0_kmh=args.v0,
                                   grade_split=args.grade_split,
                                   noise_frac=args.noise, seed=args.seed)
            print(f"fitted road load: {result.curve.quad_coeff:.6g} v^2 + {result.curve.const_coeff:.6g} N")
            print(f"derived c_w = {result.drag_coeff_derived:.3f}, f_R = {result.rolling_coeff_derived:.4f}")
            print(result.note)
        elif args.command == "sweep":
            cfg = load_config(args.config)
            sweep = SweepConfig(grades=_parse_grades(args.grades), strategy=args.strategy,
                                seed=args.seed,
                                v_limit_kmh=cfg.controller.v_limit_kmh,
                                settle_timeout_s=cfg.controller.settle_timeout_s,
                                log_duration_s=cfg.controller.log_duration_s)
            report = run_dyno_sweep(cfg, sweep)
            emit_report(report, args.out)
            print(f"captured {len(report.points)} operating points "
                  f"({len(report.invalid_flags)} flagged) -> {args.out}")
        elif args.command == "road-vs-dyno":
            cfg = load_config(args.config)
            rows = run_road_vs_dyno(cfg, out_dir=args.out)
            for row in rows:
                print(f"{row['velocity_kmh']:5.1f} km/h: road {row['tvp_road_pct']:5.1f} % | "
                      f"dyno {row['tvp_dyno_pct']:5.1f} %")
        elif args.command == "report":
            from .report import regenerate_report
            written = regenerate_report(Path(args.in_dir), fmt=args.format)
            print(f"regenerated {len(written)} files in {args.in_dir}")
        else:  # pragma: no cover - argparse enforces choices
            raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScooterBenchError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
