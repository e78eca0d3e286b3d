"""Command-line front end.

Commands: ``scan`` (model curves), ``synth`` (synthetic dataset), ``fit``
(recover variances from a dataset), ``criteria`` (entanglement arithmetic on
given variances), ``report`` (full reproduction run with comparison table).

Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.
All state flows through flags and the config file; no environment variables.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import __version__
from .config import ConfigError, RunConfig, resolve_config
from .criteria import duan, to_decibels
from .fitting import FitError
from .pipeline import fitted_curve, run_fit, run_report, run_scan, run_synth
from .quadratures import UnphysicalVarianceError, correct_loss
from .reporting import render_fit_report, render_report
from .sweep import (
    CalibrationError,
    DatasetFormatError,
    SweepPlanError,
    read_dataset,
    write_dataset,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_OUT = {
    "scan": "scan.csv",
    "synth": "sweep.csv",
    "fit": "fit_report.txt",
    "report": "report.txt",
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value config file")
    common.add_argument("--seed", type=int, metavar="U64",
                        help="override the reproducibility seed")
    common.add_argument("--out", metavar="PATH", help="output file path")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config entry (repeatable)")
    common.add_argument("--quick", action="store_true",
                        help="10x fewer samples per window, wider tolerances")

    parser = argparse.ArgumentParser(
        prog="twinbeam-lab",
        description="Two-color twin-beam entanglement measurement lab",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("scan", parents=[common],
                   help="write model sum/difference curves as CSV")
    sub.add_parser("synth", parents=[common],
                   help="synthesize a swept-cavity dataset as CSV")

    fit_p = sub.add_parser("fit", parents=[common],
                           help="fit a dataset and report the criteria")
    fit_p.add_argument("dataset", metavar="DATASET_CSV", help="dataset file to fit")

    crit = sub.add_parser("criteria", parents=[common],
                          help="evaluate the inseparability sum from given variances")
    crit.add_argument("--sp-minus", type=float, metavar="VAR",
                      help="variance of the amplitude-difference quadrature")
    crit.add_argument("--sq-plus", type=float, metavar="VAR",
                      help="variance of the phase-sum quadrature")
    crit.add_argument("--sp-plus", type=float, metavar="VAR",
                      help="alternate pairing: amplitude-sum variance")
    crit.add_argument("--sq-minus", type=float, metavar="VAR",
                      help="alternate pairing: phase-difference variance")
    crit.add_argument("--eta", type=float, metavar="EFF",
                      help="overall detection efficiency for --corrected")
    crit.add_argument("--corrected", action="store_true",
                      help="also report the loss-corrected sum")

    sub.add_parser("report", parents=[common],
                   help="full reproduction run with the comparison table")
    return parser


def _overrides(pairs: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        out[key.strip()] = value.strip()
    return out


def _load_config(args) -> RunConfig:
    text = None
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise ConfigError(f"--seed must be a 64-bit unsigned integer, got {args.seed}")
    return resolve_config(text, _overrides(args.set), seed=args.seed)


def _quick(config: RunConfig) -> RunConfig:
    return replace(
        config,
        vbw_khz=config.vbw_khz * 10.0,
        raw_items={**config.raw_items, "sweep.vbw_khz": str(config.vbw_khz * 10.0)},
    )


def _out_path(args) -> Path:
    return Path(args.out if args.out else DEFAULT_OUT[args.command])


def _cmd_scan(args) -> int:
    config = _load_config(args)
    curve = run_scan(config)
    path = _out_path(args)
    path.write_text(curve.to_csv(), encoding="utf-8")
    print(f"wrote model curves to {path}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    config = _load_config(args)
    if args.quick:
        config = _quick(config)
    dataset = run_synth(config)
    path = _out_path(args)
    write_dataset(dataset, path)
    msg = f"wrote dataset ({dataset.delta_mhz.size} windows) to {path}"
    if dataset.skipped_mhz:
        msg += f"; skipped {len(dataset.skipped_mhz)} singular grid point(s)"
    print(msg)
    return EXIT_OK


def _cmd_fit(args) -> int:
    config = _load_config(args)
    ds_path = Path(args.dataset)
    if not ds_path.exists():
        raise ConfigError(f"dataset file not found: {ds_path}")
    dataset = read_dataset(ds_path)
    outcome = run_fit(config, dataset)
    path = _out_path(args)
    path.write_text(
        render_fit_report(outcome.sum_fit, outcome.diff_fit,
                          outcome.criteria, outcome.criteria_error),
        encoding="utf-8",
    )
    curve_path = path.with_name(path.stem + "_curve.csv")
    curve_path.write_text(fitted_curve(config, outcome, dataset).to_csv(), encoding="utf-8")
    print(f"wrote fit report to {path} and fitted curves to {curve_path}")
    if outcome.criteria is not None:
        d = outcome.criteria
        verdict = "VIOLATED" if d.duan_violated else "NOT VIOLATED"
        print(f"inseparability sum (p-, q+): {d.duan_sum:.2f} {verdict} (< 2)")
    return EXIT_OK


def _fmt_duan(label: str, a: float, b: float) -> str:
    result = duan(a, b)
    verdict = "VIOLATED" if result.violated else "NOT VIOLATED"
    return f"{label}: {result.sum:.2f} {verdict} (< 2)"


def _cmd_criteria(args) -> int:
    lines: list[str] = []
    main_pair = args.sp_minus is not None or args.sq_plus is not None
    alt_pair = args.sp_plus is not None or args.sq_minus is not None
    if main_pair:
        if args.sp_minus is None or args.sq_plus is None:
            missing = "--sp-minus" if args.sp_minus is None else "--sq-plus"
            raise ConfigError(f"missing required field {missing}")
        lines.append(_fmt_duan("inseparability sum (p-, q+)",
                               args.sp_minus, args.sq_plus))
        lines.append(
            f"amplitude-difference squeezing: {to_decibels(args.sp_minus):.2f} dB"
        )
        if args.corrected:
            if args.eta is None:
                raise ConfigError("--corrected requires --eta")
            lines.append(_fmt_duan(
                f"inseparability sum (p-, q+), corrected at eta = {args.eta:g}",
                correct_loss(args.sp_minus, args.eta),
                correct_loss(args.sq_plus, args.eta),
            ))
    if alt_pair:
        if args.sp_plus is None or args.sq_minus is None:
            missing = "--sp-plus" if args.sp_plus is None else "--sq-minus"
            raise ConfigError(f"missing required field {missing}")
        lines.append(_fmt_duan("inseparability sum, alternate pairing (p+, q-)",
                               args.sp_plus, args.sq_minus))
        if args.corrected:
            if args.eta is None:
                raise ConfigError("--corrected requires --eta")
            lines.append(_fmt_duan(
                f"inseparability sum, alternate pairing (p+, q-), corrected at eta = {args.eta:g}",
                correct_loss(args.sp_plus, args.eta),
                correct_loss(args.sq_minus, args.eta),
            ))
    if not lines:
        raise ConfigError(
            "missing required field --sp-minus/--sq-plus (or the alternate "
            "pairing --sp-plus/--sq-minus)"
        )
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_report(args) -> int:
    config = _load_config(args)
    report = run_report(config, quick=args.quick)
    path = _out_path(args)
    path.write_text(render_report(report), encoding="utf-8")
    passed = sum(r.passed for r in report.rows)
    print(f"wrote reproduction report to {path} "
          f"({passed}/{len(report.rows)} comparison rows passed)")
    return EXIT_OK


_COMMANDS = {
    "scan": _cmd_scan,
    "synth": _cmd_synth,
    "fit": _cmd_fit,
    "criteria": _cmd_criteria,
    "report": _cmd_report,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DatasetFormatError, SweepPlanError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, CalibrationError, UnphysicalVarianceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
