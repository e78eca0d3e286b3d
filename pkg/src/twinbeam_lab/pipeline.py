"""End-to-end orchestration shared by the CLI and the HTTP service.

Each stage is a pure function of a resolved RunConfig (plus a dataset where
one is consumed), so the two front ends cannot drift apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig
from .criteria import CriteriaReport
from .fitting import FitError, FitProblem, FitResult, fit, fit_report, multi_start
from .noise_model import channel_spectrum
from .quadratures import TwinBeamCovariance, UnphysicalVarianceError
from .reporting import ReproductionReport, comparison_rows
from .sweep import SweepDataset, format_positional6, synthesize_sweep

SCAN_CSV_HEADER = "detuning_mhz,detuning_over_bandwidth,s_sum,s_diff"


@dataclass(frozen=True)
class ScanCurve:
    """Model sum/difference spectra over a detuning grid."""

    delta_mhz: np.ndarray
    s_sum: np.ndarray
    s_diff: np.ndarray
    bandwidth_mhz: float

    def to_csv(self) -> str:
        lines = [SCAN_CSV_HEADER]
        for i in range(self.delta_mhz.size):
            d = self.delta_mhz[i]
            lines.append(
                f"{format_positional6(d)},{format_positional6(d / self.bandwidth_mhz)},"
                f"{format_positional6(self.s_sum[i])},{format_positional6(self.s_diff[i])}"
            )
        return "\n".join(lines) + "\n"


def run_scan(config: RunConfig, points: Optional[int] = None) -> ScanCurve:
    """Evaluate the detected model spectra on the configured grid."""
    n = points if points is not None else config.sweep_points
    deltas = np.linspace(config.sweep_start_mhz, config.sweep_end_mhz, n)
    cov = config.covariance
    s_sum = channel_spectrum(config.channel_model("sum"), cov, deltas)
    s_diff = channel_spectrum(config.channel_model("difference"), cov, deltas)
    return ScanCurve(
        delta_mhz=deltas,
        s_sum=np.asarray(s_sum),
        s_diff=np.asarray(s_diff),
        bandwidth_mhz=config.cavity1.bandwidth_mhz,
    )


def run_synth(config: RunConfig, raw_chain: bool = False) -> SweepDataset:
    """Synthesize one dataset from the configured plan, model and covariance."""
    return synthesize_sweep(
        config.plan(), config.channel_model("sum"), config.covariance,
        raw_chain=raw_chain,
    )


@dataclass(frozen=True)
class FitOutcome:
    sum_fit: FitResult
    diff_fit: FitResult
    criteria: Optional[CriteriaReport]
    criteria_error: Optional[str] = None


def run_fit(config: RunConfig, dataset: SweepDataset) -> FitOutcome:
    """Fit both channels of a dataset and assemble the criteria.

    Cavity parameters, analysis frequency and efficiency come from the
    configuration (they are independently known constants of the fit).  A
    channel that fails from the default start is retried with a seeded
    multi-start before giving up.  A loss correction made impossible by an
    inconsistent efficiency is reported, not raised, so the raw results
    survive.
    """
    results = {}
    for channel in ("sum", "difference"):
        problem = FitProblem(
            dataset=dataset,
            channel=channel,
            cavity1=config.cavity1,
            cavity2=config.cavity2,
            omega_mhz=config.omega_mhz,
            efficiency=config.efficiency,
        )
        try:
            results[channel] = fit(problem)
        except FitError:
            results[channel] = multi_start(problem, n_starts=8, seed=config.seed)

    criteria = None
    criteria_error = None
    try:
        criteria = fit_report(results["sum"], results["difference"], config.efficiency)
    except UnphysicalVarianceError as exc:
        criteria_error = str(exc)
    return FitOutcome(results["sum"], results["difference"], criteria, criteria_error)


def fitted_curve(config: RunConfig, outcome: FitOutcome, dataset: SweepDataset) -> ScanCurve:
    """Fitted model curves evaluated on the dataset grid (for plotting)."""
    deltas = dataset.delta_mhz

    def curve(res: FitResult, channel: str) -> np.ndarray:
        cov = TwinBeamCovariance.symmetric(res.s_p, res.s_q, 0.0, 0.0)
        return res.scale * channel_spectrum(
            config.channel_model(channel), cov, deltas - res.center_mhz
        )

    return ScanCurve(
        delta_mhz=deltas,
        s_sum=curve(outcome.sum_fit, "sum"),
        s_diff=curve(outcome.diff_fit, "difference"),
        bandwidth_mhz=config.cavity1.bandwidth_mhz,
    )


def run_report(config: RunConfig, quick: bool = False) -> ReproductionReport:
    """Full reproduction: synthesize, fit, evaluate criteria, tabulate.

    quick mode divides the samples per window by ten (video bandwidth times
    ten) and widens every statistical tolerance by sqrt(10), labeled as such.
    """
    if quick:
        config = replace(config, vbw_khz=config.vbw_khz * 10.0,
                         raw_items={**config.raw_items,
                                    "sweep.vbw_khz": str(config.vbw_khz * 10.0)})
    dataset = run_synth(config)
    outcome = run_fit(config, dataset)
    stat_factor = math.sqrt(10.0) if quick else 1.0
    rows = comparison_rows(
        outcome.sum_fit, outcome.diff_fit, outcome.criteria,
        criteria_error=outcome.criteria_error, stat_factor=stat_factor,
    )
    notes = []
    if quick:
        notes.append("quick run: 10x fewer samples per window, statistical "
                     "tolerances widened by sqrt(10)")
    if dataset.skipped_mhz:
        notes.append(f"skipped {len(dataset.skipped_mhz)} singular grid point(s)")
    return ReproductionReport(
        version=__version__,
        seed=config.seed,
        quick=quick,
        config_lines=tuple(config.echo_lines()),
        sum_fit=outcome.sum_fit,
        diff_fit=outcome.diff_fit,
        criteria=outcome.criteria,
        rows=tuple(rows),
        notes=tuple(notes),
    )
