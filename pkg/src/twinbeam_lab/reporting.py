"""Reproduction report: pipeline results tabulated against the published values.

Every comparison row states the published number, the reproduced value, the
tolerance rule it is judged by and a pass/fail verdict.  Statistical
tolerances are three reported standard errors; rows tied to published
round-off carry an explicit absolute allowance on top; the inferred-variance
rows are procedure-level checks (the individual-beam variances behind the
published product were never released), judged qualitatively and labeled as
such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .criteria import CriteriaReport, to_decibels
from .fitting import FitResult

# Published figures of merit being reproduced.
PUBLISHED = {
    "sp_minus": 0.63,
    "sq_plus": 0.84,
    "duan_sum": 1.47,
    "duan_sum_corrected": 1.26,
    "sp_minus_db": -2.0,
    "epr_product": 1.09,
    "epr_product_corrected": 0.91,
}
DB_ROUNDING_ALLOWANCE = 0.05
CORRECTED_SUM_ALLOWANCE = 0.01


@dataclass(frozen=True)
class ReportRow:
    name: str
    published: str
    reproduced: Optional[float]
    tolerance: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ReproductionReport:
    version: str
    seed: int
    quick: bool
    config_lines: tuple[str, ...]
    sum_fit: FitResult
    diff_fit: FitResult
    criteria: Optional[CriteriaReport]
    rows: tuple[ReportRow, ...]
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)


def comparison_rows(
    sum_fit: FitResult,
    diff_fit: FitResult,
    criteria: Optional[CriteriaReport],
    criteria_error: Optional[str] = None,
    stat_factor: float = 1.0,
) -> list[ReportRow]:
    """Build the comparison table.

    ``stat_factor`` widens every statistical tolerance (used by quick runs,
    where each window holds ten times fewer samples).  When the loss
    correction failed (efficiency inconsistent with the fitted data), the
    corrected rows are emitted as failed with the reason instead of aborting
    the table.
    """
    rows: list[ReportRow] = []

    def stat_tol(err: float) -> float:
        return 3.0 * stat_factor * err

    sp = diff_fit.s_p
    sp_err = diff_fit.s_p_err
    tol = stat_tol(sp_err)
    rows.append(ReportRow(
        name="amplitude-difference squeezing",
        published="0.63(1)",
        reproduced=sp,
        tolerance=f"|x - 0.63| <= 3 se = {tol:.3g}",
        passed=abs(sp - PUBLISHED["sp_minus"]) <= tol,
        detail=f"fit of the difference channel, se = {sp_err:.3g}",
    ))

    sq = sum_fit.s_q
    sq_err = sum_fit.s_q_err
    tol = stat_tol(sq_err)
    rows.append(ReportRow(
        name="phase-sum squeezing",
        published="0.84(2)",
        reproduced=sq,
        tolerance=f"|x - 0.84| <= 3 se = {tol:.3g}",
        passed=abs(sq - PUBLISHED["sq_plus"]) <= tol,
        detail=f"fit of the sum channel, se = {sq_err:.3g}",
    ))

    duan_sum = sp + sq
    duan_err = math.hypot(sp_err, sq_err)
    tol = stat_tol(duan_err)
    rows.append(ReportRow(
        name="inseparability sum",
        published="1.47(2) < 2",
        reproduced=duan_sum,
        tolerance=f"|x - 1.47| <= 3 se = {tol:.3g} and x < 2",
        passed=(abs(duan_sum - PUBLISHED["duan_sum"]) <= tol) and duan_sum < 2.0,
        detail=f"combined se = {duan_err:.3g}; entangled iff below 2",
    ))

    db = to_decibels(sp)
    db_err = (10.0 / math.log(10.0)) * sp_err / sp
    tol = DB_ROUNDING_ALLOWANCE + stat_tol(db_err)
    rows.append(ReportRow(
        name="amplitude-difference squeezing (dB)",
        published="-2.0 dB",
        reproduced=db,
        tolerance=f"|x + 2.0| <= 0.05 + 3 se = {tol:.3g}",
        passed=abs(db - PUBLISHED["sp_minus_db"]) <= tol,
        detail="0.05 dB allowance for the published one-decimal rounding",
    ))

    if criteria is not None:
        corr = criteria.duan_sum_corrected
        corr_err = criteria.duan_sum_corrected_err or 0.0
        tol = CORRECTED_SUM_ALLOWANCE + stat_tol(corr_err)
        rows.append(ReportRow(
            name="inseparability sum, loss-corrected",
            published="1.26(4)",
            reproduced=corr,
            tolerance=f"|x - 1.26| <= 0.01 + 3 se = {tol:.3g}",
            passed=abs(corr - PUBLISHED["duan_sum_corrected"]) <= tol,
            detail=f"corrected at efficiency {criteria.eta}",
        ))

        rows.append(ReportRow(
            name="inferred-variance product (symmetric assumption)",
            published="1.09(4), not violated",
            reproduced=criteria.epr_product,
            tolerance="qualitative: product >= 1 (no violation expected raw)",
            passed=criteria.epr_product >= 1.0,
            detail="published value rests on unpublished per-beam variances; "
                   "only the verdict is comparable",
        ))

        rows.append(ReportRow(
            name="inferred-variance product, loss-corrected (symmetric assumption)",
            published="0.91(5)",
            reproduced=criteria.epr_product_corrected,
            tolerance="qualitative: correction strictly decreases the product",
            passed=criteria.epr_product_corrected < criteria.epr_product,
            detail="procedure-level check of the loss-correction direction",
        ))
    else:
        reason = criteria_error or "criteria unavailable"
        for name, published in (
            ("inseparability sum, loss-corrected", "1.26(4)"),
            ("inferred-variance product (symmetric assumption)", "1.09(4), not violated"),
            ("inferred-variance product, loss-corrected (symmetric assumption)", "0.91(5)"),
        ):
            rows.append(ReportRow(
                name=name, published=published, reproduced=None,
                tolerance="n/a", passed=False, detail=reason,
            ))
    return rows


def _fit_lines(tag: str, res: FitResult) -> list[str]:
    lines = [
        f"fit.{tag}.s_p = {res.s_p:.6g}",
        f"fit.{tag}.s_p_err = {res.s_p_err:.3g}",
        f"fit.{tag}.s_q = {res.s_q:.6g}",
        f"fit.{tag}.s_q_err = {res.s_q_err:.3g}",
        f"fit.{tag}.scale = {res.scale:.6g}",
        f"fit.{tag}.scale_err = {res.scale_err:.3g}",
        f"fit.{tag}.center_mhz = {res.center_mhz:.6g}",
        f"fit.{tag}.center_err = {res.center_err:.3g}",
        f"fit.{tag}.reduced_chisq = {res.reduced_chisq:.6g}",
        f"fit.{tag}.iterations = {res.iterations}",
        f"fit.{tag}.final_step_norm = {res.final_step_norm:.3g}",
        f"fit.{tag}.converged = {str(res.converged).lower()}",
    ]
    if res.scale_pinned:
        lines.append(f"fit.{tag}.scale_pinned = true")
    if res.condition_warning:
        lines.append(f"fit.{tag}.warning = {res.condition_warning}")
    return lines


def _criteria_lines(rep: CriteriaReport) -> list[str]:
    def opt(v):
        return "n/a" if v is None else f"{v:.3g}"

    return [
        f"criteria.duan_sum = {rep.duan_sum:.6g}",
        f"criteria.duan_sum_err = {opt(rep.duan_sum_err)}",
        f"criteria.duan_violated = {str(rep.duan_violated).lower()}",
        f"criteria.duan_sum_corrected = {rep.duan_sum_corrected:.6g}",
        f"criteria.duan_sum_corrected_err = {opt(rep.duan_sum_corrected_err)}",
        f"criteria.duan_violated_corrected = {str(rep.duan_violated_corrected).lower()}",
        f"criteria.epr_p_inf = {rep.epr_p_inf:.6g}",
        f"criteria.epr_q_inf = {rep.epr_q_inf:.6g}",
        f"criteria.epr_product = {rep.epr_product:.6g}",
        f"criteria.epr_product_err = {opt(rep.epr_product_err)}",
        f"criteria.epr_violated = {str(rep.epr_violated).lower()}",
        f"criteria.epr_p_inf_corrected = {rep.epr_p_inf_corrected:.6g}",
        f"criteria.epr_q_inf_corrected = {rep.epr_q_inf_corrected:.6g}",
        f"criteria.epr_product_corrected = {rep.epr_product_corrected:.6g}",
        f"criteria.epr_product_corrected_err = {opt(rep.epr_product_corrected_err)}",
        f"criteria.epr_violated_corrected = {str(rep.epr_violated_corrected).lower()}",
        f"criteria.symmetric_assumption = {str(rep.symmetric_assumption).lower()}",
        f"criteria.eta = {rep.eta:.6g}",
    ]


def render_report(report: ReproductionReport) -> str:
    """Full text rendering: provenance, config echo, fits, criteria, table."""
    out: list[str] = []
    out.append("# twinbeam-lab reproduction report")
    out.append(f"version = {report.version}")
    out.append(f"seed = {report.seed}")
    out.append(f"quick = {str(report.quick).lower()}")
    out.append("")
    out.append("# effective configuration")
    out.extend(f"config.{line}" for line in report.config_lines)
    out.append("")
    out.append("# channel fits (sum then difference)")
    out.extend(_fit_lines("sum", report.sum_fit))
    out.extend(_fit_lines("difference", report.diff_fit))
    out.append("")
    if report.criteria is not None:
        out.append("# entanglement criteria")
        out.extend(_criteria_lines(report.criteria))
        out.append("")
    for note in report.notes:
        out.append(f"# note: {note}")
    out.append("# comparison against published values")
    for i, row in enumerate(report.rows, start=1):
        verdict = "PASS" if row.passed else "FAIL"
        value = "n/a" if row.reproduced is None else f"{row.reproduced:.6g}"
        out.append(f"row{i}.name = {row.name}")
        out.append(f"row{i}.published = {row.published}")
        out.append(f"row{i}.reproduced = {value}")
        out.append(f"row{i}.tolerance = {row.tolerance}")
        out.append(f"row{i}.verdict = {verdict}")
        if row.detail:
            out.append(f"row{i}.detail = {row.detail}")
    out.append("")
    out.append(f"all_rows_passed = {str(report.all_passed).lower()}")
    return "\n".join(out) + "\n"


def render_fit_report(
    sum_fit: FitResult,
    diff_fit: FitResult,
    criteria: Optional[CriteriaReport],
    criteria_error: Optional[str] = None,
) -> str:
    """Key-value report of a cmd-level fit (no comparison table)."""
    out = ["# twinbeam-lab fit report"]
    out.extend(_fit_lines("sum", sum_fit))
    out.extend(_fit_lines("difference", diff_fit))
    if criteria is not None:
        out.extend(_criteria_lines(criteria))
    elif criteria_error:
        out.append(f"criteria.error = {criteria_error}")
    return "\n".join(out) + "\n"
