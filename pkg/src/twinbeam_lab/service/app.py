"""HTTP service wrapping the pipeline.

Stateless request/response endpoints over the same orchestration functions
the CLI uses.  Run with e.g.:

    uvicorn twinbeam_lab.service.app:app --port 8000

Input problems map to 400 (configuration) or 422 (schema validation, via
FastAPI); numerical failures such as a non-converging fit map to 409.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import ConfigError
from ..criteria import duan, to_decibels
from ..fitting import FitError, FitResult
from ..pipeline import FitOutcome, fitted_curve, run_fit, run_report, run_scan, run_synth
from ..quadratures import UnphysicalVarianceError, correct_loss
from ..reporting import render_fit_report, render_report
from ..sweep import DatasetFormatError, SweepPlanError, dumps_dataset, loads_dataset
from . import schemas

app = FastAPI(
    title="twinbeam-lab",
    description="Two-color twin-beam entanglement measurement lab",
    version=__version__,
)


def _config_or_400(request: schemas.RunRequest):
    try:
        return request.resolve()
    except (ConfigError, SweepPlanError, UnphysicalVarianceError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None


def _channel_fit(res: FitResult) -> schemas.ChannelFit:
    return schemas.ChannelFit(
        channel=res.channel,
        s_p=res.s_p, s_p_err=res.s_p_err,
        s_q=res.s_q, s_q_err=res.s_q_err,
        scale=res.scale, scale_err=res.scale_err,
        center_mhz=res.center_mhz, center_err=res.center_err,
        reduced_chisq=res.reduced_chisq,
        iterations=res.iterations,
        converged=res.converged,
        scale_pinned=res.scale_pinned,
        condition_warning=res.condition_warning,
    )


def _criteria_summary(outcome: FitOutcome):
    if outcome.criteria is None:
        return None
    c = outcome.criteria
    return schemas.CriteriaSummary(
        eta=c.eta,
        duan_sum=c.duan_sum, duan_sum_err=c.duan_sum_err,
        duan_violated=c.duan_violated,
        duan_sum_corrected=c.duan_sum_corrected,
        duan_sum_corrected_err=c.duan_sum_corrected_err,
        duan_violated_corrected=c.duan_violated_corrected,
        epr_p_inf=c.epr_p_inf, epr_q_inf=c.epr_q_inf,
        epr_product=c.epr_product, epr_product_err=c.epr_product_err,
        epr_violated=c.epr_violated,
        epr_p_inf_corrected=c.epr_p_inf_corrected,
        epr_q_inf_corrected=c.epr_q_inf_corrected,
        epr_product_corrected=c.epr_product_corrected,
        epr_product_corrected_err=c.epr_product_corrected_err,
        epr_violated_corrected=c.epr_violated_corrected,
        symmetric_assumption=c.symmetric_assumption,
        notes=list(c.notes),
    )


@app.get("/health", response_model=schemas.HealthResponse)
def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/scan", response_model=schemas.ScanResponse)
def scan(request: schemas.ScanRequest) -> schemas.ScanResponse:
    config = _config_or_400(request)
    curve = run_scan(config, points=request.points)
    points = [
        schemas.CurvePoint(
            detuning_mhz=float(curve.delta_mhz[i]),
            detuning_over_bandwidth=float(curve.delta_mhz[i] / curve.bandwidth_mhz),
            s_sum=float(curve.s_sum[i]),
            s_diff=float(curve.s_diff[i]),
        )
        for i in range(curve.delta_mhz.size)
    ]
    return schemas.ScanResponse(points=points, csv=curve.to_csv())


@app.post("/synth", response_model=schemas.SynthResponse)
def synth(request: schemas.SynthRequest) -> schemas.SynthResponse:
    config = _config_or_400(request)
    dataset = run_synth(config, raw_chain=request.raw_chain)
    return schemas.SynthResponse(
        windows=int(dataset.delta_mhz.size),
        samples_per_window=dataset.plan.samples_per_window,
        skipped_detunings_mhz=list(dataset.skipped_mhz),
        csv=dumps_dataset(dataset),
    )


@app.post("/fit", response_model=schemas.FitResponse)
def fit_endpoint(request: schemas.FitRequest) -> schemas.FitResponse:
    config = _config_or_400(request)
    try:
        dataset = loads_dataset(request.dataset_csv)
    except DatasetFormatError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    try:
        outcome = run_fit(config, dataset)
    except FitError as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from None
    return schemas.FitResponse(
        sum_fit=_channel_fit(outcome.sum_fit),
        difference_fit=_channel_fit(outcome.diff_fit),
        criteria=_criteria_summary(outcome),
        criteria_error=outcome.criteria_error,
        report_text=render_fit_report(outcome.sum_fit, outcome.diff_fit,
                                      outcome.criteria, outcome.criteria_error),
        curve_csv=fitted_curve(config, outcome, dataset).to_csv(),
    )


@app.post("/criteria", response_model=schemas.CriteriaResponse)
def criteria_endpoint(request: schemas.CriteriaRequest) -> schemas.CriteriaResponse:
    result = duan(request.sp_minus, request.sq_plus)
    response = schemas.CriteriaResponse(
        duan_sum=result.sum,
        duan_violated=result.violated,
        sp_minus_db=to_decibels(request.sp_minus),
    )
    if request.corrected:
        if request.eta is None:
            raise HTTPException(status_code=400, detail="corrected=true requires eta")
        try:
            corrected = duan(
                correct_loss(request.sp_minus, request.eta),
                correct_loss(request.sq_plus, request.eta),
            )
        except UnphysicalVarianceError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        response.duan_sum_corrected = corrected.sum
        response.duan_violated_corrected = corrected.violated
    return response


@app.post("/report", response_model=schemas.ReportResponse)
def report_endpoint(request: schemas.ReportRequest) -> schemas.ReportResponse:
    config = _config_or_400(request)
    try:
        report = run_report(config, quick=request.quick)
    except FitError as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from None
    rows = [
        schemas.ComparisonRow(
            name=r.name, published=r.published, reproduced=r.reproduced,
            tolerance=r.tolerance, passed=r.passed, detail=r.detail,
        )
        for r in report.rows
    ]
    criteria = None
    if report.criteria is not None:
        criteria = _criteria_summary(
            FitOutcome(report.sum_fit, report.diff_fit, report.criteria)
        )
    return schemas.ReportResponse(
        version=report.version,
        seed=report.seed,
        quick=report.quick,
        all_rows_passed=report.all_passed,
        rows=rows,
        sum_fit=_channel_fit(report.sum_fit),
        difference_fit=_channel_fit(report.diff_fit),
        criteria=criteria,
        report_text=render_report(report),
    )
