"""Request/response models of the HTTP service.

Requests mirror the flat configuration: every field is optional and falls
back to the shipped paper-settings defaults, so an empty request body runs
the default reproduction.  Responses are plain JSON-serializable summaries;
dataset payloads travel as CSV text in the documented file format.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field

from ..config import RunConfig, resolve_config


class ConfigOverrides(BaseModel):
    """Flat config overrides, same keys as the config file."""

    model_config = {"extra": "forbid"}

    cavity1_r1: Optional[float] = Field(None, alias="cavity1.r1")
    cavity1_loss: Optional[float] = Field(None, alias="cavity1.loss")
    cavity1_bandwidth_mhz: Optional[float] = Field(None, alias="cavity1.bandwidth_mhz")
    cavity2_r1: Optional[float] = Field(None, alias="cavity2.r1")
    cavity2_loss: Optional[float] = Field(None, alias="cavity2.loss")
    cavity2_bandwidth_mhz: Optional[float] = Field(None, alias="cavity2.bandwidth_mhz")
    analysis_omega_mhz: Optional[float] = Field(None, alias="analysis.omega_mhz")
    detection_efficiency: Optional[float] = Field(None, alias="detection.efficiency")
    combined_sp_plus: Optional[float] = Field(None, alias="combined.sp_plus")
    combined_sp_minus: Optional[float] = Field(None, alias="combined.sp_minus")
    combined_sq_plus: Optional[float] = Field(None, alias="combined.sq_plus")
    combined_sq_minus: Optional[float] = Field(None, alias="combined.sq_minus")
    covariance_vp1: Optional[float] = Field(None, alias="covariance.vp1")
    covariance_vp2: Optional[float] = Field(None, alias="covariance.vp2")
    covariance_vq1: Optional[float] = Field(None, alias="covariance.vq1")
    covariance_vq2: Optional[float] = Field(None, alias="covariance.vq2")
    covariance_cp: Optional[float] = Field(None, alias="covariance.cp")
    covariance_cq: Optional[float] = Field(None, alias="covariance.cq")
    sweep_start_mhz: Optional[float] = Field(None, alias="sweep.start_mhz")
    sweep_end_mhz: Optional[float] = Field(None, alias="sweep.end_mhz")
    sweep_points: Optional[int] = Field(None, alias="sweep.points")
    sweep_rbw_khz: Optional[float] = Field(None, alias="sweep.rbw_khz")
    sweep_vbw_khz: Optional[float] = Field(None, alias="sweep.vbw_khz")
    seed: Optional[int] = None

    def as_flat(self) -> dict[str, str]:
        flat: dict[str, str] = {}
        for name, f in type(self).model_fields.items():
            value = getattr(self, name)
            if value is not None:
                flat[f.alias or name] = str(value)
        return flat


class RunRequest(BaseModel):
    """Common request body: optional overrides plus an optional seed."""

    model_config = {"extra": "forbid"}

    config: ConfigOverrides = Field(default_factory=ConfigOverrides)
    seed: Optional[int] = None

    def resolve(self) -> RunConfig:
        return resolve_config(None, self.config.as_flat(), seed=self.seed)


class ScanRequest(RunRequest):
    points: Optional[int] = Field(None, ge=2, description="grid size override")


class CurvePoint(BaseModel):
    detuning_mhz: float
    detuning_over_bandwidth: float
    s_sum: float
    s_diff: float


class ScanResponse(BaseModel):
    points: list[CurvePoint]
    csv: str


class SynthRequest(RunRequest):
    raw_chain: bool = False


class SynthResponse(BaseModel):
    windows: int
    samples_per_window: int
    skipped_detunings_mhz: list[float]
    csv: str


class FitRequest(RunRequest):
    dataset_csv: str = Field(description="dataset in the documented CSV format")


class ChannelFit(BaseModel):
    channel: str
    s_p: float
    s_p_err: float
    s_q: float
    s_q_err: float
    scale: float
    scale_err: float
    center_mhz: float
    center_err: float
    reduced_chisq: float
    iterations: int
    converged: bool
    scale_pinned: bool
    condition_warning: Optional[str] = None


class CriteriaSummary(BaseModel):
    eta: float
    duan_sum: float
    duan_sum_err: Optional[float] = None
    duan_violated: bool
    duan_sum_corrected: float
    duan_sum_corrected_err: Optional[float] = None
    duan_violated_corrected: bool
    epr_p_inf: float
    epr_q_inf: float
    epr_product: float
    epr_product_err: Optional[float] = None
    epr_violated: bool
    epr_p_inf_corrected: float
    epr_q_inf_corrected: float
    epr_product_corrected: float
    epr_product_corrected_err: Optional[float] = None
    epr_violated_corrected: bool
    symmetric_assumption: bool
    notes: list[str] = []


class FitResponse(BaseModel):
    sum_fit: ChannelFit
    difference_fit: ChannelFit
    criteria: Optional[CriteriaSummary] = None
    criteria_error: Optional[str] = None
    report_text: str
    curve_csv: str


class CriteriaRequest(BaseModel):
    model_config = {"extra": "forbid"}

    sp_minus: float = Field(gt=0)
    sq_plus: float = Field(gt=0)
    eta: Optional[float] = Field(None, gt=0, le=1)
    corrected: bool = False


class CriteriaResponse(BaseModel):
    duan_sum: float
    duan_violated: bool
    sp_minus_db: float
    duan_sum_corrected: Optional[float] = None
    duan_violated_corrected: Optional[bool] = None


class ReportRequest(RunRequest):
    quick: bool = False


class ComparisonRow(BaseModel):
    name: str
    published: str
    reproduced: Optional[float] = None
    tolerance: str
    passed: bool
    detail: str = ""


class ReportResponse(BaseModel):
    version: str
    seed: int
    quick: bool
    all_rows_passed: bool
    rows: list[ComparisonRow]
    sum_fit: ChannelFit
    difference_fit: ChannelFit
    criteria: Optional[CriteriaSummary] = None
    report_text: str


class HealthResponse(BaseModel):
    status: str
    version: str
