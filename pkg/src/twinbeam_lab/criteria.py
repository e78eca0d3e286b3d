"""Entanglement criteria for the twin beams.

Two tests are evaluated: the inseparability sum of the difference-of-amplitude
and sum-of-phase variances (entangled when the sum drops below 2), and the
inferred-variance product (EPR-type correlations when the product drops below
1).  Both are computed from shot-noise-normalized variances; decibels are a
presentation conversion only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

from .quadratures import (
    CombinedQuadratures,
    TwinBeamCovariance,
    combine,
    correct_loss,
    correct_loss_covariance,
)

DUAN_BOUND = 2.0
EPR_BOUND = 1.0


class DuanResult(NamedTuple):
    sum: float
    violated: bool


class EprResult(NamedTuple):
    product: float
    violated: bool


def duan(sp_minus: float, sq_plus: float) -> DuanResult:
    """Inseparability sum of the two squeezed combinations.

    Entanglement is certified when sp_minus + sq_plus < 2 (shot noise
    normalized to 1 for each combined quadrature).
    """
    if not (sp_minus > 0.0 and sq_plus > 0.0):
        raise ValueError(f"variances must be > 0, got ({sp_minus}, {sq_plus})")
    total = sp_minus + sq_plus
    return DuanResult(total, total < DUAN_BOUND)


def epr_inferred(v1: float, v2: float, c: float) -> float:
    """Variance of beam 1 inferred from a measurement on beam 2.

    v1 * (1 - c^2 / (v1 v2)): an uncorrelated pair gives back v1, a
    perfectly correlated pair allows perfect inference (0).
    """
    if not (v1 > 0.0 and v2 > 0.0):
        raise ValueError(f"variances must be > 0, got ({v1}, {v2})")
    if c * c > v1 * v2 * (1.0 + 1e-12):
        raise ValueError(f"|c| = {abs(c):.6g} exceeds sqrt(v1*v2) = {math.sqrt(v1 * v2):.6g}")
    return v1 * (1.0 - c * c / (v1 * v2))


def epr_pair(cov: TwinBeamCovariance) -> tuple[float, float]:
    """Inferred variances of the p and q sectors."""
    return (
        epr_inferred(cov.vp1, cov.vp2, cov.cp),
        epr_inferred(cov.vq1, cov.vq2, cov.cq),
    )


def epr_product(cov: TwinBeamCovariance) -> EprResult:
    """Product of the inferred p and q variances; EPR correlations when < 1."""
    p_inf, q_inf = epr_pair(cov)
    product = p_inf * q_inf
    return EprResult(product, product < EPR_BOUND)


def to_decibels(v: float) -> float:
    """Variance in dB relative to the shot-noise level."""
    if not v > 0.0:
        raise ValueError(f"variance must be > 0, got {v}")
    return 10.0 * math.log10(v)


def from_decibels(db: float) -> float:
    """Inverse of :func:`to_decibels`."""
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class CriteriaReport:
    """Both criteria, raw and loss-corrected, with propagated uncertainties.

    Uncertainty fields are None when no input errors were supplied.  When the
    report was assembled from combined variances only, the inferred-variance
    entries rest on the identical-beams decomposition and
    ``symmetric_assumption`` is set.
    """

    eta: float
    duan_sum: float
    duan_violated: bool
    epr_p_inf: float
    epr_q_inf: float
    epr_product: float
    epr_violated: bool
    duan_sum_corrected: float
    duan_violated_corrected: bool
    epr_p_inf_corrected: float
    epr_q_inf_corrected: float
    epr_product_corrected: float
    epr_violated_corrected: bool
    symmetric_assumption: bool = False
    duan_sum_err: Optional[float] = None
    duan_sum_corrected_err: Optional[float] = None
    epr_product_err: Optional[float] = None
    epr_product_corrected_err: Optional[float] = None
    notes: tuple[str, ...] = field(default_factory=tuple)


def propagate_errors(
    fn: Callable[[Sequence[float]], float],
    values: Sequence[float],
    sigmas: Sequence[float],
    rel_step: float = 1e-6,
) -> float:
    """First-order uncertainty of fn(values) by central finite differences."""
    values = list(values)
    total = 0.0
    for i, (v, s) in enumerate(zip(values, sigmas)):
        if s == 0.0:
            continue
        h = rel_step * max(abs(v), 1e-3)
        hi = list(values)
        lo = list(values)
        hi[i] = v + h
        lo[i] = v - h
        grad = (fn(hi) - fn(lo)) / (2.0 * h)
        total += (grad * s) ** 2
    return math.sqrt(total)


def evaluate_criteria(cov: TwinBeamCovariance, eta: float) -> CriteriaReport:
    """Criteria report from a full twin-beam covariance.

    Raw values use the covariance as given (the state arriving at the
    detection chain); corrected values invert the loss channel at the stated
    overall efficiency first.
    """
    comb = combine(cov)
    d = duan(comb.sp_minus, comb.sq_plus)
    p_inf, q_inf = epr_pair(cov)
    e = epr_product(cov)

    cov_c = correct_loss_covariance(cov, eta)
    comb_c = combine(cov_c)
    d_c = duan(comb_c.sp_minus, comb_c.sq_plus)
    p_inf_c, q_inf_c = epr_pair(cov_c)
    e_c = epr_product(cov_c)

    return CriteriaReport(
        eta=eta,
        duan_sum=d.sum, duan_violated=d.violated,
        epr_p_inf=p_inf, epr_q_inf=q_inf,
        epr_product=e.product, epr_violated=e.violated,
        duan_sum_corrected=d_c.sum, duan_violated_corrected=d_c.violated,
        epr_p_inf_corrected=p_inf_c, epr_q_inf_corrected=q_inf_c,
        epr_product_corrected=e_c.product, epr_violated_corrected=e_c.violated,
    )


def criteria_from_combined(
    combined: CombinedQuadratures,
    eta: float,
    errors: Optional[CombinedQuadratures] = None,
) -> CriteriaReport:
    """Criteria report from combined variances alone (e.g. fit results).

    The inferred-variance product requires per-beam variances, which combined
    quantities do not determine; the identical-beams decomposition is applied
    and flagged.  For symmetric beams the product collapses to the closed form

        (sp_plus*sp_minus/vp) * (sq_plus*sq_minus/vq),
        vp = (sp_plus + sp_minus)/2,  vq = (sq_plus + sq_minus)/2.

    When ``errors`` carries one-sigma uncertainties of the four combined
    variances, first-order propagated uncertainties are filled in.
    """
    cov = TwinBeamCovariance.from_combined(combined)
    report = replace(
        evaluate_criteria(cov, eta),
        symmetric_assumption=True,
        notes=(
            "inferred-variance entries assume identical beams (only the "
            "combined variances were measured)",
        ),
    )

    if errors is not None:
        vals = [combined.sp_plus, combined.sp_minus, combined.sq_plus, combined.sq_minus]
        sigs = [errors.sp_plus, errors.sp_minus, errors.sq_plus, errors.sq_minus]

        def raw_product(v):
            c = TwinBeamCovariance.from_combined(CombinedQuadratures(*v))
            return epr_product(c).product

        def corrected_product(v):
            c = TwinBeamCovariance.from_combined(CombinedQuadratures(*v))
            return epr_product(correct_loss_covariance(c, eta)).product

        report = replace(
            report,
            duan_sum_err=math.hypot(errors.sp_minus, errors.sq_plus),
            duan_sum_corrected_err=math.hypot(errors.sp_minus, errors.sq_plus) / eta,
            epr_product_err=propagate_errors(raw_product, vals, sigs),
            epr_product_corrected_err=propagate_errors(corrected_product, vals, sigs),
        )

    return report


def duan_corrected(sp_minus: float, sq_plus: float, eta: float) -> DuanResult:
    """Inseparability sum after inverting the detection loss on both entries."""
    return duan(correct_loss(sp_minus, eta), correct_loss(sq_plus, eta))
