"""Second-moment bookkeeping for the twin beams.

All variances are in shot-noise units: a coherent state has unit variance
in both the amplitude (p) and phase (q) quadratures.  Beam-combination and
detection-loss algebra lives here; nothing in this module knows about
cavities or spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UnphysicalVarianceError(ValueError):
    """A variance or efficiency fell outside its physical domain."""


@dataclass(frozen=True)
class TwinBeamCovariance:
    """Second moments of the two beams' amplitude/phase quadratures.

    vp1/vp2 and vq1/vq2 are the per-beam amplitude and phase variances,
    cp = <dp1 dp2> and cq = <dq1 dq2> the cross-beam correlations.  Cross
    terms between p of one beam and q of the other (and p-q within a beam)
    are fixed at zero in this model.  Construction is permissive; use
    :func:`validate_physicality` to check the quantum-mechanical bounds.
    """

    vp1: float
    vp2: float
    vq1: float
    vq2: float
    cp: float
    cq: float

    @classmethod
    def identity(cls) -> "TwinBeamCovariance":
        """Two independent coherent beams (everything at the shot-noise level)."""
        return cls(1.0, 1.0, 1.0, 1.0, 0.0, 0.0)

    @classmethod
    def symmetric(cls, vp: float, vq: float, cp: float, cq: float) -> "TwinBeamCovariance":
        """Beams with identical single-beam moments."""
        return cls(vp, vp, vq, vq, cp, cq)

    @classmethod
    def from_combined(cls, combined: "CombinedQuadratures") -> "TwinBeamCovariance":
        """Symmetric covariance reproducing given combined variances.

        The decomposition assumes identical beams (vp1 = vp2, vq1 = vq2),
        which is the only one determined by combined quantities alone.
        """
        q = combined
        for name, v in (("sp_plus", q.sp_plus), ("sp_minus", q.sp_minus),
                        ("sq_plus", q.sq_plus), ("sq_minus", q.sq_minus)):
            if not v > 0.0:
                raise UnphysicalVarianceError(f"{name} must be > 0, got {v}")
        vp = 0.5 * (q.sp_plus + q.sp_minus)
        vq = 0.5 * (q.sq_plus + q.sq_minus)
        cp = 0.5 * (q.sp_plus - q.sp_minus)
        cq = 0.5 * (q.sq_plus - q.sq_minus)
        return cls.symmetric(vp, vq, cp, cq)


@dataclass(frozen=True)
class CombinedQuadratures:
    """Variances of the sum/difference quadratures (p1 +/- p2)/sqrt(2) etc."""

    sp_plus: float
    sp_minus: float
    sq_plus: float
    sq_minus: float


def combine(cov: TwinBeamCovariance) -> CombinedQuadratures:
    """Variances of the four combined quadratures of a twin-beam state.

    Plain variance algebra of (x1 +/- x2)/sqrt(2):
    S± = (V1 + V2 ± 2 C) / 2 in each of the p and q sectors.
    """
    return CombinedQuadratures(
        sp_plus=0.5 * (cov.vp1 + cov.vp2 + 2.0 * cov.cp),
        sp_minus=0.5 * (cov.vp1 + cov.vp2 - 2.0 * cov.cp),
        sq_plus=0.5 * (cov.vq1 + cov.vq2 + 2.0 * cov.cq),
        sq_minus=0.5 * (cov.vq1 + cov.vq2 - 2.0 * cov.cq),
    )


def _check_efficiency(eta: float) -> None:
    if not 0.0 < eta <= 1.0:
        raise UnphysicalVarianceError(f"efficiency must be in (0, 1], got {eta}")


def apply_loss(v, eta: float):
    """Variance seen after a beam-splitter loss channel of efficiency eta.

    v -> eta*(v - 1) + 1.  Vacuum (v = 1) is a fixed point; any excess or
    deficit relative to shot noise is pulled toward 1 by the factor eta.
    Accepts scalars or arrays.
    """
    _check_efficiency(eta)
    return eta * (v - 1.0) + 1.0


def correct_loss(v_measured, eta: float):
    """Source variance inferred from a measured one at known efficiency.

    Inverse of :func:`apply_loss`: v -> (v - 1)/eta + 1.  A measurement at
    or below the vacuum admixture floor 1 - eta would imply a non-positive
    source variance and is rejected.
    """
    _check_efficiency(eta)
    floor = 1.0 - eta
    if np.any(np.asarray(v_measured) <= floor):
        raise UnphysicalVarianceError(
            f"measured variance {v_measured} is not above the vacuum floor "
            f"1 - eta = {floor:.6g}; efficiency {eta} is inconsistent with the data"
        )
    return (v_measured - 1.0) / eta + 1.0


def apply_loss_covariance(cov: TwinBeamCovariance, eta: float) -> TwinBeamCovariance:
    """Loss channel applied to both beams: variances contract toward 1,
    cross-beam correlations scale by eta (the admixed vacua are independent)."""
    _check_efficiency(eta)
    return TwinBeamCovariance(
        vp1=apply_loss(cov.vp1, eta), vp2=apply_loss(cov.vp2, eta),
        vq1=apply_loss(cov.vq1, eta), vq2=apply_loss(cov.vq2, eta),
        cp=eta * cov.cp, cq=eta * cov.cq,
    )


def correct_loss_covariance(cov: TwinBeamCovariance, eta: float) -> TwinBeamCovariance:
    """Inverse of :func:`apply_loss_covariance`.

    Correlations grow as c/eta while variances are pulled back toward their
    pre-loss values; if the result breaks the Cauchy-Schwarz bound, no
    physical source state could have produced the input at this efficiency
    and the correction refuses.
    """
    _check_efficiency(eta)
    corrected = TwinBeamCovariance(
        vp1=correct_loss(cov.vp1, eta), vp2=correct_loss(cov.vp2, eta),
        vq1=correct_loss(cov.vq1, eta), vq2=correct_loss(cov.vq2, eta),
        cp=cov.cp / eta, cq=cov.cq / eta,
    )
    if (abs(corrected.cp) > math.sqrt(corrected.vp1 * corrected.vp2)
            or abs(corrected.cq) > math.sqrt(corrected.vq1 * corrected.vq2)):
        raise UnphysicalVarianceError(
            f"correcting at efficiency {eta} pushes a cross-correlation past "
            "its Cauchy-Schwarz bound; the efficiency is inconsistent with "
            "the measured correlations"
        )
    return corrected


def validate_physicality(cov: TwinBeamCovariance) -> list[str]:
    """Names of every violated physicality constraint, with its margin.

    Checks positivity of all variances, the Cauchy-Schwarz bounds on the
    cross-correlations, and the per-beam uncertainty products Vp*Vq >= 1.
    Returns an empty list when the covariance is physical.
    """
    violations = []
    for name, v in (("vp1", cov.vp1), ("vp2", cov.vp2),
                    ("vq1", cov.vq1), ("vq2", cov.vq2)):
        if not v > 0.0:
            violations.append(f"{name} = {v:.6g} must be > 0")
    if violations:
        return violations

    cs_p = math.sqrt(cov.vp1 * cov.vp2)
    if abs(cov.cp) > cs_p:
        violations.append(
            f"|cp| = {abs(cov.cp):.6g} exceeds sqrt(vp1*vp2) = {cs_p:.6g} "
            f"(margin {abs(cov.cp) - cs_p:.3g})"
        )
    cs_q = math.sqrt(cov.vq1 * cov.vq2)
    if abs(cov.cq) > cs_q:
        violations.append(
            f"|cq| = {abs(cov.cq):.6g} exceeds sqrt(vq1*vq2) = {cs_q:.6g} "
            f"(margin {abs(cov.cq) - cs_q:.3g})"
        )
    for label, prod in (("beam 1", cov.vp1 * cov.vq1), ("beam 2", cov.vp2 * cov.vq2)):
        if prod < 1.0:
            violations.append(
                f"{label} uncertainty product Vp*Vq = {prod:.6g} is below 1 "
                f"(margin {1.0 - prod:.3g})"
            )
    return violations
