"""Frequency response of a lossy two-mirror analysis cavity.

All frequencies (detuning, analysis frequency, bandwidth) are carried in
MHz.  The field response is the fractional-exponent form

    r(D) = (r1 - r2 exp(iD/bw)) / (1 - r1 r2 exp(iD/bw))
    t(D) = t1 t2 exp(iD/bw) / (1 - r1 r2 exp(iD/bw))

with a lossless input mirror (t1^2 = 1 - r1^2) and all internal losses A
lumped into the back mirror (t2^2 = A = 1 - r2^2).  This parameterization
satisfies |r|^2 + |t|^2 = 1 identically, and every output is periodic in D
with period 2*pi*bw.

The resonance linewidth of this model equals ``bw`` only for one
particular mirror set; use :func:`model_fwhm` to get the actual linewidth
of a given spec instead of assuming a convention, and
:func:`input_mirror_for_fwhm` / :meth:`CavitySpec.matched_fwhm` to build a
spec whose linewidth is a stated value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this carrier reflectivity the quadrature phase reference is numerically
# meaningless (impedance-matched resonance).
SINGULAR_CARRIER_TOL = 1e-12
# Below this loss the vacuum-port coefficients are defined as 0 (their quotient
# form is 0/0 but the limit is unambiguous: no vacuum leaks in).
NEGLIGIBLE_LOSS = 1e-14


class CavityModelError(ValueError):
    """Invalid cavity parameters or an evaluation outside the model's domain."""


class ImpedanceMatchedCarrierError(CavityModelError):
    """Carrier reflection vanished: the reflected-phase reference is undefined.

    Raised when |r(D)| < SINGULAR_CARRIER_TOL at a requested detuning.  Scan
    loops should skip such grid points; the physical instrument never sits
    exactly there.
    """

    def __init__(self, detunings_mhz):
        self.detunings_mhz = np.atleast_1d(np.asarray(detunings_mhz, dtype=float))
        shown = ", ".join(f"{d:g}" for d in self.detunings_mhz[:5])
        more = "" if self.detunings_mhz.size <= 5 else ", ..."
        super().__init__(
            f"carrier reflection vanishes at detuning(s) [{shown}{more}] MHz; "
            "quadrature rotation is undefined there"
        )


@dataclass(frozen=True)
class CavitySpec:
    """Mirror set and bandwidth scale of one analysis cavity.

    r1 is the input-mirror amplitude reflection, ``loss`` the total internal
    loss fraction per round trip, ``bandwidth_mhz`` the frequency scale in
    the response exponent.  Derived amplitudes: t1 = sqrt(1 - r1^2),
    r2 = sqrt(1 - loss), t2 = sqrt(loss).
    """

    r1: float
    loss: float
    bandwidth_mhz: float

    def __post_init__(self):
        if not 0.0 < self.r1 < 1.0:
            raise CavityModelError(f"r1 must be in (0, 1), got {self.r1}")
        if not 0.0 <= self.loss < 1.0:
            raise CavityModelError(f"loss must be in [0, 1), got {self.loss}")
        if not self.bandwidth_mhz > 0.0:
            raise CavityModelError(
                f"bandwidth_mhz must be positive, got {self.bandwidth_mhz}"
            )
        # r1 < 1 and r2 <= 1 already force r1*r2 < 1, so the response
        # denominator can never vanish; no further check is needed.

    @property
    def t1(self) -> float:
        return math.sqrt(1.0 - self.r1 * self.r1)

    @property
    def r2(self) -> float:
        return math.sqrt(1.0 - self.loss)

    @property
    def t2(self) -> float:
        return math.sqrt(self.loss)

    @classmethod
    def matched_fwhm(cls, loss: float, bandwidth_mhz: float) -> "CavitySpec":
        """Spec whose actual resonance FWHM equals its bandwidth scale.

        Chooses the input mirror so that :func:`model_fwhm` of the result is
        ``bandwidth_mhz``.  With this mirror set, detunings quoted "in
        bandwidths" mean the same thing on the model axis and on a measured
        linewidth axis.
        """
        r1 = input_mirror_for_fwhm(loss, bandwidth_mhz, bandwidth_mhz)
        return cls(r1=r1, loss=loss, bandwidth_mhz=bandwidth_mhz)


@dataclass(frozen=True)
class RotationCoeffs:
    """Quadrature-rotation amplitudes of a reflected field at one (D, W) point.

    g_p and g_q weight the incident amplitude and phase fluctuations; g_vp and
    g_vq weight the two vacuum-port quadratures leaking through the losses.
    |g_p|^2 + |g_q|^2 + |g_vp|^2 + |g_vq|^2 = 1 identically.
    """

    g_p: complex
    g_q: complex
    g_vp: complex
    g_vq: complex

    def unit_sum(self) -> float:
        return (
            abs(self.g_p) ** 2
            + abs(self.g_q) ** 2
            + abs(self.g_vp) ** 2
            + abs(self.g_vq) ** 2
        )


def _phase_factor(spec: CavitySpec, delta_mhz) -> np.ndarray:
    return np.exp(1j * np.asarray(delta_mhz, dtype=float) / spec.bandwidth_mhz)


def reflection_coeff(spec: CavitySpec, delta_mhz):
    """Complex amplitude reflection r(D). Accepts a scalar or array detuning."""
    z = _phase_factor(spec, delta_mhz)
    out = (spec.r1 - spec.r2 * z) / (1.0 - spec.r1 * spec.r2 * z)
    return complex(out) if np.ndim(delta_mhz) == 0 else out


def transmission_coeff(spec: CavitySpec, delta_mhz):
    """Complex amplitude transmission t(D). Accepts a scalar or array detuning."""
    z = _phase_factor(spec, delta_mhz)
    out = (spec.t1 * spec.t2 * z) / (1.0 - spec.r1 * spec.r2 * z)
    return complex(out) if np.ndim(delta_mhz) == 0 else out


def rotation_coeff_arrays(spec: CavitySpec, delta_mhz, omega_mhz: float):
    """Rotation coefficients (g_p, g_q, g_vp, g_vq) over an array of detunings.

    Each coefficient mixes the responses seen by the carrier (at D) and by the
    two noise sidebands (at D +/- W), phase-referenced to the carrier:

        g_p = [r*(D)/|r(D)| r(D+W) + r(D)/|r(D)| r*(D-W)] / 2
        g_q = [r*(D)/|r(D)| r(D+W) - r(D)/|r(D)| r*(D-W)] / 2

    and identically for g_vp, g_vq with t in place of r.  Raises
    ImpedanceMatchedCarrierError where |r(D)| vanishes.  For a lossless
    cavity the vacuum coefficients are returned as exact zeros.
    """
    if omega_mhz < 0:
        raise CavityModelError(f"analysis frequency must be >= 0, got {omega_mhz}")
    delta = np.asarray(delta_mhz, dtype=float)

    # One complex exponential serves all three evaluation points:
    # exp(i(D +/- W)/bw) = exp(iD/bw) * exp(+/- iW/bw).
    r1r2 = spec.r1 * spec.r2
    z0 = np.exp(1j * delta / spec.bandwidth_mhz)
    shift = complex(np.exp(1j * omega_mhz / spec.bandwidth_mhz))
    zp = z0 * shift
    zm = z0 * np.conj(shift)

    r0 = (spec.r1 - spec.r2 * z0) / (1.0 - r1r2 * z0)
    mod = np.abs(r0)
    singular = mod < SINGULAR_CARRIER_TOL
    if np.any(singular):
        raise ImpedanceMatchedCarrierError(
            np.atleast_1d(delta)[np.atleast_1d(singular)]
        )

    rp = (spec.r1 - spec.r2 * zp) / (1.0 - r1r2 * zp)
    rm = (spec.r1 - spec.r2 * zm) / (1.0 - r1r2 * zm)
    ref = np.conj(r0) / mod
    g_p = 0.5 * (ref * rp + np.conj(ref) * np.conj(rm))
    g_q = 0.5 * (ref * rp - np.conj(ref) * np.conj(rm))

    if spec.loss < NEGLIGIBLE_LOSS:
        g_vp = np.zeros_like(g_p)
        g_vq = np.zeros_like(g_q)
    else:
        t1t2 = spec.t1 * spec.t2
        t0 = t1t2 * z0 / (1.0 - r1r2 * z0)
        tp = t1t2 * zp / (1.0 - r1r2 * zp)
        tm = t1t2 * zm / (1.0 - r1r2 * zm)
        # |t| = t1 t2 / |denominator| never vanishes once loss > 0 and r1 < 1.
        tref = np.conj(t0) / np.abs(t0)
        g_vp = 0.5 * (tref * tp + np.conj(tref) * np.conj(tm))
        g_vq = 0.5 * (tref * tp - np.conj(tref) * np.conj(tm))
    return g_p, g_q, g_vp, g_vq


def rotation_coeffs(spec: CavitySpec, delta_mhz: float, omega_mhz: float) -> RotationCoeffs:
    """Rotation coefficients at a single (detuning, analysis frequency) point."""
    g_p, g_q, g_vp, g_vq = rotation_coeff_arrays(spec, float(delta_mhz), omega_mhz)
    return RotationCoeffs(complex(g_p), complex(g_q), complex(g_vp), complex(g_vq))


def model_fwhm(spec: CavitySpec) -> float:
    """Actual FWHM (MHz) of the model's resonance for this mirror set.

    Solves the half-maximum condition of the intracavity buildup
    |1 - r1 r2 exp(iD/bw)|^-2 exactly.  For mirror sets so lossy that the
    buildup never falls to half its peak, the full period 2*pi*bw is
    returned.
    """
    x = spec.r1 * spec.r2
    s = (1.0 - x) / (2.0 * math.sqrt(x))
    if s >= 1.0:
        return 2.0 * math.pi * spec.bandwidth_mhz
    return 4.0 * math.asin(s) * spec.bandwidth_mhz


def input_mirror_for_fwhm(loss: float, bandwidth_mhz: float, fwhm_mhz: float) -> float:
    """Input-mirror reflection giving a stated resonance FWHM (MHz).

    Inverts :func:`model_fwhm` for fixed loss.  The target must be smaller
    than the free period 2*pi*bw and large enough that the required mirror
    reflection stays below 1.
    """
    if not 0.0 <= loss < 1.0:
        raise CavityModelError(f"loss must be in [0, 1), got {loss}")
    if not 0.0 < fwhm_mhz < 2.0 * math.pi * bandwidth_mhz:
        raise CavityModelError(
            f"target FWHM must lie in (0, 2*pi*bandwidth), got {fwhm_mhz}"
        )
    s = math.sin(fwhm_mhz / (4.0 * bandwidth_mhz))
    sqrt_x = math.sqrt(s * s + 1.0) - s
    r1 = (sqrt_x * sqrt_x) / math.sqrt(1.0 - loss)
    if not 0.0 < r1 < 1.0:
        raise CavityModelError(
            f"no valid input mirror for FWHM {fwhm_mhz} MHz at loss {loss} "
            f"(required r1 = {r1:.6g})"
        )
    return r1
