"""Predicted amplitude-noise spectra of fields reflected off the analysis cavities.

A detuned cavity rotates field quadratures, so the photodetected amplitude
noise of the reflected beam mixes the incident amplitude noise, the incident
phase noise and the vacuum leaking through the cavity losses:

    S_R = |g_p|^2 S_p + |g_q|^2 S_q + |g_vp|^2 + |g_vq|^2

This module evaluates that single-beam spectrum and its two-beam sum and
difference extensions as functions of detuning, with both cavities scanned
synchronously, and locates the detunings where the cavity converts phase
noise into detectable amplitude noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .cavity import CavitySpec, rotation_coeff_arrays
from .quadratures import TwinBeamCovariance, UnphysicalVarianceError, apply_loss

CHANNELS = ("sum", "difference", "single1", "single2")


@dataclass(frozen=True)
class ChannelModel:
    """One measurement channel: two cavities, analysis frequency, efficiency."""

    cavity1: CavitySpec
    cavity2: CavitySpec
    omega_mhz: float
    efficiency: float
    channel: str = "sum"

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"channel must be one of {CHANNELS}, got {self.channel!r}")
        if not self.omega_mhz > 0.0:
            raise ValueError(f"analysis frequency must be > 0, got {self.omega_mhz}")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in (0, 1], got {self.efficiency}")


def reflected_spectrum(spec: CavitySpec, delta_mhz, omega_mhz: float, s_p, s_q):
    """Single-beam reflected amplitude-noise power (no detection loss).

    s_p and s_q are the incident amplitude and phase noise powers in
    shot-noise units.  A coherent input (s_p = s_q = 1) returns exactly 1 at
    every detuning because the four weights sum to one.
    """
    if np.any(np.asarray(s_p) <= 0.0) or np.any(np.asarray(s_q) <= 0.0):
        raise UnphysicalVarianceError(f"incident noise must be > 0, got ({s_p}, {s_q})")
    g_p, g_q, g_vp, g_vq = rotation_coeff_arrays(spec, delta_mhz, omega_mhz)
    out = (
        np.abs(g_p) ** 2 * s_p
        + np.abs(g_q) ** 2 * s_q
        + np.abs(g_vp) ** 2
        + np.abs(g_vq) ** 2
    )
    return float(out) if np.ndim(delta_mhz) == 0 else out


def beam_pair_covariance(model: ChannelModel, cov: TwinBeamCovariance, delta_mhz):
    """Second moments (v1, v2, c12) of the two detected amplitude signals.

    Both cavities are evaluated at the same detuning (synchronous scan).  The
    per-beam variances include each cavity's own vacuum ports and the
    detection loss; the cross-beam covariance scales with the efficiency and
    the real part of the interfering rotation amplitudes.
    """
    g1 = rotation_coeff_arrays(model.cavity1, delta_mhz, model.omega_mhz)
    if model.cavity2 == model.cavity1:
        g2 = g1
    else:
        g2 = rotation_coeff_arrays(model.cavity2, delta_mhz, model.omega_mhz)
    eta = model.efficiency

    v1 = apply_loss(
        np.abs(g1[0]) ** 2 * cov.vp1 + np.abs(g1[1]) ** 2 * cov.vq1
        + np.abs(g1[2]) ** 2 + np.abs(g1[3]) ** 2,
        eta,
    )
    v2 = apply_loss(
        np.abs(g2[0]) ** 2 * cov.vp2 + np.abs(g2[1]) ** 2 * cov.vq2
        + np.abs(g2[2]) ** 2 + np.abs(g2[3]) ** 2,
        eta,
    )
    c12 = eta * (
        np.real(g1[0] * np.conj(g2[0])) * cov.cp
        + np.real(g1[1] * np.conj(g2[1])) * cov.cq
    )
    return v1, v2, c12


def channel_spectrum(model: ChannelModel, cov: TwinBeamCovariance, delta_mhz):
    """Detected noise power of the configured channel at given detuning(s).

    sum / difference channels measure the (i1 +/- i2)/sqrt(2) photocurrent
    combinations; single1 / single2 measure one beam alone.  Detection loss
    is applied after the cavities as a vacuum-admixing beam splitter, so the
    output equals apply_loss(lossless spectrum, efficiency) identically.

    The covariance is taken as given (callers feeding measured or trial
    states validate physicality themselves, as the synthesizer does).
    """
    v1, v2, c12 = beam_pair_covariance(model, cov, delta_mhz)
    if model.channel == "sum":
        out = 0.5 * (v1 + v2) + c12
    elif model.channel == "difference":
        out = 0.5 * (v1 + v2) - c12
    elif model.channel == "single1":
        out = v1
    else:
        out = v2
    return float(out) if np.ndim(delta_mhz) == 0 else out


@dataclass(frozen=True)
class PhaseReadoutMap:
    """Where and how well a cavity converts phase noise to amplitude noise.

    maxima holds (detuning_mhz, |g_q|^2) local maxima over one period, sorted
    by |detuning|; peak_conversion is the best |g_q|^2 found anywhere on the
    scan (reported even when below the maxima threshold), and
    conversion_shortfall = 1 - peak_conversion quantifies how far the cavity
    is from full phase-to-amplitude conversion.
    """

    maxima: tuple[tuple[float, float], ...]
    peak_conversion: float
    conversion_shortfall: float

    @property
    def fully_converting(self) -> bool:
        return self.peak_conversion > 0.99

    def paired_positions(self, tol_mhz: float = 1e-6) -> list[float]:
        """Distinct |detuning| values of the maxima (each usually a +/- pair)."""
        out: list[float] = []
        for d, _ in self.maxima:
            if not any(abs(abs(d) - p) <= tol_mhz for p in out):
                out.append(abs(d))
        return sorted(out)


def find_phase_readout_detunings(
    spec: CavitySpec,
    omega_mhz: float,
    threshold: float = 1e-6,
    grid_points: int = 8192,
) -> PhaseReadoutMap:
    """Locate the detunings maximizing phase-to-amplitude conversion |g_q|^2.

    Scans one full period of the response on a dense grid, refines each local
    maximum by bounded scalar minimization, and drops maxima whose conversion
    lies below ``threshold``.  Conversion approaches 1 only when the analysis
    frequency sufficiently exceeds the cavity linewidth; below that the best
    achievable value is still reported via ``peak_conversion``.
    """
    period = 2.0 * np.pi * spec.bandwidth_mhz
    # endpoint=False plus circular neighbor comparison: the response is periodic.
    deltas = np.linspace(-0.5 * period, 0.5 * period, grid_points, endpoint=False)
    _, g_q, _, _ = rotation_coeff_arrays(spec, deltas, omega_mhz)
    conv = np.abs(g_q) ** 2

    peak = float(conv.max())
    is_max = (conv > np.roll(conv, 1)) & (conv > np.roll(conv, -1))
    step = period / grid_points

    def neg_conv(d):
        _, gq, _, _ = rotation_coeff_arrays(spec, float(d), omega_mhz)
        return -abs(complex(gq)) ** 2

    found: list[tuple[float, float]] = []
    for i in np.nonzero(is_max)[0]:
        res = minimize_scalar(
            neg_conv,
            bounds=(deltas[i] - step, deltas[i] + step),
            method="bounded",
            options={"xatol": step * 1e-8},
        )
        d_star, c_star = float(res.x), float(-res.fun)
        if c_star < threshold:
            continue
        if any(abs(d_star - d) < 10 * step * 1e-6 + 1e-9 for d, _ in found):
            continue
        found.append((d_star, c_star))
        peak = max(peak, c_star)

    found.sort(key=lambda dc: (abs(dc[0]), dc[0]))
    return PhaseReadoutMap(
        maxima=tuple(found),
        peak_conversion=peak,
        conversion_shortfall=1.0 - peak,
    )
