import math

import numpy as np
import pytest

import oracles
from twinbeam_lab.cavity import (
    CavityModelError,
    CavitySpec,
    ImpedanceMatchedCarrierError,
    input_mirror_for_fwhm,
    model_fwhm,
    reflection_coeff,
    rotation_coeff_arrays,
    rotation_coeffs,
    transmission_coeff,
)
from conftest import random_specs


class TestResponseCoefficients:
    def test_lossless_cavity_reflects_everything(self):
        spec = CavitySpec(r1=0.95, loss=0.0, bandwidth_mhz=14.0)
        deltas = np.linspace(-100.0, 100.0, 501)
        assert np.abs(np.abs(reflection_coeff(spec, deltas)) - 1.0).max() < 1e-12
        assert np.abs(transmission_coeff(spec, deltas)).max() == 0.0

    def test_reflection_on_resonance_is_real(self):
        # (0.9 - 0.99) / (1 - 0.891) evaluated at zero detuning
        spec = CavitySpec(r1=0.9, loss=1.0 - 0.99**2, bandwidth_mhz=10.0)
        r = reflection_coeff(spec, 0.0)
        assert r.imag == pytest.approx(0.0, abs=1e-15)
        assert r.real == pytest.approx(-0.8256880733944952, abs=1e-12)

    def test_reflection_at_half_period(self):
        # At D = pi*bw the exponential is exactly -1; frozen from the scalar
        # cmath oracle: (r1 + r2) / (1 + r1 r2) = 0.9994711792702274.
        spec = CavitySpec(r1=0.9, loss=1.0 - 0.99**2, bandwidth_mhz=10.0)
        expected = oracles.response(math.pi * 10.0, 10.0, 0.9, 1.0 - 0.99**2)[0]
        assert expected.real == pytest.approx(0.9994711792702274, abs=1e-12)
        assert reflection_coeff(spec, math.pi * 10.0) == pytest.approx(expected, abs=1e-12)

    def test_transmission_on_resonance_from_unit_sum(self):
        # |t(0)|^2 = 1 - |r(0)|^2 = 0.3182392054540867 for the same mirrors.
        spec = CavitySpec(r1=0.9, loss=0.0199, bandwidth_mhz=10.0)
        t2 = abs(transmission_coeff(spec, 0.0)) ** 2
        assert t2 == pytest.approx(1.0 - 0.8256880733944952**2, abs=1e-12)
        assert t2 == pytest.approx(0.3182392054540867, abs=1e-12)

    def test_open_cavity_limit_transmits_everything(self):
        # Vanishing mirrors (r1 -> 0, loss -> 1) pass the field straight through.
        spec = CavitySpec(r1=1e-8, loss=1.0 - 1e-12, bandwidth_mhz=5.0)
        deltas = np.linspace(-40.0, 40.0, 101)
        assert np.abs(np.abs(transmission_coeff(spec, deltas)) - 1.0).max() < 1e-6

    def test_energy_identity_random_specs(self):
        rng = np.random.default_rng(314159)
        r1, loss, bw = random_specs(rng, 300)
        worst = 0.0
        for i in range(r1.size):
            spec = CavitySpec(r1=float(r1[i]), loss=float(loss[i]), bandwidth_mhz=float(bw[i]))
            deltas = rng.uniform(-8.0, 8.0, 40) * spec.bandwidth_mhz
            total = (np.abs(reflection_coeff(spec, deltas)) ** 2
                     + np.abs(transmission_coeff(spec, deltas)) ** 2)
            worst = max(worst, float(np.abs(total - 1.0).max()))
        assert worst < 1e-12

    def test_matches_scalar_oracle(self):
        spec = CavitySpec(r1=0.7, loss=0.04, bandwidth_mhz=3.0)
        for delta in (-11.7, -2.0, 0.0, 0.3, 4.9, 17.0):
            r_ref, t_ref = oracles.response(delta, 3.0, 0.7, 0.04)
            assert reflection_coeff(spec, delta) == pytest.approx(r_ref, abs=1e-14)
            assert transmission_coeff(spec, delta) == pytest.approx(t_ref, abs=1e-14)


class TestRotationCoefficients:
    def test_zero_analysis_frequency_reads_amplitude_only(self):
        spec = CavitySpec(r1=0.8, loss=0.02, bandwidth_mhz=7.0)
        for delta in (0.0, 1.3, -5.0):
            g = rotation_coeffs(spec, delta, 0.0)
            assert g.g_q == pytest.approx(0.0, abs=1e-15)
            r_mod = abs(reflection_coeff(spec, delta))
            assert g.g_p == pytest.approx(r_mod, abs=1e-14)
            assert g.g_p.imag == pytest.approx(0.0, abs=1e-15)

    def test_on_resonance_sidebands_balance(self):
        # The +/- sidebands see conjugate responses at zero detuning, so the
        # phase weight cancels; the amplitude weight carries |r(W)| (with a
        # frequency-dependent phase).
        spec = CavitySpec(r1=0.95, loss=0.01, bandwidth_mhz=14.0)
        omega = 1.93 * 14.0
        g = rotation_coeffs(spec, 0.0, omega)
        assert abs(g.g_q) < 1e-14
        assert abs(g.g_p) == pytest.approx(abs(reflection_coeff(spec, omega)), abs=1e-13)

    def test_unit_sum_identity_random(self):
        rng = np.random.default_rng(271828)
        r1, loss, bw = random_specs(rng, 300)
        worst = 0.0
        for i in range(r1.size):
            spec = CavitySpec(r1=float(r1[i]), loss=float(loss[i]), bandwidth_mhz=float(bw[i]))
            deltas = rng.uniform(-8.0, 8.0, 30) * spec.bandwidth_mhz
            omega = float(rng.uniform(0.0, 4.0) * spec.bandwidth_mhz)
            try:
                g_p, g_q, g_vp, g_vq = rotation_coeff_arrays(spec, deltas, omega)
            except ImpedanceMatchedCarrierError:
                continue
            total = (np.abs(g_p) ** 2 + np.abs(g_q) ** 2
                     + np.abs(g_vp) ** 2 + np.abs(g_vq) ** 2)
            worst = max(worst, float(np.abs(total - 1.0).max()))
        assert worst < 1e-10

    def test_matches_scalar_oracle(self):
        spec = CavitySpec(r1=0.6, loss=0.05, bandwidth_mhz=9.0)
        for delta in (-20.0, -3.3, 0.4, 6.0):
            ref = oracles.rotation(delta, 9.0, 0.6, 0.05, 17.0)
            got = rotation_coeffs(spec, delta, 17.0)
            for a, b in zip((got.g_p, got.g_q, got.g_vp, got.g_vq), ref):
                assert a == pytest.approx(b, abs=1e-13)

    def test_periodicity(self):
        spec = CavitySpec(r1=0.9, loss=0.01, bandwidth_mhz=11.0)
        period = 2.0 * math.pi * spec.bandwidth_mhz
        deltas = np.array([-5.0, 0.7, 3.2, 19.0])
        a = rotation_coeff_arrays(spec, deltas, 21.0)
        b = rotation_coeff_arrays(spec, deltas + period, 21.0)
        for x, y in zip(a, b):
            assert np.abs(x - y).max() < 1e-12

    def test_mirror_symmetry_in_detuning(self):
        # For real mirror amplitudes: g_p(-D) = g_p(D) and g_q(-D) = -g_q(D).
        # (Verified identities of the defining mix; on top of them, all
        # |g|^2 spectra are even in D.)
        spec = CavitySpec(r1=0.87, loss=0.006, bandwidth_mhz=14.0)
        deltas = np.linspace(0.1, 80.0, 57)
        gp_pos, gq_pos, gvp_pos, gvq_pos = rotation_coeff_arrays(spec, deltas, 27.0)
        gp_neg, gq_neg, gvp_neg, gvq_neg = rotation_coeff_arrays(spec, -deltas, 27.0)
        assert np.abs(gp_neg - gp_pos).max() < 1e-12
        assert np.abs(gq_neg + gq_pos).max() < 1e-12
        assert np.abs(gvp_neg - gvp_pos).max() < 1e-12
        assert np.abs(gvq_neg + gvq_pos).max() < 1e-12

    def test_far_detuned_amplitude_recovery(self, paper_cavity):
        # Between the sideband crossing and the anti-resonance the carrier
        # and both sidebands are all far from resonance: pure amplitude
        # readout, |g_p|^2 > 0.99.
        theta = np.linspace(3.0, math.pi, 25)
        g_p, _, _, _ = rotation_coeff_arrays(
            paper_cavity, theta * paper_cavity.bandwidth_mhz, 27.0)
        assert (np.abs(g_p) ** 2).min() > 0.99

    def test_conversion_peak_near_half_linewidth(self):
        # Dense-scan oracle: for a narrow-line mirror set the inner |g_q|^2
        # maximum sits near half the model linewidth, and the value at
        # exactly half a linewidth stays within 3% of the peak.
        r1, loss, bw, omega = 0.95, 0.01, 14.0, 27.0
        spec = CavitySpec(r1=r1, loss=loss, bandwidth_mhz=bw)
        fwhm = model_fwhm(spec)
        d_star, v_star = oracles.conversion_argmax(bw, r1, loss, omega, n=20001)
        assert 0.35 * fwhm < d_star < 0.6 * fwhm
        _, g_q, _, _ = rotation_coeff_arrays(spec, np.array([0.5 * fwhm]), omega)
        assert abs(g_q[0]) ** 2 > 0.97 * v_star

    def test_impedance_matched_carrier_raises(self):
        # r1 = r2 makes the carrier reflection vanish exactly on resonance.
        r2 = 0.9
        spec = CavitySpec(r1=r2, loss=1.0 - r2 * r2, bandwidth_mhz=5.0)
        assert abs(reflection_coeff(spec, 0.0)) < 1e-15
        with pytest.raises(ImpedanceMatchedCarrierError) as err:
            rotation_coeffs(spec, 0.0, 10.0)
        assert 0.0 in err.value.detunings_mhz
        # off resonance the same spec is fine
        rotation_coeffs(spec, 2.0, 10.0)

    def test_lossless_cavity_has_zero_vacuum_ports(self):
        spec = CavitySpec(r1=0.9, loss=0.0, bandwidth_mhz=5.0)
        g = rotation_coeffs(spec, 1.0, 7.0)
        assert g.g_vp == 0.0 and g.g_vq == 0.0
        assert g.unit_sum() == pytest.approx(1.0, abs=1e-12)


class TestSpecValidation:
    @pytest.mark.parametrize("kwargs", [
        dict(r1=0.0, loss=0.1, bandwidth_mhz=1.0),
        dict(r1=1.0, loss=0.1, bandwidth_mhz=1.0),
        dict(r1=0.5, loss=1.0, bandwidth_mhz=1.0),
        dict(r1=0.5, loss=-0.1, bandwidth_mhz=1.0),
        dict(r1=0.5, loss=0.1, bandwidth_mhz=0.0),
    ])
    def test_invalid_specs_rejected(self, kwargs):
        with pytest.raises(CavityModelError):
            CavitySpec(**kwargs)

    def test_negative_analysis_frequency_rejected(self):
        spec = CavitySpec(r1=0.5, loss=0.1, bandwidth_mhz=1.0)
        with pytest.raises(CavityModelError):
            rotation_coeffs(spec, 0.0, -1.0)


class TestLinewidthHelpers:
    def test_model_fwhm_is_the_half_maximum_width(self):
        spec = CavitySpec(r1=0.95, loss=0.01, bandwidth_mhz=14.0)
        fwhm = model_fwhm(spec)
        peak = abs(transmission_coeff(spec, 0.0)) ** 2
        half = abs(transmission_coeff(spec, 0.5 * fwhm)) ** 2
        assert half == pytest.approx(0.5 * peak, rel=1e-9)

    def test_matched_fwhm_spec(self):
        spec = CavitySpec.matched_fwhm(loss=0.003, bandwidth_mhz=14.0)
        assert model_fwhm(spec) == pytest.approx(14.0, abs=1e-9)
        assert spec.r1 == pytest.approx(0.6136122434502238, abs=1e-12)

    def test_lossier_matched_spec_still_matches(self):
        spec = CavitySpec.matched_fwhm(loss=0.05, bandwidth_mhz=7.0)
        assert model_fwhm(spec) == pytest.approx(7.0, abs=1e-9)

    def test_unattainable_fwhm_rejected(self):
        with pytest.raises(CavityModelError):
            input_mirror_for_fwhm(loss=0.0, bandwidth_mhz=1.0, fwhm_mhz=7.0)
        with pytest.raises(CavityModelError):
            input_mirror_for_fwhm(loss=0.9, bandwidth_mhz=1.0, fwhm_mhz=0.01)

    def test_very_lossy_cavity_reports_full_period(self):
        spec = CavitySpec(r1=0.05, loss=0.99, bandwidth_mhz=2.0)
        assert model_fwhm(spec) == pytest.approx(2.0 * math.pi * 2.0)
