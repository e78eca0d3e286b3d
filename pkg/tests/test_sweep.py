import math

import numpy as np
import pytest
from scipy import stats

from twinbeam_lab.cavity import CavitySpec
from twinbeam_lab.noise_model import ChannelModel, channel_spectrum
from twinbeam_lab.quadratures import TwinBeamCovariance, UnphysicalVarianceError
from twinbeam_lab.sweep import (
    CalibrationError,
    DatasetFormatError,
    EmptyWindowError,
    SeriesTooShortError,
    SweepDataset,
    SweepPlan,
    SweepPlanError,
    demodulate,
    dumps_dataset,
    estimate_spectrum,
    format_positional6,
    loads_dataset,
    read_dataset,
    shot_noise_calibrate,
    synthesize_sweep,
    window_rng,
    write_dataset,
)

OMEGA = 27.0


def paper_plan(seed=12345, **overrides) -> SweepPlan:
    kwargs = dict(start_mhz=-56.0, end_mhz=56.0, points=200, rbw_khz=600.0,
                  vbw_khz=1.0, omega_mhz=OMEGA, seed=seed)
    kwargs.update(overrides)
    return SweepPlan(**kwargs)


@pytest.fixture(scope="module")
def model(paper_cavity):
    return ChannelModel(cavity1=paper_cavity, cavity2=paper_cavity,
                        omega_mhz=OMEGA, efficiency=0.72, channel="sum")


@pytest.fixture(scope="module")
def lossless_model(paper_cavity):
    return ChannelModel(cavity1=paper_cavity, cavity2=paper_cavity,
                        omega_mhz=OMEGA, efficiency=1.0, channel="sum")


@pytest.fixture(scope="module")
def paper_dataset(model, twin_covariance):
    return synthesize_sweep(paper_plan(), model, twin_covariance)


class TestSweepPlan:
    def test_paper_settings_window_size(self):
        assert paper_plan().samples_per_window == 600

    @pytest.mark.parametrize("overrides", [
        dict(points=1),
        dict(start_mhz=10.0, end_mhz=-10.0),
        dict(rbw_khz=1.0, vbw_khz=1.0),
        dict(vbw_khz=0.0),
        dict(vbw_khz=400.0),  # fewer than 2 samples per window
        dict(omega_mhz=0.0),
        dict(seed=-1),
        dict(seed=2**64),
    ])
    def test_invalid_plans_rejected(self, overrides):
        with pytest.raises(SweepPlanError):
            paper_plan(**overrides)


class TestSynthesis:
    def test_deterministic_for_fixed_seed(self, model, twin_covariance):
        a = synthesize_sweep(paper_plan(seed=7), model, twin_covariance)
        b = synthesize_sweep(paper_plan(seed=7), model, twin_covariance)
        assert np.array_equal(a.s_sum, b.s_sum)
        assert np.array_equal(a.s_diff, b.s_diff)
        assert dumps_dataset(a) == dumps_dataset(b)
        c = synthesize_sweep(paper_plan(seed=8), model, twin_covariance)
        assert not np.array_equal(a.s_sum, c.s_sum)

    def test_window_streams_do_not_depend_on_plan_size(self, model, twin_covariance):
        # Window k draws from substream (seed, k): shrinking the grid cannot
        # change the samples of the windows that remain.
        full = synthesize_sweep(paper_plan(points=50), model, twin_covariance)
        # identical grid prefix needs identical window detunings: rebuild a
        # plan whose first windows coincide
        rng_direct = window_rng(12345, 3)
        x = rng_direct.standard_normal((2, 600))
        assert np.array_equal(window_rng(12345, 3).standard_normal((2, 600)), x)

    def test_identity_covariance_clusters_at_shot_noise(self, model):
        ds = synthesize_sweep(paper_plan(seed=21), model, TwinBeamCovariance.identity())
        n = ds.plan.samples_per_window
        rel = math.sqrt(2.0 / (n - 1))
        for col in (ds.s_sum, ds.s_diff, ds.s_ch1, ds.s_ch2):
            assert abs(col.mean() - 1.0) < 3.0 * rel / math.sqrt(col.size)
            assert abs(col.std(ddof=1) / rel - 1.0) < 0.15

    def test_far_detuned_difference_plateau(self, model, twin_covariance):
        # Windows between the sideband crossing and the anti-resonance see the
        # loss-degraded amplitude-difference squeezing, 0.72*(0.63-1)+1.
        ds = synthesize_sweep(paper_plan(seed=4), model, twin_covariance)
        bw = model.cavity1.bandwidth_mhz
        sel = (np.abs(ds.delta_mhz) >= 3.05 * bw) & (np.abs(ds.delta_mhz) <= 3.3 * bw)
        assert sel.sum() >= 6
        n = ds.plan.samples_per_window
        vals = ds.s_diff[sel]
        pooled_se = math.sqrt(2.0 / (n - 1)) * 0.7336 / math.sqrt(sel.sum())
        assert abs(vals.mean() - 0.7336) < 3.0 * pooled_se

    def test_sum_diff_identity_exact(self, paper_dataset):
        dev = np.abs(paper_dataset.s_sum + paper_dataset.s_diff
                     - paper_dataset.s_ch1 - paper_dataset.s_ch2)
        assert dev.max() < 1e-12

    def test_estimates_converge_to_model_at_large_n(self, model, twin_covariance):
        # 100k samples per window shrink the estimator spread to ~0.45%.
        plan = paper_plan(points=10, rbw_khz=600.0, vbw_khz=0.006, seed=3)
        assert plan.samples_per_window == 100000
        ds = synthesize_sweep(plan, model, twin_covariance)
        n = plan.samples_per_window
        for channel in ("sum", "difference"):
            truth = channel_spectrum(
                ChannelModel(model.cavity1, model.cavity2, OMEGA, 0.72, channel),
                twin_covariance, ds.delta_mhz)
            se = math.sqrt(2.0 / (n - 1)) * truth
            assert (np.abs(ds.channel(channel) - truth) < 3.0 * se).all()

    def test_estimator_is_chi_square_distributed(self, lossless_model):
        ds = synthesize_sweep(paper_plan(seed=17), lossless_model,
                              TwinBeamCovariance.identity())
        n = ds.plan.samples_per_window
        scaled = (n - 1) * ds.s_ch1  # truth is exactly 1
        result = stats.kstest(scaled, stats.chi2(n - 1).cdf)
        assert result.pvalue > 0.01

    def test_unphysical_covariance_rejected(self, model):
        bad = TwinBeamCovariance(0.5, 1.0, 0.5, 1.0, 0.0, 0.0)
        with pytest.raises(UnphysicalVarianceError):
            synthesize_sweep(paper_plan(), model, bad)

    def test_omega_mismatch_rejected(self, model, twin_covariance):
        with pytest.raises(SweepPlanError, match="analysis frequency"):
            synthesize_sweep(paper_plan(omega_mhz=26.0), model, twin_covariance)

    def test_singular_grid_points_skipped(self):
        r2 = 0.9
        spec = CavitySpec(r1=r2, loss=1.0 - r2 * r2, bandwidth_mhz=5.0)
        model = ChannelModel(spec, spec, 10.0, 1.0, "sum")
        # 21 points over a symmetric range place one window exactly on the
        # impedance-matched resonance
        plan = SweepPlan(-10.0, 10.0, 21, 600.0, 1.0, 10.0, seed=5)
        ds = synthesize_sweep(plan, model, TwinBeamCovariance.identity())
        assert ds.skipped_mhz == (0.0,)
        assert ds.delta_mhz.size == 20
        assert 0.0 not in ds.delta_mhz


class TestDemodulate:
    FS = 216.0  # MHz, 8x the analysis frequency

    def test_tone_settles_to_quadrature_amplitude(self):
        n = np.arange(360 * 300)
        a = 0.7
        raw = a * np.cos(2 * np.pi * (OMEGA / self.FS) * n)
        base = demodulate(raw, self.FS, OMEGA, 600.0)
        # residual second-harmonic ripple samples coherently: 1% tolerance
        assert base[-50:].mean() == pytest.approx(a / math.sqrt(2.0), rel=0.01)

    def test_zero_input_zero_output(self):
        out = demodulate(np.zeros(3000), self.FS, OMEGA, 600.0)
        assert np.abs(out).max() == 0.0

    def test_white_noise_variance_scales_with_input_density(self):
        # Ratio of demodulated variances equals the input density ratio;
        # the calibration run (unit input) carries the absolute gain.
        rng = np.random.default_rng(23)
        scale = 0.63
        cal = demodulate(rng.standard_normal(1_500_000), self.FS, OMEGA, 600.0)[5:]
        sig = demodulate(math.sqrt(scale) * rng.standard_normal(1_500_000),
                         self.FS, OMEGA, 600.0)[5:]
        ratio = np.var(sig, ddof=1) / np.var(cal, ddof=1)
        se = math.sqrt(2.0 / cal.size) * math.sqrt(2.0) * scale
        assert abs(ratio - scale) < 4.0 * se

    def test_series_too_short(self):
        with pytest.raises(SeriesTooShortError):
            demodulate(np.zeros(100), self.FS, OMEGA, 600.0)

    def test_undersampled_rejected(self):
        with pytest.raises(ValueError, match="sample rate"):
            demodulate(np.zeros(10000), 100.0, OMEGA, 600.0)


class TestEstimateSpectrum:
    def test_constant_samples_have_zero_variance(self):
        rows = estimate_spectrum([(1.5, np.full(100, 2.2))])
        assert rows[0].variance == pytest.approx(0.0, abs=1e-24)
        assert rows[0].delta_mhz == 1.5
        assert rows[0].n_samples == 100

    def test_window_maps_to_mean_detuning(self):
        rows = estimate_spectrum([(np.array([1.0, 2.0, 3.0]), [0.0, 1.0, -1.0])])
        assert rows[0].delta_mhz == 2.0

    def test_chi_square_containment(self):
        # With 600 unit-variance draws, the estimate lands in [0.85, 1.15]
        # with probability 0.99055 (chi-square(599) quantiles); over 500
        # seeded windows the observed fraction must agree within 3 sigma.
        n = 600
        p_in = stats.chi2(n - 1).cdf(1.15 * (n - 1)) - stats.chi2(n - 1).cdf(0.85 * (n - 1))
        assert p_in == pytest.approx(0.99055, abs=5e-4)
        rng = np.random.default_rng(31)
        windows = [(0.0, rng.standard_normal(n)) for _ in range(500)]
        rows = estimate_spectrum(windows)
        inside = np.mean([(0.85 <= r.variance <= 1.15) for r in rows])
        assert inside >= p_in - 3.0 * math.sqrt(p_in * (1 - p_in) / 500)

    def test_interleaved_windows_are_independent(self):
        rng = np.random.default_rng(37)
        a = rng.standard_normal(500) * 2.0
        b = rng.standard_normal(500) * 0.5
        rows = estimate_spectrum([(0.0, a), (1.0, b)])
        assert rows[0].variance == pytest.approx(np.var(a, ddof=1), abs=1e-14)
        assert rows[1].variance == pytest.approx(np.var(b, ddof=1), abs=1e-14)

    def test_empty_window_rejected(self):
        with pytest.raises(EmptyWindowError):
            estimate_spectrum([(0.0, [1.0])])


class TestCalibration:
    def _flat_dataset(self, value, n=200):
        plan = paper_plan()
        model = ChannelModel(CavitySpec(0.6, 0.003, 14.0), CavitySpec(0.6, 0.003, 14.0),
                             OMEGA, 1.0, "sum")
        col = np.full(n, float(value))
        return SweepDataset(plan=plan, model=model, delta_mhz=np.linspace(-56, 56, n),
                            s_sum=col.copy(), s_diff=col.copy(), s_ch1=col.copy(),
                            s_ch2=col.copy(), n_samples=np.full(n, 600))

    def test_exact_reference(self):
        assert shot_noise_calibrate(self._flat_dataset(1.0)) == pytest.approx(1.0)

    def test_scaled_reference(self):
        assert shot_noise_calibrate(self._flat_dataset(2.5)) == pytest.approx(0.4)

    def test_monte_carlo_reference_accuracy(self, lossless_model):
        # pooled standard error over 200 windows x 600 samples x 2 beams
        # is ~0.29%; this fixed realization lands well inside it
        ds = synthesize_sweep(paper_plan(seed=42), lossless_model,
                              TwinBeamCovariance.identity())
        factor = shot_noise_calibrate(ds)
        assert abs(factor - 1.0) < 0.003

    def test_structured_reference_rejected(self, lossless_model, twin_covariance):
        ds = synthesize_sweep(paper_plan(seed=43), lossless_model, twin_covariance)
        with pytest.raises(CalibrationError, match="not flat"):
            shot_noise_calibrate(ds)


class TestRawChain:
    def test_raw_chain_matches_analytic_model(self, model, twin_covariance):
        plan = paper_plan(points=16, seed=31)
        reference = synthesize_sweep(plan, model, TwinBeamCovariance.identity(),
                                     raw_chain=True)
        factor = shot_noise_calibrate(reference)
        ds = synthesize_sweep(plan, model, twin_covariance, raw_chain=True,
                              calibration=factor)
        assert ds.synthesis_mode == "raw"
        n = plan.samples_per_window
        # decimated single-pole output keeps a little sample correlation;
        # allow 1.5x the independent-sample estimator spread
        se_rel = 1.5 * math.sqrt(2.0 / (n - 1))
        for channel in ("sum", "difference"):
            truth = channel_spectrum(
                ChannelModel(model.cavity1, model.cavity2, OMEGA, 0.72, channel),
                twin_covariance, ds.delta_mhz)
            rel = ds.channel(channel) / truth - 1.0
            assert np.abs(rel).max() < 4.0 * se_rel

    def test_raw_chain_deterministic(self, model, twin_covariance):
        plan = paper_plan(points=4, seed=9)
        a = synthesize_sweep(plan, model, twin_covariance, raw_chain=True)
        b = synthesize_sweep(plan, model, twin_covariance, raw_chain=True)
        assert np.array_equal(a.s_sum, b.s_sum)

    def test_raw_chain_sum_diff_identity(self, model, twin_covariance):
        plan = paper_plan(points=4, seed=9)
        ds = synthesize_sweep(plan, model, twin_covariance, raw_chain=True)
        dev = np.abs(ds.s_sum + ds.s_diff - ds.s_ch1 - ds.s_ch2)
        assert dev.max() < 1e-12


class TestDatasetFormat:
    def test_format_positional6(self):
        assert format_positional6(1.0) == "1.00000"
        assert format_positional6(-56.0) == "-56.0000"
        assert format_positional6(0.6321987654) == "0.632199"
        assert format_positional6(1.23e-5) == "0.0000123000"
        assert format_positional6(-0.0) == "0.00000"
        assert "e" not in format_positional6(123456.7)

    def test_round_trip(self, paper_dataset, tmp_path):
        path = tmp_path / "sweep.csv"
        write_dataset(paper_dataset, path)
        back = read_dataset(path)
        assert back.plan == paper_dataset.plan
        assert back.model == paper_dataset.model
        assert back.truth == paper_dataset.truth
        assert back.synthesis_mode == paper_dataset.synthesis_mode
        assert np.allclose(back.s_sum, paper_dataset.s_sum, rtol=1e-5)
        assert np.array_equal(back.n_samples, paper_dataset.n_samples)
        # serialization is a fixed point after one round
        assert dumps_dataset(back) == dumps_dataset(loads_dataset(dumps_dataset(back)))

    def test_header_carries_plan_and_model(self, paper_dataset):
        text = dumps_dataset(paper_dataset)
        assert "# plan.seed = 12345" in text
        assert "# model.efficiency = 0.72" in text
        assert "# truth.cp = 1.185" in text
        assert text.count("\n# model.cavity1.r1 = ") == 1

    def test_corrupted_row_reports_line_number(self, paper_dataset):
        text = dumps_dataset(paper_dataset)
        lines = text.splitlines()
        # first data row is right after the column header
        idx = next(i for i, l in enumerate(lines) if l.startswith("detuning_mhz")) + 1
        lines[idx] = "not,a,row"
        with pytest.raises(DatasetFormatError, match=f"line {idx + 1}"):
            loads_dataset("\n".join(lines))

    def test_bad_number_reports_line_number(self, paper_dataset):
        text = dumps_dataset(paper_dataset)
        lines = text.splitlines()
        idx = next(i for i, l in enumerate(lines) if l.startswith("detuning_mhz")) + 2
        parts = lines[idx].split(",")
        parts[1] = "oops"
        lines[idx] = ",".join(parts)
        with pytest.raises(DatasetFormatError, match=f"line {idx + 1}"):
            loads_dataset("\n".join(lines))

    def test_missing_header_key_rejected(self, paper_dataset):
        text = dumps_dataset(paper_dataset)
        text = text.replace("# plan.seed = 12345\n", "")
        with pytest.raises(DatasetFormatError, match="plan.seed"):
            loads_dataset(text)

    def test_missing_column_header_rejected(self):
        with pytest.raises(DatasetFormatError):
            loads_dataset("# twinbeam-lab sweep dataset v1\n1,2,3,4,5,6\n")
