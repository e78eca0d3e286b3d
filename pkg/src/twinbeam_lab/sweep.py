"""Synthesis and estimation of swept-cavity noise datasets.

The measurement being imitated: both analysis cavities are swept
synchronously over a detuning range while the photocurrents' high-frequency
components are demodulated at the analysis frequency.  The demodulated
samples are grouped into short windows (one per effective video-bandwidth
interval) and an unbiased sample variance per window estimates the noise
power of each channel: beam 1, beam 2, their sum and their difference.

Two synthesis fidelities exist.  The default draws baseband samples directly
from the analytic per-window covariance of the two detected signals.  The
raw-chain path generates wideband photocurrent noise and pushes it through
:func:`demodulate` end to end; it needs a shot-noise calibration factor to
land in shot-noise units, exactly like the bench instrument.

Every window owns an independent, seed-derived random substream, so datasets
are reproducible sample-for-sample no matter how windows are scheduled.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .cavity import SINGULAR_CARRIER_TOL, CavitySpec, reflection_coeff
from .noise_model import ChannelModel, beam_pair_covariance
from .quadratures import TwinBeamCovariance, UnphysicalVarianceError, validate_physicality

DATASET_MAGIC = "twinbeam-lab sweep dataset v1"


class SweepPlanError(ValueError):
    """Sweep plan violates its invariants."""


class SeriesTooShortError(ValueError):
    """Raw series shorter than the demodulation chain can use."""


class EmptyWindowError(ValueError):
    """A variance window held fewer than two samples."""


class CalibrationError(ValueError):
    """Shot-noise reference is unusable (not flat across the scan)."""


class DatasetFormatError(ValueError):
    """Malformed dataset file; carries the offending 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True)
class SweepPlan:
    """Scan range, grid size, analysis bandwidths and reproducibility seed.

    rbw_khz is the demodulation (resolution) bandwidth, vbw_khz the video
    bandwidth; their ratio fixes the sample count per variance window.
    """

    start_mhz: float
    end_mhz: float
    points: int
    rbw_khz: float
    vbw_khz: float
    omega_mhz: float
    seed: int

    def __post_init__(self):
        if not self.start_mhz < self.end_mhz:
            raise SweepPlanError(
                f"scan range must satisfy start < end, got [{self.start_mhz}, {self.end_mhz}]"
            )
        if self.points < 2:
            raise SweepPlanError(f"points must be >= 2, got {self.points}")
        if not self.vbw_khz > 0.0 or not self.rbw_khz > self.vbw_khz:
            raise SweepPlanError(
                f"bandwidths must satisfy rbw > vbw > 0, got rbw={self.rbw_khz}, vbw={self.vbw_khz}"
            )
        if self.samples_per_window < 2:
            raise SweepPlanError(
                f"rbw/vbw = {self.rbw_khz / self.vbw_khz:.3g} gives fewer than 2 "
                "samples per window; variances would be undefined"
            )
        if not self.omega_mhz > 0.0:
            raise SweepPlanError(f"analysis frequency must be > 0, got {self.omega_mhz}")
        if not 0 <= int(self.seed) < 2**64:
            raise SweepPlanError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def samples_per_window(self) -> int:
        return int(self.rbw_khz / self.vbw_khz)

    def grid(self) -> np.ndarray:
        return np.linspace(self.start_mhz, self.end_mhz, self.points)


@dataclass(frozen=True)
class SweepDataset:
    """Per-window variance estimates for all four channels plus provenance."""

    plan: SweepPlan
    model: ChannelModel
    delta_mhz: np.ndarray
    s_sum: np.ndarray
    s_diff: np.ndarray
    s_ch1: np.ndarray
    s_ch2: np.ndarray
    n_samples: np.ndarray
    truth: Optional[TwinBeamCovariance] = None
    skipped_mhz: tuple[float, ...] = field(default_factory=tuple)
    synthesis_mode: str = "baseband"

    def channel(self, name: str) -> np.ndarray:
        cols = {"sum": self.s_sum, "difference": self.s_diff,
                "single1": self.s_ch1, "single2": self.s_ch2}
        if name not in cols:
            raise KeyError(f"unknown channel {name!r}")
        return cols[name]


def window_rng(seed: int, window_index: int) -> np.random.Generator:
    """Independent counter-based substream for one window.

    Derived from (seed, window index) through a Philox generator, so parallel
    or out-of-order window synthesis reproduces the same samples.
    """
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=(int(seed), int(window_index))))
    )


def _pair_cholesky(v1: float, v2: float, c12: float) -> tuple[float, float, float]:
    # 2x2 lower Cholesky; the conditional variance is clamped at 0 against
    # roundoff for states at the perfect-correlation boundary.
    a = math.sqrt(v1)
    b = c12 / a
    c = math.sqrt(max(v2 - b * b, 0.0))
    return a, b, c


def _window_samples_baseband(rng, v1, v2, c12, n) -> tuple[np.ndarray, np.ndarray]:
    z = rng.standard_normal((2, n))
    a, b, c = _pair_cholesky(v1, v2, c12)
    return a * z[0], b * z[0] + c * z[1]


def demodulate(
    raw: np.ndarray,
    sample_rate_mhz: float,
    omega_mhz: float,
    rbw_khz: float,
) -> np.ndarray:
    """Mix a photocurrent series down to baseband and decimate to the RBW rate.

    Multiplies by a sqrt(2)-amplitude sinusoid at the analysis frequency (so a
    tone of amplitude a at that frequency settles to the level a/sqrt(2)),
    low-pass filters with a single pole at rbw/2 and keeps one sample per RBW
    interval.  Absolute gain is left to shot-noise calibration.
    """
    raw = np.asarray(raw, dtype=float)
    if sample_rate_mhz < 4.0 * omega_mhz:
        raise ValueError(
            f"sample rate {sample_rate_mhz} MHz is below 4x the analysis "
            f"frequency {omega_mhz} MHz"
        )
    fs_hz = sample_rate_mhz * 1e6
    rbw_hz = rbw_khz * 1e3
    decim = int(fs_hz / rbw_hz)
    if decim < 1:
        raise ValueError(f"RBW {rbw_khz} kHz exceeds the sample rate")
    if raw.size < 2 * decim:
        raise SeriesTooShortError(
            f"need at least {2 * decim} raw samples (two RBW intervals), got {raw.size}"
        )
    n = np.arange(raw.size)
    mixed = raw * (math.sqrt(2.0) * np.cos(2.0 * np.pi * (omega_mhz / sample_rate_mhz) * n))
    alpha = 1.0 - math.exp(-2.0 * np.pi * (rbw_hz / 2.0) / fs_hz)
    low = lfilter([alpha], [1.0, -(1.0 - alpha)], mixed)
    return low[decim - 1 :: decim]


class WindowEstimate(NamedTuple):
    delta_mhz: float
    variance: float
    n_samples: int


def estimate_spectrum(windows: Iterable[tuple[object, Sequence[float]]]) -> list[WindowEstimate]:
    """Unbiased per-window variance estimates.

    ``windows`` yields (detuning, samples) pairs; the detuning may be a scalar
    or a per-sample array, in which case the window is mapped to its mean.
    Windows never leak into each other; each estimate uses only its own
    samples.
    """
    out = []
    for deltas, samples in windows:
        samples = np.asarray(samples, dtype=float)
        if samples.size < 2:
            raise EmptyWindowError(
                f"window needs at least 2 samples for a variance, got {samples.size}"
            )
        delta = float(np.mean(deltas))
        out.append(WindowEstimate(delta, float(np.var(samples, ddof=1)), int(samples.size)))
    return out


def synthesize_sweep(
    plan: SweepPlan,
    model: ChannelModel,
    cov: TwinBeamCovariance,
    raw_chain: bool = False,
    calibration: float = 1.0,
    raw_sample_rate_mhz: Optional[float] = None,
) -> SweepDataset:
    """Generate one full swept-cavity dataset.

    At each grid detuning the analytic covariance of the two detected
    photocurrent quadratures is evaluated, a window of independent Gaussian
    samples is drawn from it (or, in raw-chain mode, wideband noise with that
    covariance is demodulated end to end), and the four channel variances are
    estimated.  Grid points where the carrier reflection vanishes are
    recorded in ``skipped_mhz`` instead of aborting the scan.  Output is a
    pure function of (plan, model, cov, mode): identical inputs reproduce
    identical datasets.
    """
    violations = validate_physicality(cov)
    if violations:
        raise UnphysicalVarianceError(
            "covariance violates physicality: " + "; ".join(violations)
        )
    if plan.omega_mhz != model.omega_mhz:
        raise SweepPlanError(
            f"plan and channel model disagree on the analysis frequency "
            f"({plan.omega_mhz} vs {model.omega_mhz} MHz)"
        )

    n = plan.samples_per_window
    fs = raw_sample_rate_mhz if raw_sample_rate_mhz is not None else 8.0 * plan.omega_mhz
    settle = 5  # baseband samples discarded while the RBW pole charges

    grid = plan.grid()
    # Mask singular grid points first so the analytic covariance can be
    # evaluated on the remaining grid in one vectorized pass.
    carrier_ok = np.ones(grid.size, dtype=bool)
    for spec in {model.cavity1, model.cavity2}:
        carrier_ok &= np.abs(reflection_coeff(spec, grid)) >= SINGULAR_CARRIER_TOL
    skipped = [float(d) for d in grid[~carrier_ok]]
    good = np.nonzero(carrier_ok)[0]
    v1_all, v2_all, c12_all = beam_pair_covariance(model, cov, grid[good])
    v1_all, v2_all, c12_all = (np.atleast_1d(v1_all), np.atleast_1d(v2_all),
                               np.atleast_1d(c12_all))

    deltas, s_sum, s_diff, s_ch1, s_ch2 = [], [], [], [], []
    for k, idx in enumerate(good):
        v1, v2, c12 = float(v1_all[k]), float(v2_all[k]), float(c12_all[k])
        rng = window_rng(plan.seed, int(idx))
        if raw_chain:
            decim = int(fs * 1e6 / (plan.rbw_khz * 1e3))
            n_raw = (n + settle) * decim
            z = rng.standard_normal((2, n_raw))
            a, b, c = _pair_cholesky(v1, v2, c12)
            x1 = demodulate(a * z[0], fs, plan.omega_mhz, plan.rbw_khz)[settle:]
            x2 = demodulate(b * z[0] + c * z[1], fs, plan.omega_mhz, plan.rbw_khz)[settle:]
        else:
            x1, x2 = _window_samples_baseband(rng, v1, v2, c12, n)
        sb_sum = (x1 + x2) / math.sqrt(2.0)
        sb_diff = (x1 - x2) / math.sqrt(2.0)
        deltas.append(float(grid[idx]))
        s_sum.append(np.var(sb_sum, ddof=1) * calibration)
        s_diff.append(np.var(sb_diff, ddof=1) * calibration)
        s_ch1.append(np.var(x1, ddof=1) * calibration)
        s_ch2.append(np.var(x2, ddof=1) * calibration)

    return SweepDataset(
        plan=plan,
        model=model,
        delta_mhz=np.asarray(deltas),
        s_sum=np.asarray(s_sum),
        s_diff=np.asarray(s_diff),
        s_ch1=np.asarray(s_ch1),
        s_ch2=np.asarray(s_ch2),
        n_samples=np.full(len(deltas), n, dtype=int),
        truth=cov,
        skipped_mhz=tuple(skipped),
        synthesis_mode="raw" if raw_chain else "baseband",
    )


def shot_noise_calibrate(
    reference: SweepDataset,
    flatness_tol: float = 0.05,
    bins: int = 10,
) -> float:
    """Scale factor mapping raw variance units to shot-noise units.

    The reference dataset must come from a coherent (identity-covariance)
    input, whose true spectrum is flat across the scan.  The factor is the
    reciprocal of the pooled sum/difference-channel mean.  Flatness is
    checked on contiguous bins of windows: a bin mean further than
    ``flatness_tol`` from the pooled mean fails the reference.
    """
    pooled = np.concatenate([reference.s_sum, reference.s_diff])
    mean = float(np.mean(pooled))
    if not mean > 0.0:
        raise CalibrationError("reference variances are not positive")

    # Each flatness bin pools at least ten windows so the 5% gate tests
    # structure, not single-window estimator noise.  The sum and difference
    # channels are binned separately: correlated input noise moves them in
    # opposite directions, which their average would hide.
    n_bins = max(1, min(bins, reference.s_sum.size // 10))
    for name, column in (("sum", reference.s_sum), ("difference", reference.s_diff)):
        for chunk in np.array_split(column, n_bins):
            rel = abs(float(np.mean(chunk)) / mean - 1.0)
            if rel > flatness_tol:
                raise CalibrationError(
                    f"reference is not flat: a {name}-channel bin deviates "
                    f"{rel:.3%} from the pooled mean (tolerance "
                    f"{flatness_tol:.0%}); was the input coherent?"
                )
    return 1.0 / mean


# --- dataset file format ---------------------------------------------------

def format_positional6(x: float) -> str:
    """Six significant digits, always positional (no exponent)."""
    return np.format_float_positional(
        float(x) + 0.0, precision=6, unique=False, fractional=False
    )


def dumps_dataset(ds: SweepDataset) -> str:
    """Serialize a dataset to its CSV text form.

    Header comments carry the full plan, channel-model parameters, the truth
    covariance and the synthesis mode, as flat key = value lines, so a file is
    self-describing and byte-stable for fixed inputs.
    """
    buf = io.StringIO()
    w = buf.write
    w(f"# {DATASET_MAGIC}\n")
    p = ds.plan
    for key, val in (
        ("plan.start_mhz", repr(p.start_mhz)),
        ("plan.end_mhz", repr(p.end_mhz)),
        ("plan.points", str(p.points)),
        ("plan.rbw_khz", repr(p.rbw_khz)),
        ("plan.vbw_khz", repr(p.vbw_khz)),
        ("plan.omega_mhz", repr(p.omega_mhz)),
        ("plan.seed", str(p.seed)),
    ):
        w(f"# {key} = {val}\n")
    m = ds.model
    for tag, cav in (("cavity1", m.cavity1), ("cavity2", m.cavity2)):
        w(f"# model.{tag}.r1 = {cav.r1!r}\n")
        w(f"# model.{tag}.loss = {cav.loss!r}\n")
        w(f"# model.{tag}.bandwidth_mhz = {cav.bandwidth_mhz!r}\n")
    w(f"# model.omega_mhz = {m.omega_mhz!r}\n")
    w(f"# model.efficiency = {m.efficiency!r}\n")
    if ds.truth is not None:
        t = ds.truth
        for key, val in (("vp1", t.vp1), ("vp2", t.vp2), ("vq1", t.vq1),
                         ("vq2", t.vq2), ("cp", t.cp), ("cq", t.cq)):
            w(f"# truth.{key} = {val!r}\n")
    w(f"# synthesis.mode = {ds.synthesis_mode}\n")
    if ds.skipped_mhz:
        w("# skipped_detunings_mhz = " + ",".join(repr(d) for d in ds.skipped_mhz) + "\n")
    w("detuning_mhz,s_sum,s_diff,s_ch1,s_ch2,n_samples\n")
    for i in range(ds.delta_mhz.size):
        w(
            f"{format_positional6(ds.delta_mhz[i])},{format_positional6(ds.s_sum[i])},{format_positional6(ds.s_diff[i])},"
            f"{format_positional6(ds.s_ch1[i])},{format_positional6(ds.s_ch2[i])},{int(ds.n_samples[i])}\n"
        )
    return buf.getvalue()


def write_dataset(ds: SweepDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_dataset(ds))


def _parse_header(meta: dict[str, str]):
    def f(key):
        return float(meta[key])

    plan = SweepPlan(
        start_mhz=f("plan.start_mhz"),
        end_mhz=f("plan.end_mhz"),
        points=int(meta["plan.points"]),
        rbw_khz=f("plan.rbw_khz"),
        vbw_khz=f("plan.vbw_khz"),
        omega_mhz=f("plan.omega_mhz"),
        seed=int(meta["plan.seed"]),
    )
    model = ChannelModel(
        cavity1=CavitySpec(f("model.cavity1.r1"), f("model.cavity1.loss"),
                           f("model.cavity1.bandwidth_mhz")),
        cavity2=CavitySpec(f("model.cavity2.r1"), f("model.cavity2.loss"),
                           f("model.cavity2.bandwidth_mhz")),
        omega_mhz=f("model.omega_mhz"),
        efficiency=f("model.efficiency"),
    )
    truth = None
    if "truth.vp1" in meta:
        truth = TwinBeamCovariance(
            vp1=f("truth.vp1"), vp2=f("truth.vp2"),
            vq1=f("truth.vq1"), vq2=f("truth.vq2"),
            cp=f("truth.cp"), cq=f("truth.cq"),
        )
    skipped = tuple(
        float(s) for s in meta.get("skipped_detunings_mhz", "").split(",") if s
    )
    return plan, model, truth, skipped, meta.get("synthesis.mode", "baseband")


def loads_dataset(text: str) -> SweepDataset:
    """Parse dataset CSV text back into a SweepDataset.

    Raises DatasetFormatError with the offending line number on any
    malformed header or row.
    """
    meta: dict[str, str] = {}
    rows = []
    header_seen = False
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, val = body.partition("=")
                meta[key.strip()] = val.strip()
            continue
        if not header_seen:
            if line != "detuning_mhz,s_sum,s_diff,s_ch1,s_ch2,n_samples":
                raise DatasetFormatError(line_no, f"unexpected column header {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise DatasetFormatError(line_no, f"expected 6 fields, got {len(parts)}")
        try:
            rows.append([float(x) for x in parts[:5]] + [int(parts[5])])
        except ValueError as exc:
            raise DatasetFormatError(line_no, str(exc)) from None
    if not header_seen:
        raise DatasetFormatError(len(text.splitlines()) or 1, "no column header found")
    try:
        plan, model, truth, skipped, mode = _parse_header(meta)
    except KeyError as exc:
        raise DatasetFormatError(1, f"missing header key {exc.args[0]}") from None

    cols = np.asarray([r[:5] for r in rows], dtype=float).reshape(len(rows), 5).T
    return SweepDataset(
        plan=plan,
        model=model,
        delta_mhz=cols[0] if rows else np.empty(0),
        s_sum=cols[1] if rows else np.empty(0),
        s_diff=cols[2] if rows else np.empty(0),
        s_ch1=cols[3] if rows else np.empty(0),
        s_ch2=cols[4] if rows else np.empty(0),
        n_samples=np.asarray([r[5] for r in rows], dtype=int),
        truth=truth,
        skipped_mhz=skipped,
        synthesis_mode=mode,
    )


def read_dataset(path) -> SweepDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_dataset(fh.read())
