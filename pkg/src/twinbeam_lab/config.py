"""Run configuration: flat key = value files with dotted section keys.

The format is deliberately small and diff-friendly:

    # comment
    cavity1.bandwidth_mhz = 14.0
    detection.efficiency = 0.72

Unknown keys are rejected with their line number, so typos fail loudly.
Values can be overridden from the command line via repeatable
``--set KEY=VALUE`` flags; precedence is defaults < file < overrides.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .cavity import CavityModelError, CavitySpec
from .noise_model import ChannelModel
from .quadratures import CombinedQuadratures, TwinBeamCovariance
from .sweep import SweepPlan, SweepPlanError


class ConfigError(ValueError):
    """Bad configuration input; carries the offending key and line if known."""

    def __init__(self, message: str, key: Optional[str] = None, line_no: Optional[int] = None):
        self.key = key
        self.line_no = line_no
        prefix = ""
        if line_no is not None:
            prefix += f"line {line_no}: "
        if key is not None:
            prefix += f"{key}: "
        super().__init__(prefix + message)


# The shipped measurement settings: 14 MHz analysis cavities probed at 27 MHz,
# overall detection efficiency 0.72 (28% losses), 600 kHz RBW / 1 kHz VBW,
# scan of +/-4 bandwidths. The input mirror is left blank so the cavity is
# built with its resonance FWHM matched to the quoted bandwidth.
PAPER_DEFAULTS: dict[str, str] = {
    "cavity1.r1": "",
    "cavity1.loss": "0.003",
    "cavity1.bandwidth_mhz": "14.0",
    "cavity2.r1": "",
    "cavity2.loss": "",
    "cavity2.bandwidth_mhz": "",
    "analysis.omega_mhz": "27.0",
    "detection.efficiency": "0.72",
    "combined.sp_plus": "3.0",
    "combined.sp_minus": "0.63",
    "combined.sq_plus": "0.84",
    "combined.sq_minus": "3.0",
    "covariance.vp1": "",
    "covariance.vp2": "",
    "covariance.vq1": "",
    "covariance.vq2": "",
    "covariance.cp": "",
    "covariance.cq": "",
    "sweep.start_mhz": "-56.0",
    "sweep.end_mhz": "56.0",
    "sweep.points": "200",
    "sweep.rbw_khz": "600.0",
    "sweep.vbw_khz": "1.0",
    "seed": "12345",
}

_KNOWN_KEYS = frozenset(PAPER_DEFAULTS)


def parse_flat_config(text: str) -> dict[str, tuple[str, int]]:
    """Parse ``key = value`` lines; returns {key: (value, line_no)}.

    Blank lines and ``#`` comments are skipped.  Duplicate or unknown keys
    and lines without ``=`` raise ConfigError with their line number.
    """
    out: dict[str, tuple[str, int]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", key=None, line_no=line_no)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}", key=key, line_no=line_no)
        if key in out:
            raise ConfigError("duplicate key", key=key, line_no=line_no)
        out[key] = (value, line_no)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration for one pipeline run."""

    cavity1: CavitySpec
    cavity2: CavitySpec
    omega_mhz: float
    efficiency: float
    covariance: TwinBeamCovariance
    sweep_start_mhz: float
    sweep_end_mhz: float
    sweep_points: int
    rbw_khz: float
    vbw_khz: float
    seed: int
    raw_items: dict[str, str] = field(default_factory=dict, compare=False)

    def plan(self) -> SweepPlan:
        return SweepPlan(
            start_mhz=self.sweep_start_mhz,
            end_mhz=self.sweep_end_mhz,
            points=self.sweep_points,
            rbw_khz=self.rbw_khz,
            vbw_khz=self.vbw_khz,
            omega_mhz=self.omega_mhz,
            seed=self.seed,
        )

    def channel_model(self, channel: str = "sum") -> ChannelModel:
        return ChannelModel(
            cavity1=self.cavity1,
            cavity2=self.cavity2,
            omega_mhz=self.omega_mhz,
            efficiency=self.efficiency,
            channel=channel,
        )

    def echo_lines(self) -> list[str]:
        """The effective configuration as flat key = value lines."""
        return [f"{k} = {v}" for k, v in sorted(self.raw_items.items()) if v != ""]


def _get_float(items, key, line_of) -> Optional[float]:
    raw = items.get(key, "")
    if raw == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"not a number: {raw!r}", key=key, line_no=line_of.get(key)) from None


def _get_int(items, key, line_of) -> Optional[int]:
    raw = items.get(key, "")
    if raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"not an integer: {raw!r}", key=key, line_no=line_of.get(key)) from None


def _build_cavity(items, line_of, tag: str, fallback: Optional[CavitySpec]) -> CavitySpec:
    r1 = _get_float(items, f"{tag}.r1", line_of)
    loss = _get_float(items, f"{tag}.loss", line_of)
    bw = _get_float(items, f"{tag}.bandwidth_mhz", line_of)
    if loss is None and bw is None and r1 is None and fallback is not None:
        return fallback
    if loss is None or bw is None:
        raise ConfigError(
            f"{tag} needs loss and bandwidth_mhz (or leave all {tag}.* blank "
            "to reuse cavity1)", key=f"{tag}.loss",
        )
    try:
        if r1 is None:
            return CavitySpec.matched_fwhm(loss=loss, bandwidth_mhz=bw)
        return CavitySpec(r1=r1, loss=loss, bandwidth_mhz=bw)
    except CavityModelError as exc:
        raise ConfigError(str(exc), key=f"{tag}.r1") from None


def _build_covariance(items, line_of) -> TwinBeamCovariance:
    cov_keys = ["covariance.vp1", "covariance.vp2", "covariance.vq1",
                "covariance.vq2", "covariance.cp", "covariance.cq"]
    comb_keys = ["combined.sp_plus", "combined.sp_minus",
                 "combined.sq_plus", "combined.sq_minus"]
    cov_vals = [_get_float(items, k, line_of) for k in cov_keys]
    comb_vals = [_get_float(items, k, line_of) for k in comb_keys]

    if any(v is not None for v in cov_vals):
        missing = [k for k, v in zip(cov_keys, cov_vals) if v is None]
        if missing:
            raise ConfigError(f"incomplete covariance block, missing {missing}",
                              key=missing[0])
        return TwinBeamCovariance(*cov_vals)
    missing = [k for k, v in zip(comb_keys, comb_vals) if v is None]
    if missing:
        raise ConfigError(
            f"missing required field {missing[0]} (set either the combined.* "
            "block or the full covariance.* block)", key=missing[0],
        )
    return TwinBeamCovariance.from_combined(CombinedQuadratures(*comb_vals))


def resolve_config(
    file_text: Optional[str] = None,
    overrides: Optional[dict[str, str]] = None,
    seed: Optional[int] = None,
) -> RunConfig:
    """Merge defaults, an optional config file and overrides into a RunConfig.

    ``overrides`` are --set style key/value pairs (validated against the same
    key set); ``seed`` takes precedence over everything.
    """
    items = dict(PAPER_DEFAULTS)
    line_of: dict[str, int] = {}
    if file_text is not None:
        for key, (value, line_no) in parse_flat_config(file_text).items():
            items[key] = value
            line_of[key] = line_no
    for key, value in (overrides or {}).items():
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}", key=key)
        items[key] = value
        line_of.pop(key, None)
    if seed is not None:
        items["seed"] = str(seed)

    cavity1 = _build_cavity(items, line_of, "cavity1", fallback=None)
    cavity2 = _build_cavity(items, line_of, "cavity2", fallback=cavity1)
    omega = _get_float(items, "analysis.omega_mhz", line_of)
    if omega is None:
        raise ConfigError("missing required field", key="analysis.omega_mhz")
    eta = _get_float(items, "detection.efficiency", line_of)
    if eta is None:
        raise ConfigError("missing required field", key="detection.efficiency")
    if not 0.0 < eta <= 1.0:
        raise ConfigError(f"efficiency must be in (0, 1], got {eta}",
                          key="detection.efficiency",
                          line_no=line_of.get("detection.efficiency"))
    covariance = _build_covariance(items, line_of)

    start = _get_float(items, "sweep.start_mhz", line_of)
    end = _get_float(items, "sweep.end_mhz", line_of)
    points = _get_int(items, "sweep.points", line_of)
    rbw = _get_float(items, "sweep.rbw_khz", line_of)
    vbw = _get_float(items, "sweep.vbw_khz", line_of)
    the_seed = _get_int(items, "seed", line_of)
    for key, val in (("sweep.start_mhz", start), ("sweep.end_mhz", end),
                     ("sweep.points", points), ("sweep.rbw_khz", rbw),
                     ("sweep.vbw_khz", vbw), ("seed", the_seed)):
        if val is None:
            raise ConfigError("missing required field", key=key)

    cfg = RunConfig(
        cavity1=cavity1,
        cavity2=cavity2,
        omega_mhz=omega,
        efficiency=eta,
        covariance=covariance,
        sweep_start_mhz=start,
        sweep_end_mhz=end,
        sweep_points=points,
        rbw_khz=rbw,
        vbw_khz=vbw,
        seed=the_seed,
        raw_items={k: v for k, v in items.items() if v != ""},
    )
    try:
        cfg.plan()  # surface plan invariant violations as config errors
    except SweepPlanError as exc:
        raise ConfigError(str(exc), key="sweep.points",
                          line_no=line_of.get("sweep.points")) from None
    return cfg


def paper_config(seed: Optional[int] = None) -> RunConfig:
    """The shipped reproduction settings (see PAPER_DEFAULTS)."""
    return resolve_config(file_text=None, overrides=None, seed=seed)


def default_config_text() -> str:
    """The paper-settings defaults rendered as a config file."""
    lines = [
        "# twinbeam-lab paper-settings configuration",
        "# blank cavity r1 means: match the resonance FWHM to the bandwidth",
    ]
    for key, value in PAPER_DEFAULTS.items():
        if value == "":
            lines.append(f"# {key} =")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
