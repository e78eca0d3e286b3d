"""twinbeam-lab: a desk-scale lab for two-color twin-beam entanglement measurement.

Models analysis cavities as quadrature rotators, synthesizes swept-cavity
noise spectra of twin beams, fits them to recover combined quadrature
variances, and evaluates the inseparability and inferred-variance
entanglement criteria.
"""

__version__ = "0.1.0"

from .cavity import (
    CavityModelError,
    CavitySpec,
    ImpedanceMatchedCarrierError,
    RotationCoeffs,
    input_mirror_for_fwhm,
    model_fwhm,
    reflection_coeff,
    rotation_coeffs,
    transmission_coeff,
)
from .criteria import (
    CriteriaReport,
    duan,
    epr_inferred,
    epr_product,
    from_decibels,
    to_decibels,
)
from .noise_model import (
    ChannelModel,
    channel_spectrum,
    find_phase_readout_detunings,
    reflected_spectrum,
)
from .quadratures import (
    CombinedQuadratures,
    TwinBeamCovariance,
    UnphysicalVarianceError,
    apply_loss,
    combine,
    correct_loss,
    validate_physicality,
)
from .sweep import (
    SweepDataset,
    SweepPlan,
    demodulate,
    estimate_spectrum,
    read_dataset,
    shot_noise_calibrate,
    synthesize_sweep,
    write_dataset,
)

__all__ = [
    "CavityModelError",
    "CavitySpec",
    "ChannelModel",
    "CombinedQuadratures",
    "CriteriaReport",
    "ImpedanceMatchedCarrierError",
    "RotationCoeffs",
    "SweepDataset",
    "SweepPlan",
    "TwinBeamCovariance",
    "UnphysicalVarianceError",
    "apply_loss",
    "channel_spectrum",
    "combine",
    "correct_loss",
    "demodulate",
    "duan",
    "epr_inferred",
    "epr_product",
    "estimate_spectrum",
    "find_phase_readout_detunings",
    "from_decibels",
    "input_mirror_for_fwhm",
    "model_fwhm",
    "read_dataset",
    "reflected_spectrum",
    "reflection_coeff",
    "rotation_coeffs",
    "shot_noise_calibrate",
    "synthesize_sweep",
    "to_decibels",
    "transmission_coeff",
    "validate_physicality",
    "write_dataset",
    "__version__",
]
