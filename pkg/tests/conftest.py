import numpy as np
import pytest

from twinbeam_lab.cavity import CavitySpec
from twinbeam_lab.quadratures import TwinBeamCovariance

BANDWIDTH_MHZ = 14.0
OMEGA_MHZ = 27.0
EFFICIENCY = 0.72


@pytest.fixture(scope="session")
def paper_cavity() -> CavitySpec:
    """The shipped analysis cavity: resonance FWHM matched to 14 MHz."""
    return CavitySpec.matched_fwhm(loss=0.003, bandwidth_mhz=BANDWIDTH_MHZ)


@pytest.fixture(scope="session")
def twin_covariance() -> TwinBeamCovariance:
    """Symmetric twin-beam state with the (0.63, 0.84) squeezed combinations."""
    return TwinBeamCovariance.symmetric(vp=1.815, vq=1.92, cp=1.185, cq=-1.08)


def random_specs(rng: np.random.Generator, n: int):
    """Random well-behaved cavity specs for identity sweeps."""
    r1 = rng.uniform(0.05, 0.98, n)
    loss = rng.uniform(0.0, 0.5, n)
    bw = rng.uniform(0.5, 50.0, n)
    return r1, loss, bw
