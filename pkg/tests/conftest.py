import numpy as np
import pytest

import relaxcs as rc


@pytest.fixture(scope="session")
def frame64():
    return rc.WaveletFrame(64, 64)


@pytest.fixture(scope="session")
def small_acquisition():
    """32x32 noiseless, fully sampled, 2 coils, 3 echoes: identifiable setup."""
    times = rc.EchoTimes(np.array([7.64, 13.05, 18.46]))
    phantom = rc.make_phantom(32, 32, "blocks", seed=3, times=times)
    coils = rc.synth_coils(32, 32, 2)
    patterns = rc.make_echo_patterns(3, "fixed", 32, 32, 1.0, 0.0, 0, seed=0)
    acq = rc.AcquisitionSpec(times=times, coils=coils, patterns=patterns,
                             noise_sigma=0.0)
    data = rc.simulate_kspace(phantom, acq, seed=0)
    return phantom, coils, times, data
