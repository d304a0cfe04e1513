import numpy as np
import pytest

from earid.dataset import GeneratorConfig, generate_dataset
from earid.signal import Segment


def make_segment(ch1, ch2=None, fs=250.0, subject="s1", day=1, trial=1, index=0):
    """Segment wrapper for raw sample vectors with an all-retained mask."""
    ch1 = np.asarray(ch1, dtype=np.float64)
    ch2 = ch1.copy() if ch2 is None else np.asarray(ch2, dtype=np.float64)
    epoch_samples = int(round(2.0 * fs))
    n_epochs = ch1.size // epoch_samples
    return Segment(
        subject_id=subject, day=day, trial=trial, index=index, fs=fs,
        ch1=ch1, ch2=ch2, epoch_mask=np.ones(n_epochs, dtype=bool),
    )


def sos_gain(sos, f_hz, fs):
    """|H| at one frequency by direct per-section evaluation on the unit circle."""
    z = np.exp(-2j * np.pi * f_hz / fs)  # z^-1
    h = 1.0 + 0j
    for b0, b1, b2, a0, a1, a2 in np.atleast_2d(sos):
        h *= (b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z)
    return abs(h)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """4 clients + 2 imposters, 65 s at 250 Hz, no artifacts; fast fixture."""
    root = tmp_path_factory.mktemp("small-data")
    config = GeneratorConfig(
        n_clients=4, n_imposters=2, duration_s=65.0, fs=250.0, artifact_rate=0.0
    )
    manifest = generate_dataset(root, seed=7, config=config)
    return manifest, config
