import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixtures import build_session  # noqa: E402

from beamrecall.geometry import uma8_geometry  # noqa: E402
from beamrecall.simulate import SceneSource, SceneSpec, simulate_scene  # noqa: E402
from beamrecall.synth import synth_speech  # noqa: E402

FS = 16000


@pytest.fixture(scope="session")
def speech_pair():
    """Two independent 32 s speech-like fixtures."""
    return synth_speech(32.0, FS, seed=11), synth_speech(32.0, FS, seed=22)


@pytest.fixture(scope="session")
def two_source_scene(speech_pair):
    """Noiseless anechoic scene: sources at 45 and 135 degrees."""
    s45, s135 = speech_pair
    spec = SceneSpec(
        sources=[SceneSource(45.0, s45), SceneSource(135.0, s135)],
        geometry=uma8_geometry(),
        sample_rate_hz=FS,
    )
    mixture, references = simulate_scene(spec)
    return spec, mixture, references


@pytest.fixture(scope="session")
def two_source_scene_noisy(speech_pair):
    """Same scene with 10 dB SNR diffuse noise."""
    s45, s135 = speech_pair
    spec = SceneSpec(
        sources=[SceneSource(45.0, s45), SceneSource(135.0, s135)],
        geometry=uma8_geometry(),
        sample_rate_hz=FS,
        noise_snr_db=10.0,
        seed=7,
    )
    mixture, references = simulate_scene(spec)
    return spec, mixture, references


@pytest.fixture(scope="session")
def recall_session(tmp_path_factory):
    """Fully ingested two-stream fixture session."""
    root = tmp_path_factory.mktemp("recall-session")
    session_id, store = build_session(root)
    return session_id, store


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
