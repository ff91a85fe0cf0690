"""Anechoic free-field scene synthesis for multichannel fixtures.

Each source is a far-field plane wave: channel m receives the source
advanced by the steering lead time (p_m . u)/c, so mics closer to the
source lead in phase, matching the steering-vector convention. Optional
diffuse noise is white Gaussian per channel, scaled so the realized SNR
at the center mic hits the requested value exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import MultichannelAudio
from .errors import BadConfig, RateMismatch
from .geometry import SPEED_OF_SOUND, ArrayGeometry, steering_delays, uma8_geometry

MAX_DELAY_S = 0.010


@dataclass(frozen=True)
class SceneSource:
    azimuth_deg: float
    samples: np.ndarray  # mono float
    gain: float = 1.0


@dataclass(frozen=True)
class SceneSpec:
    sources: list[SceneSource]
    geometry: ArrayGeometry = field(default_factory=uma8_geometry)
    sample_rate_hz: int = 16000
    noise_snr_db: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.sources:
            raise BadConfig("scene needs at least one source")
        if self.sample_rate_hz <= 0:
            raise RateMismatch("sample_rate_hz must be positive")


def fractional_delay(signal: np.ndarray, tau_s: float, sample_rate_hz: int) -> np.ndarray:
    """Band-limited delay by tau_s seconds via frequency-domain phase rotation.

    Positive tau shifts the signal later; length is preserved and the
    shifted-in region is (band-limited) silence thanks to zero padding.
    """
    if abs(tau_s) >= MAX_DELAY_S:
        raise BadConfig(f"|tau| {abs(tau_s):.4f}s exceeds {MAX_DELAY_S}s")
    x = np.asarray(signal, dtype=np.float64)
    n = len(x)
    margin = int(np.ceil(abs(tau_s) * sample_rate_hz)) + 1
    n_fft = 1 << int(np.ceil(np.log2(n + 2 * margin)))
    spectrum = np.fft.rfft(x, n=n_fft)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate_hz)
    spectrum *= np.exp(-2j * np.pi * freqs * tau_s)
    # keep the Nyquist bin real so the inverse transform stays consistent
    spectrum[-1] = spectrum[-1].real
    return np.fft.irfft(spectrum, n=n_fft)[:n]


def simulate_scene(spec: SceneSpec) -> tuple[MultichannelAudio, list[np.ndarray]]:
    """Render the scene; returns (mixture, per-source references at the center mic)."""
    fs = spec.sample_rate_hz
    geom = spec.geometry
    length = max(len(s.samples) for s in spec.sources)
    center = geom.center_mic_index()

    mixture = np.zeros((geom.n_mics, length))
    references = []
    for source in spec.sources:
        x = np.asarray(source.samples, dtype=np.float64)
        if len(x) < length:
            x = np.pad(x, (0, length - len(x)))
        leads = steering_delays(geom, source.azimuth_deg)
        for m in range(geom.n_mics):
            # lead = arrive earlier = negative delay
            mixture[m] += source.gain * fractional_delay(x, -leads[m], fs)
        references.append(source.gain * fractional_delay(x, -leads[center], fs))

    if spec.noise_snr_db is not None:
        rng = np.random.default_rng(spec.seed)
        noise = rng.standard_normal(mixture.shape)
        signal_power = float(np.mean(mixture[center] ** 2))
        noise_power = float(np.mean(noise[center] ** 2))
        target_power = signal_power / (10.0 ** (spec.noise_snr_db / 10.0))
        noise *= np.sqrt(target_power / noise_power)
        mixture = mixture + noise

    return MultichannelAudio(mixture, fs), references
