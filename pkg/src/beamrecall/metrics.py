"""Speech quality metrics: scale-invariant SDR and short-time intelligibility.

The intelligibility score follows the standard short-time objective
measure: one-third-octave band envelopes over 384 ms sliding segments,
normalized, clipped, and correlated between the clean and processed
signals. It runs natively at 16 kHz on the package's 512/256 STFT frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import MultichannelAudio, hann_periodic
from .errors import DimensionMismatch, TooShort, UnsupportedRate, ZeroReference

SI_SDR_CAP_DB = 60.0

STOI_RATE_HZ = 16000
STOI_WINDOW = 512
STOI_HOP = 256
STOI_BANDS = 15
STOI_LOWEST_CENTER_HZ = 150.0
STOI_SEGMENT_FRAMES = 24  # 24 * 256 / 16000 = 384 ms
STOI_DYNAMIC_RANGE_DB = 40.0
STOI_CLIP_DB = -15.0
_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class StreamMetrics:
    label: str
    stoi_before: float
    stoi_after: float
    si_sdr_before_db: float
    si_sdr_after_db: float


@dataclass(frozen=True)
class MetricReport:
    streams: list[StreamMetrics]

    def to_dict(self) -> dict:
        return {
            "streams": [
                {
                    "label": s.label,
                    "stoi_before": s.stoi_before,
                    "stoi_after": s.stoi_after,
                    "si_sdr_before_db": s.si_sdr_before_db,
                    "si_sdr_after_db": s.si_sdr_after_db,
                }
                for s in self.streams
            ]
        }


def si_sdr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Scale-invariant SDR in dB, capped at +60 dB.

    The estimate is projected onto the reference; the ratio of projected
    energy to residual energy is the score, so any positive rescaling of
    either signal leaves it unchanged.
    """
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)
    if ref.shape != est.shape:
        raise DimensionMismatch(f"length mismatch: {ref.shape} vs {est.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ZeroReference("reference signal is identically zero")
    scale = float(np.dot(est, ref)) / ref_energy
    target = scale * ref
    residual = est - target
    num = float(np.dot(target, target))
    den = float(np.dot(residual, residual))
    if den == 0.0 or num / den > 10.0 ** (SI_SDR_CAP_DB / 10.0):
        return SI_SDR_CAP_DB
    return 10.0 * np.log10(num / den)


def _third_octave_bands(n_bins: int, sample_rate_hz: int, window: int) -> np.ndarray:
    """Boolean (bands, bins) membership matrix for 15 one-third-octave bands."""
    freqs = np.arange(n_bins) * sample_rate_hz / window
    centers = STOI_LOWEST_CENTER_HZ * 2.0 ** (np.arange(STOI_BANDS) / 3.0)
    lo = centers / 2.0 ** (1.0 / 6.0)
    hi = centers * 2.0 ** (1.0 / 6.0)
    bands = (freqs[np.newaxis, :] >= lo[:, np.newaxis]) & (freqs[np.newaxis, :] < hi[:, np.newaxis])
    return bands


def _frame_spectra(x: np.ndarray) -> np.ndarray:
    """Hann-windowed magnitude STFT frames, (frames, bins)."""
    window = hann_periodic(STOI_WINDOW)
    n = len(x)
    if n < STOI_WINDOW:
        raise TooShort(f"need at least {STOI_WINDOW} samples, got {n}")
    n_frames = 1 + (n - STOI_WINDOW) // STOI_HOP
    idx = np.arange(STOI_WINDOW)[np.newaxis, :] + STOI_HOP * np.arange(n_frames)[:, np.newaxis]
    return np.abs(np.fft.rfft(x[idx] * window, axis=1))


def stoi(reference: np.ndarray, estimate: np.ndarray, sample_rate_hz: int) -> float:
    """Short-time intelligibility of ``estimate`` against clean ``reference``.

    Frames more than 40 dB below the loudest clean frame are dropped from
    both signals before band decomposition; TooShort is raised when fewer
    than one full 384 ms segment survives.
    """
    if sample_rate_hz != STOI_RATE_HZ:
        raise UnsupportedRate(f"stoi runs at {STOI_RATE_HZ} Hz, got {sample_rate_hz}")
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)
    if ref.shape != est.shape:
        n = min(len(ref), len(est))
        ref, est = ref[:n], est[:n]

    spec_ref = _frame_spectra(ref)
    spec_est = _frame_spectra(est)

    frame_energy = np.sum(spec_ref ** 2, axis=1)
    limit = np.max(frame_energy) / 10.0 ** (STOI_DYNAMIC_RANGE_DB / 10.0)
    keep = frame_energy > limit
    spec_ref = spec_ref[keep]
    spec_est = spec_est[keep]
    if spec_ref.shape[0] < STOI_SEGMENT_FRAMES:
        raise TooShort(
            f"only {spec_ref.shape[0]} voiced frames, need {STOI_SEGMENT_FRAMES}"
        )

    bands = _third_octave_bands(spec_ref.shape[1], STOI_RATE_HZ, STOI_WINDOW)
    # band envelope = sqrt of band-summed power, (frames, bands)
    env_ref = np.sqrt(spec_ref ** 2 @ bands.T.astype(np.float64))
    env_est = np.sqrt(spec_est ** 2 @ bands.T.astype(np.float64))

    n_frames = env_ref.shape[0]
    clip_factor = 10.0 ** (-STOI_CLIP_DB / 20.0)
    correlations = []
    for m in range(STOI_SEGMENT_FRAMES, n_frames + 1):
        x = env_ref[m - STOI_SEGMENT_FRAMES:m]  # (N, bands)
        y = env_est[m - STOI_SEGMENT_FRAMES:m]
        norm = np.linalg.norm(x, axis=0) / (np.linalg.norm(y, axis=0) + _EPS)
        y_scaled = y * norm
        y_clipped = np.minimum(y_scaled, x * (1.0 + clip_factor))
        xc = x - x.mean(axis=0)
        yc = y_clipped - y_clipped.mean(axis=0)
        denom = np.linalg.norm(xc, axis=0) * np.linalg.norm(yc, axis=0) + _EPS
        correlations.append(np.sum(xc * yc, axis=0) / denom)
    return float(np.mean(correlations))


def compare_streams(references: dict[str, np.ndarray],
                    before: dict[str, np.ndarray],
                    after: dict[str, np.ndarray],
                    sample_rate_hz: int) -> MetricReport:
    """Per-stream before/after metric table against clean references."""
    rows = []
    for label in references:
        ref = references[label]
        rows.append(StreamMetrics(
            label=label,
            stoi_before=stoi(ref, before[label], sample_rate_hz),
            stoi_after=stoi(ref, after[label], sample_rate_hz),
            si_sdr_before_db=si_sdr(ref, before[label]),
            si_sdr_after_db=si_sdr(ref, after[label]),
        ))
    return MetricReport(rows)


def center_mic_signal(audio: MultichannelAudio, center_index: int) -> np.ndarray:
    return audio.samples[center_index]
