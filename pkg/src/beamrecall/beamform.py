"""MVDR beamforming: covariance estimation, per-bin weights, stream extraction.

Weights follow the classic minimum-variance distortionless-response solution
w = R^-1 d / (d^H R^-1 d) computed independently per frequency bin; the
covariance is estimated once over the whole recording (stationary tabletop
scene) with relative diagonal loading to guarantee invertibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import MultichannelAudio, StftTensor, istft, stft
from .errors import (
    DimensionMismatch,
    DuplicateLabel,
    BadConfig,
    BinOutOfRange,
    EmptyTensor,
    SingularCovariance,
)
from .geometry import SPEED_OF_SOUND, ArrayGeometry, steering_matrix

DEFAULT_LOADING = 1e-3
MIN_SEPARATION_DEG = 20.0
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class CovarianceMatrix:
    bin_index: int
    matrix: np.ndarray  # (M, M) complex, Hermitian PSD after loading


@dataclass(frozen=True)
class BeamformerWeights:
    azimuth_deg: float
    weights_per_bin: np.ndarray  # (n_bins, M) complex

    @property
    def n_bins(self) -> int:
        return self.weights_per_bin.shape[0]

    @property
    def n_mics(self) -> int:
        return self.weights_per_bin.shape[1]


@dataclass(frozen=True)
class DirectionalStream:
    """Mono beamformed audio tagged with its look direction."""

    label: str
    azimuth_deg: float
    samples: np.ndarray
    sample_rate_hz: int

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def as_audio(self) -> MultichannelAudio:
        return MultichannelAudio(self.samples[np.newaxis, :], self.sample_rate_hz)


def estimate_covariance(tensor: StftTensor, loading_factor: float = DEFAULT_LOADING
                        ) -> list[CovarianceMatrix]:
    """Per-bin spatial covariance (1/F) sum_f x x^H plus relative diagonal loading.

    The loading term is loading_factor * (tr(R)/M) * I so its strength tracks
    the signal level in each bin.
    """
    if tensor.n_frames < 1:
        raise EmptyTensor("covariance needs at least one frame")
    x = tensor.frames  # (M, F, B)
    m = tensor.n_channels
    # R[b] = (1/F) sum_f x[:, f, b] x[:, f, b]^H
    r = np.einsum("mfb,nfb->bmn", x, np.conj(x)) / tensor.n_frames
    # exact Hermitian symmetry, then loading
    r = 0.5 * (r + np.conj(np.transpose(r, (0, 2, 1))))
    if loading_factor > 0:
        trace = np.einsum("bmm->b", r).real
        eye = np.eye(m)
        r = r + (loading_factor * trace / m)[:, np.newaxis, np.newaxis] * eye
    return [CovarianceMatrix(b, r[b]) for b in range(r.shape[0])]


def covariance_stack(covariances: list[CovarianceMatrix]) -> np.ndarray:
    return np.stack([c.matrix for c in covariances])


def mvdr_weights(covariances: list[CovarianceMatrix], steering_per_bin: np.ndarray,
                 azimuth_deg: float = 0.0) -> BeamformerWeights:
    """Per-bin MVDR solution w = R^-1 d / (d^H R^-1 d).

    ``steering_per_bin`` is (n_bins, M). Raises SingularCovariance when a
    bin's matrix is ill-conditioned beyond recovery even after loading.
    """
    r = covariance_stack(covariances)
    d = np.asarray(steering_per_bin)
    if d.ndim != 2 or d.shape[0] != r.shape[0] or d.shape[1] != r.shape[1]:
        raise DimensionMismatch(
            f"steering {d.shape} does not match covariance {r.shape[:2]}"
        )
    cond = np.linalg.cond(r)
    if np.any(~np.isfinite(cond)) or np.any(cond > _COND_LIMIT):
        worst = int(np.argmax(cond))
        raise SingularCovariance(
            f"bin {worst} condition number {cond[worst]:.3e} exceeds {_COND_LIMIT:.0e}"
        )
    rinv_d = np.linalg.solve(r, d[:, :, np.newaxis])[:, :, 0]  # (B, M)
    denom = np.einsum("bm,bm->b", np.conj(d), rinv_d)
    weights = rinv_d / denom[:, np.newaxis]
    return BeamformerWeights(azimuth_deg=azimuth_deg % 360.0, weights_per_bin=weights)


def apply_beamformer(tensor: StftTensor, weights: BeamformerWeights,
                     length: int | None = None) -> np.ndarray:
    """Y(f, bin) = w_bin^H X(f, bin), then overlap-add back to time domain."""
    if tensor.n_channels != weights.n_mics:
        raise DimensionMismatch(
            f"{tensor.n_channels} channels vs {weights.n_mics} weight elements"
        )
    if tensor.n_bins != weights.n_bins:
        raise DimensionMismatch(
            f"{tensor.n_bins} bins vs {weights.n_bins} weight bins"
        )
    y = np.einsum("bm,mfb->fb", np.conj(weights.weights_per_bin), tensor.frames)
    mono = StftTensor(
        frames=y[np.newaxis],
        window_size=tensor.window_size,
        hop_size=tensor.hop_size,
        sample_rate_hz=tensor.sample_rate_hz,
        window_kind=tensor.window_kind,
        n_samples=tensor.n_samples,
    )
    return istft(mono, length=length)


def beam_pattern(weights: BeamformerWeights, geom: ArrayGeometry, freq_hz: float,
                 grid_resolution_deg: float = 1.0, window_size: int = 512,
                 sample_rate_hz: int = 16000,
                 speed_of_sound: float = SPEED_OF_SOUND) -> list[tuple[float, float]]:
    """Gain |w_bin^H d(theta)| over an azimuth grid at the bin nearest freq_hz."""
    bin_index = int(round(freq_hz * window_size / sample_rate_hz))
    if bin_index < 0 or bin_index >= weights.n_bins:
        raise BinOutOfRange(f"{freq_hz} Hz maps to bin {bin_index} of {weights.n_bins}")
    azimuths = np.arange(0.0, 360.0, grid_resolution_deg)
    d = steering_matrix(geom, azimuths, np.array([freq_hz]), speed_of_sound)[:, 0, :]
    w = weights.weights_per_bin[bin_index]
    gains = np.abs(d @ np.conj(w))
    return [(float(a), float(g)) for a, g in zip(azimuths, gains)]


def steering_for_bins(geom: ArrayGeometry, azimuth_deg: float, n_bins: int,
                      window_size: int, sample_rate_hz: int,
                      speed_of_sound: float = SPEED_OF_SOUND) -> np.ndarray:
    """Steering matrix (n_bins, M) for every STFT bin toward one azimuth."""
    freqs = np.arange(n_bins) * sample_rate_hz / window_size
    return steering_matrix(geom, np.array([azimuth_deg]), freqs, speed_of_sound)[0]


def separate_streams(audio: MultichannelAudio, geom: ArrayGeometry,
                     azimuths: dict[str, float],
                     window_size: int = 512, hop_size: int = 256,
                     loading_factor: float = DEFAULT_LOADING,
                     min_separation_deg: float = MIN_SEPARATION_DEG,
                     speed_of_sound: float = SPEED_OF_SOUND) -> list[DirectionalStream]:
    """One MVDR stream per labeled azimuth, sharing one whole-recording covariance.

    Streams keep the input's length and sample rate.
    """
    if not azimuths:
        raise BadConfig("need at least one azimuth")
    if audio.n_channels != geom.n_mics:
        raise DimensionMismatch(
            f"{audio.n_channels} channels vs {geom.n_mics} mics in geometry"
        )
    labels = list(azimuths)
    if len(set(labels)) != len(labels):
        raise DuplicateLabel("stream labels must be unique")
    values = [azimuths[label] % 360.0 for label in labels]
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            gap = abs(values[i] - values[j])
            gap = min(gap, 360.0 - gap)
            if gap < min_separation_deg:
                raise BadConfig(
                    f"azimuths {values[i]} and {values[j]} closer than "
                    f"{min_separation_deg} deg"
                )

    # pad both ends so overlap-add edge artifacts of the filtered frames
    # land in the padding instead of the signal
    pad = window_size
    padded = MultichannelAudio(
        np.pad(audio.samples, ((0, 0), (pad, pad))), audio.sample_rate_hz
    )
    tensor = stft(padded, window_size, hop_size)
    covariances = estimate_covariance(tensor, loading_factor)
    streams = []
    for label, azimuth in zip(labels, values):
        d = steering_for_bins(geom, azimuth, tensor.n_bins, window_size,
                              audio.sample_rate_hz, speed_of_sound)
        w = mvdr_weights(covariances, d, azimuth_deg=azimuth)
        mono = apply_beamformer(tensor, w)
        streams.append(DirectionalStream(
            label=label,
            azimuth_deg=azimuth,
            samples=mono[pad:pad + audio.n_samples].copy(),
            sample_rate_hz=audio.sample_rate_hz,
        ))
    return streams
