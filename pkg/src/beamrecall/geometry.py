"""Microphone-array geometry and far-field steering vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadConfig

SPEED_OF_SOUND = 343.0  # m/s, dry air at ~20 C


@dataclass(frozen=True)
class ArrayGeometry:
    """Mic positions in meters relative to the array center, z up."""

    mic_positions: np.ndarray  # (M, 3)
    name: str = "custom"

    def __post_init__(self):
        pos = np.asarray(self.mic_positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 2:
            raise BadConfig("geometry needs >= 2 mics with 3D positions")
        if not np.all(np.isfinite(pos)):
            raise BadConfig("mic positions must be finite")
        object.__setattr__(self, "mic_positions", pos)

    @property
    def n_mics(self) -> int:
        return self.mic_positions.shape[0]

    def center_mic_index(self) -> int:
        """Index of the mic closest to the array center."""
        return int(np.argmin(np.linalg.norm(self.mic_positions, axis=1)))


@dataclass(frozen=True)
class SteeringVector:
    azimuth_deg: float
    freq_hz: float
    elements: np.ndarray  # complex, one per mic


def uma8_geometry() -> ArrayGeometry:
    """7-mic circular array: one center mic plus six on a 45 mm radius, 60 deg apart."""
    positions = [(0.0, 0.0, 0.0)]
    radius = 0.045
    for k in range(6):
        theta = np.deg2rad(60.0 * k)
        positions.append((radius * np.cos(theta), radius * np.sin(theta), 0.0))
    return ArrayGeometry(np.array(positions), name="uma8")


def azimuth_unit_vector(azimuth_deg: float) -> np.ndarray:
    """Unit vector in the horizontal plane pointing from the array toward the source."""
    theta = np.deg2rad(azimuth_deg)
    return np.array([np.cos(theta), np.sin(theta), 0.0])


def steering_delays(geom: ArrayGeometry, azimuth_deg: float,
                    speed_of_sound: float = SPEED_OF_SOUND) -> np.ndarray:
    """Per-mic plane-wave lead times in seconds.

    A mic closer to the source (positive projection onto the source
    direction) receives the wavefront earlier, so its delay is positive
    in the "lead" sense used by the steering phase below.
    """
    u = azimuth_unit_vector(azimuth_deg)
    return geom.mic_positions @ u / speed_of_sound


def steering_vector(geom: ArrayGeometry, azimuth_deg: float, freq_hz: float,
                    speed_of_sound: float = SPEED_OF_SOUND) -> SteeringVector:
    """Far-field steering elements exp(+i 2 pi f (p.u)/c) per mic.

    Mics closer to the source lead in phase; a mic at the origin is 1+0i.
    """
    if freq_hz < 0:
        raise BadConfig("freq_hz must be >= 0")
    tau = steering_delays(geom, azimuth_deg, speed_of_sound)
    elements = np.exp(2j * np.pi * freq_hz * tau)
    return SteeringVector(azimuth_deg=azimuth_deg % 360.0, freq_hz=freq_hz, elements=elements)


def steering_matrix(geom: ArrayGeometry, azimuths_deg: np.ndarray, freqs_hz: np.ndarray,
                    speed_of_sound: float = SPEED_OF_SOUND) -> np.ndarray:
    """Steering elements for a grid, shape (n_azimuths, n_freqs, M)."""
    azimuths_deg = np.atleast_1d(np.asarray(azimuths_deg, dtype=np.float64))
    freqs_hz = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
    theta = np.deg2rad(azimuths_deg)
    u = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=1)  # (A, 3)
    tau = u @ geom.mic_positions.T / speed_of_sound  # (A, M)
    return np.exp(2j * np.pi * freqs_hz[np.newaxis, :, np.newaxis]
                  * tau[:, np.newaxis, :])
