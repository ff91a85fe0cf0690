"""Deterministic speech-like test signals.

Real recordings are not shipped with the repository, so fixtures are
synthesized: a glottal-style pulse train with drifting pitch is pushed
through slowly wandering formant resonators, interleaved with fricative
noise bursts and silences. Not intelligible, but it has the envelope
dynamics, spectral tilt, and pauses that the intelligibility metric and
the DOA estimator care about.
"""

from __future__ import annotations

import numpy as np
from scipy import signal as sig


def _resonator(freq_hz: float, bandwidth_hz: float, fs: int):
    """Two-pole resonator coefficients (b, a)."""
    r = np.exp(-np.pi * bandwidth_hz / fs)
    theta = 2.0 * np.pi * freq_hz / fs
    a = np.array([1.0, -2.0 * r * np.cos(theta), r * r])
    b = np.array([1.0 - r])
    return b, a


def synth_speech(duration_s: float, sample_rate_hz: int = 16000, seed: int = 0,
                 pause_fraction: float = 0.2) -> np.ndarray:
    """Pseudo-speech at the given length, peak-normalized to 0.7."""
    rng = np.random.default_rng(seed)
    fs = sample_rate_hz
    n = int(round(duration_s * fs))
    out = np.zeros(n)

    voiced_p = (1.0 - pause_fraction) * 0.75
    fric_p = (1.0 - pause_fraction) * 0.25
    pos = 0
    while pos < n:
        kind = rng.choice(["voiced", "fricative", "pause"],
                          p=[voiced_p, fric_p, pause_fraction])
        seg_len = int(rng.uniform(0.08, 0.35) * fs)
        seg_len = min(seg_len, n - pos)
        if seg_len <= 0:
            break
        if kind == "pause":
            pos += seg_len
            continue

        if kind == "voiced":
            pitch = rng.uniform(90.0, 220.0)
            drift = rng.uniform(-0.3, 0.3)
            t = np.arange(seg_len) / fs
            inst_pitch = pitch * (1.0 + drift * t / max(t[-1], 1e-6))
            phase = 2.0 * np.pi * np.cumsum(inst_pitch) / fs
            # impulse-ish glottal excitation: rectified, sharpened sinusoid
            excitation = np.maximum(np.sin(phase), 0.0) ** 6
            excitation -= excitation.mean()
        else:
            excitation = rng.standard_normal(seg_len) * 0.5

        seg = np.zeros(seg_len)
        formants = sorted(rng.uniform(300.0, 3200.0, size=3))
        for f0 in formants:
            b, a = _resonator(f0, rng.uniform(60.0, 160.0), fs)
            seg += sig.lfilter(b, a, excitation)

        envelope = sig.windows.tukey(seg_len, alpha=0.4)
        seg *= envelope * rng.uniform(0.4, 1.0)
        out[pos:pos + seg_len] += seg
        pos += seg_len

    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.7 / peak
    # recording floor: pauses in real captures are never digitally silent
    out += rng.standard_normal(n) * (0.7 * 10.0 ** (-40.0 / 20.0))
    return out
