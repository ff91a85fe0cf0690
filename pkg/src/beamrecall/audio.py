"""Multichannel WAV I/O, STFT/ISTFT, and time-interval slicing.

All audio inside the package is float64 in [-1, 1]; integer encodings are
converted at the file boundary. The RIFF parser is hand-rolled because the
stdlib ``wave`` module rejects IEEE-float files and gives no control over
truncation errors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadConfig,
    EmptyInterval,
    IoFailure,
    MalformedWav,
    UnsupportedEncoding,
)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

DEFAULT_WINDOW = 512
DEFAULT_HOP = 256


@dataclass(frozen=True)
class MultichannelAudio:
    """Sample-aligned PCM channels plus sample rate.

    ``samples`` has shape (channels, n); values are float64 in [-1, 1]
    (beamformer output may mildly exceed the range, clipped only on write).
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[np.newaxis, :]
        if s.ndim != 2 or s.shape[0] < 1:
            raise BadConfig("audio must be (channels, samples) with >= 1 channel")
        if self.sample_rate_hz <= 0:
            raise BadConfig("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def channel(self, idx: int) -> np.ndarray:
        return self.samples[idx]


@dataclass(frozen=True)
class StftTensor:
    """Frequency-domain frames indexed [channel, frame, bin].

    ``n_samples`` records the time-domain length the tensor was computed
    from so synthesis can trim the overlap-add tail padding.
    """

    frames: np.ndarray
    window_size: int
    hop_size: int
    sample_rate_hz: int
    window_kind: str = "hann_periodic"
    n_samples: int = field(default=0)

    @property
    def n_channels(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[2]

    def bin_freq_hz(self, bin_index: int) -> float:
        return bin_index * self.sample_rate_hz / self.window_size


def _read_exact(data: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(data):
        raise MalformedWav(f"truncated {what} at byte {offset}")
    return data[offset:offset + size]


def read_wav(path) -> MultichannelAudio:
    """Read a PCM 16/24/32-bit integer or 32-bit float RIFF WAV file.

    Samples are normalized to [-1, 1] (integer full scale = 2^(bits-1));
    channel order is preserved.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    offset = 12
    while offset + 8 <= len(data):
        cid = data[offset:offset + 4]
        (csize,) = struct.unpack_from("<I", data, offset + 4)
        body_off = offset + 8
        if cid == b"fmt ":
            body = _read_exact(data, body_off, min(csize, 16), "fmt chunk")
            if csize < 16:
                raise MalformedWav(f"{path}: fmt chunk too small")
            tag, n_ch, rate, _, block_align, bits = struct.unpack("<HHIIHH", body)
            if tag == WAVE_FORMAT_EXTENSIBLE:
                # actual format lives in the first two bytes of the SubFormat GUID
                ext = _read_exact(data, body_off + 24, 2, "fmt extension")
                (tag,) = struct.unpack("<H", ext)
            fmt = (tag, n_ch, rate, block_align, bits)
        elif cid == b"data":
            payload = _read_exact(data, body_off, csize, "data chunk")
        offset = body_off + csize + (csize & 1)

    if fmt is None:
        raise MalformedWav(f"{path}: missing fmt chunk")
    if payload is None:
        raise MalformedWav(f"{path}: missing data chunk")

    tag, n_ch, rate, block_align, bits = fmt
    if n_ch < 1 or rate <= 0:
        raise MalformedWav(f"{path}: invalid channel count or sample rate")

    if tag == WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(payload[:len(payload) - len(payload) % (2 * n_ch)], dtype="<i2")
        if len(payload) % (2 * n_ch):
            raise MalformedWav(f"{path}: data chunk not a whole number of frames")
        samples = raw.astype(np.float64) / 32768.0
    elif tag == WAVE_FORMAT_PCM and bits == 24:
        frame_bytes = 3 * n_ch
        if len(payload) % frame_bytes:
            raise MalformedWav(f"{path}: data chunk not a whole number of frames")
        b = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3)
        raw = (b[:, 0].astype(np.int32)
               | (b[:, 1].astype(np.int32) << 8)
               | (b[:, 2].astype(np.int32) << 16))
        raw = np.where(raw >= 1 << 23, raw - (1 << 24), raw)
        samples = raw.astype(np.float64) / float(1 << 23)
    elif tag == WAVE_FORMAT_PCM and bits == 32:
        if len(payload) % (4 * n_ch):
            raise MalformedWav(f"{path}: data chunk not a whole number of frames")
        raw = np.frombuffer(payload, dtype="<i4")
        samples = raw.astype(np.float64) / float(1 << 31)
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        if len(payload) % (4 * n_ch):
            raise MalformedWav(f"{path}: data chunk not a whole number of frames")
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncoding(
            f"{path}: format tag 0x{tag:04x} with {bits}-bit samples is not supported"
        )

    samples = samples.reshape(-1, n_ch).T.copy()
    return MultichannelAudio(samples, rate)


def encode_wav(audio: MultichannelAudio, bit_depth: int = 16) -> tuple[bytes, int]:
    """Serialize to RIFF bytes at 16/24/32-bit PCM or 32-bit float ("float32").

    Out-of-range samples are hard-clipped; returns (bytes, clipped count).
    """
    samples = audio.samples
    if not np.all(np.isfinite(samples)):
        raise BadConfig("samples must be finite")

    n_ch = samples.shape[0]
    interleaved = samples.T  # (n, ch)

    if bit_depth in (16, 24, 32):
        # integer encodings cannot represent out-of-range values: clip and count
        clipped = int(np.count_nonzero((interleaved > 1.0) | (interleaved < -1.0)))
        x = np.clip(interleaved, -1.0, 1.0)
        full = float(1 << (bit_depth - 1))
        q = np.round(x * full)
        q = np.clip(q, -full, full - 1)
        if bit_depth == 16:
            body = q.astype("<i2").tobytes()
        elif bit_depth == 32:
            body = q.astype("<i4").tobytes()
        else:
            q32 = q.astype(np.int64)
            b = np.empty((q32.size, 3), dtype=np.uint8)
            flat = q32.reshape(-1) & 0xFFFFFF
            b[:, 0] = flat & 0xFF
            b[:, 1] = (flat >> 8) & 0xFF
            b[:, 2] = (flat >> 16) & 0xFF
            body = b.tobytes()
        tag, bits = WAVE_FORMAT_PCM, bit_depth
    elif bit_depth == "float32":
        # lossless path: float encoding keeps out-of-range values verbatim
        clipped = 0
        body = interleaved.astype("<f4").tobytes()
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise BadConfig(f"unsupported bit depth {bit_depth!r}")

    byte_rate = audio.sample_rate_hz * n_ch * bits // 8
    block_align = n_ch * bits // 8
    fmt = struct.pack(
        "<HHIIHH", tag, n_ch, audio.sample_rate_hz, byte_rate, block_align, bits
    )
    chunks = b"".join([
        b"fmt ", struct.pack("<I", len(fmt)), fmt,
        b"data", struct.pack("<I", len(body)), body,
    ])
    blob = b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks
    return blob, clipped


def write_wav(audio: MultichannelAudio, path, bit_depth: int = 16) -> int:
    """Write a WAV file; see encode_wav. Returns the clipped-sample count."""
    blob, clipped = encode_wav(audio, bit_depth)
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return clipped


def hann_periodic(window_size: int) -> np.ndarray:
    n = np.arange(window_size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window_size)


def _check_stft_config(window_size: int, hop_size: int):
    if window_size < 2 or (window_size & (window_size - 1)) != 0:
        raise BadConfig(f"window_size {window_size} is not a power of two")
    if hop_size < 1 or window_size % hop_size != 0:
        raise BadConfig(f"hop_size {hop_size} does not divide window {window_size}")
    if hop_size == window_size:
        # Hann analysis needs >= 2x overlap for constant overlap-add
        raise BadConfig("hop_size equal to window_size breaks overlap-add")


def stft(audio: MultichannelAudio, window_size: int = DEFAULT_WINDOW,
         hop_size: int = DEFAULT_HOP) -> StftTensor:
    """Short-time Fourier transform with a periodic Hann analysis window.

    Frame ``f`` covers samples [f*hop, f*hop + window); the signal is
    zero-padded at the end so the last frame is complete.
    """
    _check_stft_config(window_size, hop_size)
    x = audio.samples
    n = x.shape[1]
    if n <= window_size:
        n_frames = 1
    else:
        n_frames = 1 + int(np.ceil((n - window_size) / hop_size))
    padded_len = (n_frames - 1) * hop_size + window_size
    if padded_len > n:
        x = np.pad(x, ((0, 0), (0, padded_len - n)))

    window = hann_periodic(window_size)
    idx = np.arange(window_size)[np.newaxis, :] + hop_size * np.arange(n_frames)[:, np.newaxis]
    frames = x[:, idx] * window  # (ch, frame, win)
    spectra = np.fft.rfft(frames, axis=2)
    return StftTensor(
        frames=spectra,
        window_size=window_size,
        hop_size=hop_size,
        sample_rate_hz=audio.sample_rate_hz,
        n_samples=n,
    )


def istft(tensor: StftTensor, length: int | None = None) -> np.ndarray:
    """Weighted overlap-add synthesis of a single-channel tensor.

    Returns ``length`` samples when given, else the tensor's recorded
    source length, else the full overlap-add span.
    """
    if tensor.n_channels != 1:
        raise BadConfig(f"istft needs a single-channel tensor, got {tensor.n_channels}")
    _check_stft_config(tensor.window_size, tensor.hop_size)

    window = hann_periodic(tensor.window_size)
    frames = np.fft.irfft(tensor.frames[0], n=tensor.window_size, axis=1)
    n_frames = frames.shape[0]
    total = (n_frames - 1) * tensor.hop_size + tensor.window_size

    out = np.zeros(total)
    norm = np.zeros(total)
    for f in range(n_frames):
        start = f * tensor.hop_size
        out[start:start + tensor.window_size] += frames[f] * window
        norm[start:start + tensor.window_size] += window * window
    nonzero = norm > 1e-10
    out[nonzero] /= norm[nonzero]

    if length is None:
        length = tensor.n_samples or total
    if length <= total:
        return out[:length]
    return np.pad(out, (0, length - total))


def slice_audio(audio: MultichannelAudio, start_s: float, end_s: float) -> MultichannelAudio:
    """Sample-accurate slice of [start_s, end_s); end clamped to duration."""
    if start_s < 0 or end_s <= start_s:
        raise BadConfig(f"bad interval [{start_s}, {end_s})")
    fs = audio.sample_rate_hz
    start = int(round(start_s * fs))
    end = min(int(round(end_s * fs)), audio.n_samples)
    if start >= end:
        raise EmptyInterval(f"interval [{start_s}, {end_s}) starts past the audio end")
    return MultichannelAudio(audio.samples[:, start:end].copy(), fs)
