import numpy as np
import pytest

from beamrecall.audio import (
    MultichannelAudio,
    StftTensor,
    istft,
    read_wav,
    slice_audio,
    stft,
    write_wav,
)
from beamrecall.errors import BadConfig, EmptyInterval, MalformedWav, UnsupportedEncoding

FS = 16000


def make_audio(rng, channels=1, seconds=1.0, fs=FS):
    samples = rng.standard_normal((channels, int(seconds * fs))) * 0.2
    return MultichannelAudio(samples, fs)


class TestWavIo:
    def test_header_echo(self, rng, tmp_path):
        audio = make_audio(rng, channels=7, seconds=1.0)
        write_wav(audio, tmp_path / "a.wav", bit_depth=16)
        back = read_wav(tmp_path / "a.wav")
        assert back.n_channels == 7
        assert back.n_samples == FS
        assert back.sample_rate_hz == FS

    def test_16bit_normalization_convention(self, tmp_path):
        # full-scale positive int16 maps to 32767/32768
        audio = MultichannelAudio(np.array([[32767.0 / 32768.0]]), FS)
        write_wav(audio, tmp_path / "b.wav", bit_depth=16)
        back = read_wav(tmp_path / "b.wav")
        assert back.samples[0, 0] == pytest.approx(32767.0 / 32768.0, abs=0)

    def test_truncated_data_chunk(self, rng, tmp_path):
        audio = make_audio(rng, channels=2, seconds=0.1)
        path = tmp_path / "c.wav"
        write_wav(audio, path, bit_depth=16)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) - 100])
        with pytest.raises(MalformedWav):
            read_wav(path)

    def test_not_a_wav(self, tmp_path):
        path = tmp_path / "noise.wav"
        path.write_bytes(b"definitely not RIFF data")
        with pytest.raises(MalformedWav):
            read_wav(path)

    def test_unsupported_encoding(self, rng, tmp_path):
        audio = make_audio(rng, channels=1, seconds=0.05)
        path = tmp_path / "d.wav"
        write_wav(audio, path, bit_depth=16)
        blob = bytearray(path.read_bytes())
        blob[20:22] = (0x11).to_bytes(2, "little")  # IMA ADPCM format tag
        path.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedEncoding):
            read_wav(path)

    def test_float32_roundtrip_bit_exact(self, rng, tmp_path):
        samples = rng.standard_normal((3, 1000)).astype(np.float32).astype(np.float64)
        audio = MultichannelAudio(samples, FS)
        write_wav(audio, tmp_path / "e.wav", bit_depth="float32")
        back = read_wav(tmp_path / "e.wav")
        assert np.array_equal(back.samples, samples)

    def test_16bit_roundtrip_quantization_bound(self, rng, tmp_path):
        audio = make_audio(rng, channels=2, seconds=0.5)
        write_wav(audio, tmp_path / "f.wav", bit_depth=16)
        back = read_wav(tmp_path / "f.wav")
        assert np.max(np.abs(back.samples - audio.samples)) <= 2.0 ** -15

    @pytest.mark.parametrize("bit_depth", [24, 32])
    def test_deeper_pcm_roundtrip(self, rng, tmp_path, bit_depth):
        audio = make_audio(rng, channels=2, seconds=0.2)
        write_wav(audio, tmp_path / "g.wav", bit_depth=bit_depth)
        back = read_wav(tmp_path / "g.wav")
        assert np.max(np.abs(back.samples - audio.samples)) <= 2.0 ** -(bit_depth - 1)

    def test_clipping_counted(self, tmp_path):
        audio = MultichannelAudio(np.array([[0.5, 1.5, -2.0, 0.0]]), FS)
        clipped = write_wav(audio, tmp_path / "h.wav", bit_depth=16)
        assert clipped == 2
        back = read_wav(tmp_path / "h.wav")
        assert back.samples[0, 1] == pytest.approx(1.0, abs=2 ** -15)
        assert back.samples[0, 2] == pytest.approx(-1.0, abs=2 ** -15)

    def test_nonfinite_rejected(self, tmp_path):
        audio = MultichannelAudio(np.array([[0.0, np.nan]]), FS)
        with pytest.raises(BadConfig):
            write_wav(audio, tmp_path / "i.wav")


class TestStft:
    def test_zero_signal(self):
        audio = MultichannelAudio(np.zeros((2, 4096)), FS)
        tensor = stft(audio, 512, 256)
        assert tensor.n_bins == 257
        assert np.all(tensor.frames == 0)

    def test_roundtrip_interior(self, rng):
        x = rng.standard_normal(FS) * 0.3
        audio = MultichannelAudio(x[np.newaxis, :], FS)
        tensor = stft(audio, 512, 256)
        y = istft(tensor)
        assert len(y) == len(x)
        interior = slice(512, len(x) - 512)
        rms = np.sqrt(np.mean((y[interior] - x[interior]) ** 2))
        assert rms < 1e-6

    def test_sinusoid_energy_concentrates_at_bin_32(self):
        # oracle: direct DFT evaluation of one windowed frame
        n = np.arange(FS)
        x = np.sin(2 * np.pi * 1000.0 * n / FS)
        audio = MultichannelAudio(x[np.newaxis, :], FS)
        tensor = stft(audio, 512, 256)

        frame = x[:512] * (0.5 - 0.5 * np.cos(2 * np.pi * np.arange(512) / 512))
        k = np.arange(512)
        dft = np.array([np.sum(frame * np.exp(-2j * np.pi * b * k / 512))
                        for b in range(257)])
        assert np.allclose(tensor.frames[0, 0], dft, atol=1e-9)

        energy = np.abs(tensor.frames[0, 1]) ** 2  # an interior frame
        in_lobe = energy[31:34].sum()
        assert in_lobe / energy.sum() >= 0.95

    def test_istft_zero_tensor(self):
        frames = np.zeros((1, 4, 257), dtype=complex)
        tensor = StftTensor(frames, 512, 256, FS, n_samples=1280)
        assert np.all(istft(tensor) == 0)

    def test_single_frame_locality(self):
        frames = np.zeros((1, 5, 257), dtype=complex)
        rng = np.random.default_rng(0)
        frames[0, 2] = rng.standard_normal(257) + 1j * rng.standard_normal(257)
        frames[0, 2, 0] = frames[0, 2, 0].real
        frames[0, 2, -1] = frames[0, 2, -1].real
        tensor = StftTensor(frames, 512, 256, FS, n_samples=5 * 256 + 256)
        y = istft(tensor)
        span = slice(2 * 256, 2 * 256 + 512)
        outside = np.concatenate([y[:span.start], y[span.stop:]])
        assert np.allclose(outside, 0.0, atol=1e-12)
        assert np.any(np.abs(y[span]) > 1e-6)

    def test_non_power_of_two_window_rejected(self, rng):
        audio = make_audio(rng)
        with pytest.raises(BadConfig):
            stft(audio, 500, 250)

    def test_non_dividing_hop_rejected(self, rng):
        audio = make_audio(rng)
        with pytest.raises(BadConfig):
            stft(audio, 512, 300)

    def test_hop_equal_window_rejected(self, rng):
        audio = make_audio(rng)
        with pytest.raises(BadConfig):
            stft(audio, 512, 512)

    def test_istft_rejects_multichannel(self, rng):
        audio = make_audio(rng, channels=2)
        tensor = stft(audio, 512, 256)
        with pytest.raises(BadConfig):
            istft(tensor)

    def test_roundtrip_many_random_signals(self, rng):
        for _ in range(20):
            n = int(rng.integers(2000, 20000))
            x = rng.standard_normal(n)
            audio = MultichannelAudio(x[np.newaxis, :], FS)
            y = istft(stft(audio, 512, 256))
            interior = slice(512, n - 512)
            rms = np.sqrt(np.mean((y[interior] - x[interior]) ** 2))
            assert rms < 1e-6


class TestSliceAudio:
    def test_identity_slice(self, rng):
        audio = make_audio(rng, channels=2)
        out = slice_audio(audio, 0.0, audio.duration_s)
        assert np.array_equal(out.samples, audio.samples)

    def test_sample_accurate_interior_slice(self, rng):
        audio = make_audio(rng, seconds=3.0)
        out = slice_audio(audio, 1.0, 2.0)
        assert out.n_samples == FS
        assert np.array_equal(out.samples[0], audio.samples[0, FS:2 * FS])

    def test_end_clamped(self, rng):
        audio = make_audio(rng, seconds=1.0)
        out = slice_audio(audio, 0.5, 99.0)
        assert out.n_samples == FS // 2

    def test_past_end_raises(self, rng):
        audio = make_audio(rng, seconds=1.0)
        with pytest.raises(EmptyInterval):
            slice_audio(audio, 2.0, 3.0)

    def test_bad_interval_rejected(self, rng):
        audio = make_audio(rng)
        with pytest.raises(BadConfig):
            slice_audio(audio, 0.5, 0.5)

    def test_slice_concatenation_reproduces_signal(self, rng):
        audio = make_audio(rng, channels=3, seconds=2.0)
        for t in (0.25, 0.5, 1.0, 1.237):
            head = slice_audio(audio, 0.0, t)
            tail = slice_audio(audio, t, audio.duration_s)
            glued = np.concatenate([head.samples, tail.samples], axis=1)
            assert np.array_equal(glued, audio.samples)
