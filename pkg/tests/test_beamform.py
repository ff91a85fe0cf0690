import numpy as np
import pytest

from beamrecall.audio import MultichannelAudio, stft
from beamrecall.beamform import (
    BeamformerWeights,
    apply_beamformer,
    beam_pattern,
    estimate_covariance,
    mvdr_weights,
    separate_streams,
    steering_for_bins,
)
from beamrecall.errors import (
    BadConfig,
    BinOutOfRange,
    DimensionMismatch,
    DuplicateLabel,
    EmptyTensor,
)
from beamrecall.geometry import uma8_geometry
from beamrecall.metrics import si_sdr
from beamrecall.audio import StftTensor

FS = 16000
M = 7


def gaussian_elimination_solve(a, b):
    """Independent dense solver: partial-pivot elimination, complex."""
    n = len(b)
    a = a.astype(complex).copy()
    b = b.astype(complex).copy()
    for col in range(n):
        pivot = col + np.argmax(np.abs(a[col:, col]))
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            b[[col, pivot]] = b[[pivot, col]]
        for row in range(col + 1, n):
            factor = a[row, col] / a[col, col]
            a[row, col:] -= factor * a[col, col:]
            b[row] -= factor * b[col]
    x = np.zeros(n, dtype=complex)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x


def random_hermitian_pd(rng, m=M):
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    r = a @ a.conj().T / m + 0.1 * np.eye(m)
    return 0.5 * (r + r.conj().T)


def random_steering(rng, m=M):
    phases = rng.uniform(0, 2 * np.pi, m)
    return np.exp(1j * phases)


def tensor_from_frames(frames, n_samples=None):
    if n_samples is None:
        n_samples = (frames.shape[1] - 1) * 256 + 512
    return StftTensor(frames, 512, 256, FS, n_samples=n_samples)


class TestCovariance:
    def test_single_frame_rank_one(self, rng):
        x = rng.standard_normal((M, 1, 5)) + 1j * rng.standard_normal((M, 1, 5))
        covs = estimate_covariance(tensor_from_frames(x), loading_factor=0.0)
        for b, cov in enumerate(covs):
            expected = np.outer(x[:, 0, b], np.conj(x[:, 0, b]))
            assert np.allclose(cov.matrix, expected, atol=1e-12)
            assert np.linalg.matrix_rank(cov.matrix, tol=1e-9) == 1

    def test_hermitian(self, rng):
        x = rng.standard_normal((M, 50, 9)) + 1j * rng.standard_normal((M, 50, 9))
        for cov in estimate_covariance(tensor_from_frames(x)):
            assert np.max(np.abs(cov.matrix - cov.matrix.conj().T)) < 1e-12

    def test_white_noise_monte_carlo(self):
        rng = np.random.default_rng(99)
        frames = 10000
        x = (rng.standard_normal((M, frames, 3))
             + 1j * rng.standard_normal((M, frames, 3))) / np.sqrt(2.0)
        covs = estimate_covariance(tensor_from_frames(x), loading_factor=0.0)
        for cov in covs:
            off_diag = cov.matrix[~np.eye(M, dtype=bool)]
            assert np.all(np.abs(off_diag) < 0.05)
            assert np.allclose(np.diag(cov.matrix).real, 1.0, atol=0.05)

    def test_loading_makes_positive_definite(self, rng):
        x = rng.standard_normal((M, 1, 4)) + 1j * rng.standard_normal((M, 1, 4))
        for cov in estimate_covariance(tensor_from_frames(x), loading_factor=1e-3):
            eigenvalues = np.linalg.eigvalsh(cov.matrix)
            assert np.all(eigenvalues > 0)

    def test_loading_preserves_eigenvector_order(self, rng):
        x = rng.standard_normal((M, 200, 1)) + 1j * rng.standard_normal((M, 200, 1))
        bare = estimate_covariance(tensor_from_frames(x), loading_factor=0.0)[0]
        loaded = estimate_covariance(tensor_from_frames(x), loading_factor=1e-3)[0]
        _, v_bare = np.linalg.eigh(bare.matrix)
        _, v_loaded = np.linalg.eigh(loaded.matrix)
        # loading shifts eigenvalues uniformly; eigenvectors stay aligned
        alignment = np.abs(np.sum(np.conj(v_bare) * v_loaded, axis=0))
        assert np.allclose(alignment, 1.0, atol=1e-9)

    def test_empty_tensor_rejected(self):
        x = np.zeros((M, 0, 5), dtype=complex)
        with pytest.raises(EmptyTensor):
            estimate_covariance(tensor_from_frames(x, n_samples=0))


class TestMvdrWeights:
    def test_identity_covariance_reduces_to_delay_and_sum(self, rng):
        bins = 17
        x = np.zeros((M, 1, bins), dtype=complex)
        covs = estimate_covariance(tensor_from_frames(x), loading_factor=0.0)
        covs = [type(c)(c.bin_index, np.eye(M, dtype=complex)) for c in covs]
        d = np.stack([random_steering(rng) for _ in range(bins)])
        w = mvdr_weights(covs, d)
        assert np.allclose(w.weights_per_bin, d / M, atol=1e-12)

    def test_sigma_invariance(self, rng):
        bins = 5
        d = np.stack([random_steering(rng) for _ in range(bins)])
        base = [type("C", (), {})() for _ in range(bins)]
        from beamrecall.beamform import CovarianceMatrix

        weights = []
        for sigma in (0.01, 1.0, 250.0):
            covs = [CovarianceMatrix(b, sigma * np.eye(M, dtype=complex))
                    for b in range(bins)]
            weights.append(mvdr_weights(covs, d).weights_per_bin)
        assert np.allclose(weights[0], weights[1], atol=1e-12)
        assert np.allclose(weights[1], weights[2], atol=1e-12)

    def test_distortionless_constraint(self, rng):
        from beamrecall.beamform import CovarianceMatrix

        bins = 30
        covs = [CovarianceMatrix(b, random_hermitian_pd(rng)) for b in range(bins)]
        d = np.stack([random_steering(rng) for _ in range(bins)])
        w = mvdr_weights(covs, d)
        response = np.einsum("bm,bm->b", np.conj(w.weights_per_bin), d)
        assert np.max(np.abs(response - 1.0)) < 1e-9

    def test_matches_gaussian_elimination_oracle(self, rng):
        from beamrecall.beamform import CovarianceMatrix

        for _ in range(25):
            r = random_hermitian_pd(rng)
            d = random_steering(rng)
            w = mvdr_weights([CovarianceMatrix(0, r)], d[np.newaxis]).weights_per_bin[0]
            rinv_d = gaussian_elimination_solve(r, d)
            oracle = rinv_d / (np.conj(d) @ rinv_d)
            assert np.max(np.abs(w - oracle)) < 1e-9

    def test_singular_covariance_detected(self, rng):
        from beamrecall.beamform import CovarianceMatrix
        from beamrecall.errors import SingularCovariance

        singular = np.zeros((M, M), dtype=complex)
        singular[0, 0] = 1.0
        d = random_steering(rng)[np.newaxis]
        with pytest.raises(SingularCovariance):
            mvdr_weights([CovarianceMatrix(0, singular)], d)

    def test_dimension_mismatch(self, rng):
        from beamrecall.beamform import CovarianceMatrix

        covs = [CovarianceMatrix(0, random_hermitian_pd(rng))]
        with pytest.raises(DimensionMismatch):
            mvdr_weights(covs, np.ones((1, M + 1), dtype=complex))


class TestApplyBeamformer:
    def test_one_hot_weights_select_channel(self, rng):
        x = rng.standard_normal((3, 2 * FS)) * 0.2
        audio = MultichannelAudio(x, FS)
        tensor = stft(audio, 512, 256)
        one_hot = np.zeros((tensor.n_bins, 3), dtype=complex)
        one_hot[:, 1] = 1.0
        w = BeamformerWeights(0.0, one_hot)
        y = apply_beamformer(tensor, w)
        interior = slice(512, 2 * FS - 512)
        assert np.max(np.abs(y[interior] - x[1, interior])) < 1e-6

    def test_zero_input_zero_output(self):
        audio = MultichannelAudio(np.zeros((M, 4000)), FS)
        tensor = stft(audio, 512, 256)
        w = BeamformerWeights(0.0, np.ones((tensor.n_bins, M), dtype=complex) / M)
        assert np.allclose(apply_beamformer(tensor, w), 0.0)

    def test_linear(self, rng):
        x = rng.standard_normal((M, FS)) * 0.2
        y = rng.standard_normal((M, FS)) * 0.2
        w_elems = (rng.standard_normal((257, M)) + 1j * rng.standard_normal((257, M)))
        w = BeamformerWeights(0.0, w_elems)
        out_sum = apply_beamformer(stft(MultichannelAudio(x + y, FS)), w)
        out_parts = (apply_beamformer(stft(MultichannelAudio(x, FS)), w)
                     + apply_beamformer(stft(MultichannelAudio(y, FS)), w))
        assert np.max(np.abs(out_sum - out_parts)) < 1e-9

    def test_channel_count_mismatch(self, rng):
        audio = MultichannelAudio(rng.standard_normal((3, 4000)), FS)
        tensor = stft(audio, 512, 256)
        w = BeamformerWeights(0.0, np.ones((tensor.n_bins, M), dtype=complex))
        with pytest.raises(DimensionMismatch):
            apply_beamformer(tensor, w)


class TestBeamPattern:
    def _scene_weights(self, scene, azimuth):
        _, mixture, _ = scene
        tensor = stft(mixture, 512, 256)
        covs = estimate_covariance(tensor)
        d = steering_for_bins(uma8_geometry(), azimuth, tensor.n_bins, 512, FS)
        return mvdr_weights(covs, d, azimuth)

    def test_unit_gain_at_steering_azimuth(self, two_source_scene):
        w = self._scene_weights(two_source_scene, 45.0)
        pattern = dict(beam_pattern(w, uma8_geometry(), 1000.0))
        assert pattern[45.0] == pytest.approx(1.0, abs=1e-9)

    def test_identity_covariance_gain_below_one(self, rng):
        from beamrecall.beamform import CovarianceMatrix

        bins = 257
        covs = [CovarianceMatrix(b, np.eye(M, dtype=complex)) for b in range(bins)]
        d = steering_for_bins(uma8_geometry(), 90.0, bins, 512, FS)
        w = mvdr_weights(covs, d, 90.0)
        for freq in (1000.0, 2000.0):
            gains = np.array([g for _, g in beam_pattern(w, uma8_geometry(), freq)])
            assert np.all(gains <= 1.0 + 1e-9)

    def test_main_lobe_narrows_with_frequency(self, rng):
        from beamrecall.beamform import CovarianceMatrix

        bins = 257
        covs = [CovarianceMatrix(b, np.eye(M, dtype=complex)) for b in range(bins)]
        d = steering_for_bins(uma8_geometry(), 90.0, bins, 512, FS)
        w = mvdr_weights(covs, d, 90.0)

        def lobe_width(freq):
            gains = dict(beam_pattern(w, uma8_geometry(), freq))
            azimuths = sorted(gains)
            threshold = 10.0 ** (-3.0 / 20.0)
            width = 0
            for offset in range(0, 181):
                lo = gains[(90.0 - offset) % 360.0]
                hi = gains[(90.0 + offset) % 360.0]
                if lo < threshold or hi < threshold:
                    break
                width = offset
            return width

        assert lobe_width(2000.0) <= lobe_width(1000.0)

    def test_bin_out_of_range(self, rng):
        w = BeamformerWeights(0.0, np.ones((257, M), dtype=complex) / M)
        with pytest.raises(BinOutOfRange):
            beam_pattern(w, uma8_geometry(), 9000.0)


class TestSeparateStreams:
    def test_single_azimuth_single_stream(self, rng):
        audio = MultichannelAudio(rng.standard_normal((M, FS)) * 0.1, FS)
        streams = separate_streams(audio, uma8_geometry(), {"solo": 10.0})
        assert len(streams) == 1
        assert streams[0].label == "solo"
        assert len(streams[0].samples) == audio.n_samples

    def test_paper_style_labels(self, rng):
        audio = MultichannelAudio(rng.standard_normal((M, FS)) * 0.1, FS)
        streams = separate_streams(audio, uma8_geometry(),
                                   {"left": 135.0, "right": 45.0})
        assert [s.label for s in streams] == ["left", "right"]
        assert streams[0].azimuth_deg == 135.0
        assert streams[1].azimuth_deg == 45.0

    def test_close_azimuths_rejected(self, rng):
        audio = MultichannelAudio(rng.standard_normal((M, FS)) * 0.1, FS)
        with pytest.raises(BadConfig):
            separate_streams(audio, uma8_geometry(), {"a": 100.0, "b": 110.0})

    def test_channel_mismatch(self, rng):
        audio = MultichannelAudio(rng.standard_normal((2, FS)) * 0.1, FS)
        with pytest.raises(DimensionMismatch):
            separate_streams(audio, uma8_geometry(), {"a": 0.0})

    def test_steered_stream_recovers_source(self, two_source_scene):
        _, mixture, references = two_source_scene
        streams = separate_streams(mixture, uma8_geometry(),
                                   {"right": 45.0, "left": 135.0})
        center = mixture.samples[0]
        for stream, reference in zip(streams, references):
            gain = (si_sdr(reference, stream.samples)
                    - si_sdr(reference, center))
            assert gain >= 8.0
