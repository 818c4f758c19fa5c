import numpy as np
import pytest

from chainhist import (
    HistoryMatrix,
    OdeProblem,
    ValidationError,
    WindowPolicy,
    euler_step_history,
    fourier_matrix,
    fourier_time,
    haar_matrix,
    haar_time,
    inverse_transform,
    normalize_history,
    power_spectrum,
    scaled_singular_vectors,
    svd_history,
    transform_right_vectors,
)


class TestSVD:
    def test_rank_one_matrix(self):
        rng = np.random.default_rng(0)
        u = rng.normal(size=5)
        u /= np.linalg.norm(u)
        v = rng.normal(size=4)
        v /= np.linalg.norm(v)
        result = svd_history(3.0 * np.outer(u, v))
        assert result.singular_values[0] == pytest.approx(3.0, abs=1e-12)
        assert result.singular_values[1:].max() <= 1e-12
        anchor = np.argmax(np.abs(result.left[:, 0]))
        assert result.left[anchor, 0] > 0
        sign = np.sign(u[anchor])
        assert np.allclose(result.left[:, 0], sign * u, atol=1e-12)
        assert np.allclose(result.right[:, 0], sign * v, atol=1e-12)

    def test_against_gram_eigen_oracle(self):
        rng = np.random.default_rng(1)
        matrix = rng.normal(size=(8, 6))
        oracle = np.sqrt(np.maximum(np.linalg.eigvalsh(matrix.T @ matrix)[::-1], 0.0))
        ours = svd_history(matrix).singular_values
        assert np.abs(ours - oracle).max() <= 1e-10

    def test_full_rank_reconstruction(self):
        rng = np.random.default_rng(2)
        matrix = rng.normal(size=(7, 9))
        result = svd_history(matrix)
        err = np.linalg.norm(result.reconstruct() - matrix)
        assert err <= 1e-10 * np.linalg.norm(matrix)

    def test_eckart_young_truncation_error(self):
        rng = np.random.default_rng(3)
        matrix = rng.normal(size=(10, 12))
        full = svd_history(matrix)
        for rank in (1, 3, 7):
            truncated = svd_history(matrix, rank=rank)
            err = np.linalg.norm(matrix - truncated.reconstruct())
            expected = np.sqrt((full.singular_values[rank:] ** 2).sum())
            assert abs(err - expected) <= 1e-9

    def test_rank_clamp_warns(self):
        with pytest.warns(UserWarning):
            result = svd_history(np.eye(3), rank=9)
        assert result.rank == 3

    def test_dominant_entry_positive_convention(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            result = svd_history(rng.normal(size=(9, 7)))
            anchors = np.argmax(np.abs(result.left), axis=0)
            assert (result.left[anchors, np.arange(result.rank)] > 0).all()

    def test_zero_matrix_rejected(self):
        with pytest.raises(ValidationError):
            svd_history(np.zeros((3, 3)))

    def test_deterministic_across_calls(self):
        rng = np.random.default_rng(4)
        matrix = rng.normal(size=(6, 6))
        a = svd_history(matrix)
        b = svd_history(matrix)
        assert np.array_equal(a.left, b.left) and np.array_equal(a.right, b.right)


class TestScaledVectors:
    def test_columns_scaled_by_root_sigma(self):
        result = svd_history(np.diag([4.0, 1.0]))
        left, right = scaled_singular_vectors(result)
        assert np.linalg.norm(left[:, 0]) == pytest.approx(2.0)
        assert np.linalg.norm(right[:, 0]) == pytest.approx(2.0)

    def test_zero_sigma_gives_zero_column(self):
        result = svd_history(np.outer([1.0, 0.0], [1.0, 0.0]))
        left, _ = scaled_singular_vectors(result)
        assert np.allclose(left[:, 1], 0.0)

    def test_steady_component_nearly_flat_on_scenario(self, seven_node_window):
        _, window = seven_node_window
        _, right = scaled_singular_vectors(svd_history(window, rank=4))
        magnitudes = np.abs(right[:, 0])
        assert magnitudes.max() / magnitudes.min() <= 2.0


class TestTransformMatrices:
    @pytest.mark.parametrize("n", [2, 8, 64, 256, 1024])
    def test_haar_unitary(self, n):
        matrix = haar_matrix(n)
        assert np.abs(matrix @ matrix.T - np.eye(n)).max() <= 1e-12

    @pytest.mark.parametrize("n", [2, 8, 64, 256, 1024])
    def test_fourier_unitary(self, n):
        matrix = fourier_matrix(n)
        assert np.abs(matrix.conj().T @ matrix - np.eye(n)).max() <= 1e-12

    def test_haar_rejects_non_dyadic(self):
        with pytest.raises(ValidationError):
            haar_matrix(12)

    def test_haar_ordering_scale_major(self):
        matrix = haar_matrix(8)
        # wavelets 2 and 3 share the half-width shape, offset in time
        assert np.array_equal(matrix[2, :4], matrix[3, 4:])
        assert np.allclose(matrix[2, 4:], 0.0)
        # finest-scale wavelets occupy rows 4..7, support two samples each
        assert np.count_nonzero(matrix[4]) == 2

    def test_fourier_matrix_matches_fft(self):
        x = np.random.default_rng(5).normal(size=16)
        direct = fourier_matrix(16) @ x
        assert np.allclose(direct, np.fft.fft(x) / 4.0, atol=1e-12)


class TestFourier:
    def test_constant_series_all_mass_at_zero(self):
        spectrum = fourier_time(np.full(64, 2.5))
        assert abs(spectrum.coefficients[0]) == pytest.approx(2.5 * 8.0)
        assert np.abs(spectrum.coefficients[1:]).max() <= 1e-10

    def test_rotation_history_peaks_at_five_cycles(self):
        omega = 2 * np.pi * 5.0
        matrix = np.array([[0.0, -omega], [omega, 0.0]])
        hist = euler_step_history(OdeProblem(matrix, np.array([1.0, 0.0]), t_max=1.0, steps=1024))
        spectrum = power_spectrum(normalize_history(hist))
        assert int(np.argmax(spectrum.power[1:])) + 1 == 5

    def test_parseval_randomized(self):
        rng = np.random.default_rng(6)
        for length in (33, 100, 1024):
            data = rng.normal(size=(4, length))
            spectrum = fourier_time(data)
            energy_in = (data**2).sum()
            energy_out = (np.abs(spectrum.coefficients) ** 2).sum()
            assert abs(energy_in - energy_out) <= 1e-10 * energy_in

    def test_frequency_axis_in_cycles(self):
        hist = HistoryMatrix(np.zeros((1, 10)) + 1.0, h=0.5)
        spectrum = fourier_time(hist)
        assert spectrum.axis[1] == pytest.approx(1.0 / (10 * 0.5))

    def test_too_short_rejected(self):
        with pytest.raises(ValidationError):
            fourier_time(np.array([1.0]))


class TestHaar:
    def test_constant_series_zeroth_only(self):
        value = 1.7
        spectrum = haar_time(np.full(8, value), WindowPolicy("none"))
        assert spectrum.coefficients[0] == pytest.approx(value * np.sqrt(8.0))
        assert np.abs(spectrum.coefficients[1:]).max() <= 1e-14 * value

    def test_unit_impulse_hand_coefficients(self):
        spectrum = haar_time(np.array([1.0, 0.0, 0.0, 0.0]), WindowPolicy("none"))
        expected = np.array([0.5, 0.5, 1.0 / np.sqrt(2.0), 0.0])
        assert np.allclose(spectrum.coefficients, expected, atol=1e-15)

    def test_parseval_and_roundtrip(self):
        rng = np.random.default_rng(7)
        data = rng.normal(size=(3, 256))
        spectrum = haar_time(data, WindowPolicy("none"))
        energy_in = (data**2).sum()
        energy_out = (spectrum.coefficients**2).sum()
        assert abs(energy_in - energy_out) <= 1e-10 * energy_in
        assert np.abs(inverse_transform(spectrum) - data).max() <= 1e-10

    def test_non_dyadic_rejected_without_policy(self):
        with pytest.raises(ValidationError, match="window policy"):
            haar_time(np.ones(12), WindowPolicy("none"))

    def test_window_policies_fix_length(self):
        data = np.arange(12.0)
        assert haar_time(data, WindowPolicy("trunc_tail")).coefficients.shape == (8,)
        assert haar_time(data, WindowPolicy("trunc_head")).coefficients.shape == (8,)
        assert haar_time(data, WindowPolicy("zero_pad")).coefficients.shape == (16,)
        # head/tail truncation keep the matching ends
        tail = haar_time(data, WindowPolicy("trunc_tail"))
        head = haar_time(data, WindowPolicy("trunc_head"))
        assert np.allclose(inverse_transform(tail), data[:8])
        assert np.allclose(inverse_transform(head), data[4:])


class TestRightVectorTransforms:
    def test_constant_right_vector_single_bin(self):
        # rank-1 history constant in time: right vector is flat
        hist = np.outer([0.3, 0.7], np.ones(16))
        decomposition = svd_history(hist, rank=1)
        spectrum = transform_right_vectors(decomposition, "fourier")
        mags = np.abs(spectrum.coefficients[0])
        assert mags[0] == pytest.approx(1.0, abs=1e-12)
        assert mags[1:].max() <= 1e-10
        wavelets = transform_right_vectors(decomposition, "haar", WindowPolicy("none"))
        assert np.abs(wavelets.coefficients[0, 1:]).max() <= 1e-10

    def test_cosine_right_vector_two_symmetric_bins(self):
        n = 64
        cycles = 3
        time_profile = np.cos(2 * np.pi * cycles * np.arange(n) / n)
        hist = np.outer([1.0, 0.0], time_profile)
        decomposition = svd_history(hist, rank=1)
        spectrum = transform_right_vectors(decomposition, "fourier")
        mags = np.abs(spectrum.coefficients[0])
        hot = np.flatnonzero(mags > 1e-9)
        assert set(hot) == {cycles, n - cycles}
        assert mags[cycles] == pytest.approx(mags[n - cycles], rel=1e-12)

    def test_commutes_with_direct_transform(self):
        rng = np.random.default_rng(8)
        data = rng.normal(size=(12, 32))
        decomposition = svd_history(data)
        spectrum = transform_right_vectors(decomposition, "fourier")
        direct = np.fft.fft(data, axis=-1) / np.sqrt(32)
        projected = decomposition.left.T @ direct
        keep = decomposition.singular_values > 1e-10
        recovered = projected[keep] / decomposition.singular_values[keep, None]
        assert np.abs(recovered - spectrum.coefficients[keep]).max() <= 1e-9

    def test_haar_variant_matches_matrix(self):
        rng = np.random.default_rng(9)
        data = rng.normal(size=(6, 16))
        decomposition = svd_history(data)
        wavelets = transform_right_vectors(decomposition, "haar", WindowPolicy("none"))
        direct = decomposition.right.T @ haar_matrix(16).T
        assert np.abs(wavelets.coefficients - direct).max() <= 1e-12

    def test_unknown_kind_rejected(self):
        decomposition = svd_history(np.eye(4))
        with pytest.raises(ValidationError):
            transform_right_vectors(decomposition, "wavelet-x")


class TestPowerSpectrum:
    def test_static_point_mass_is_zero_frequency_delta(self):
        hist = HistoryMatrix(np.outer([1.0, 0.0], np.ones(32)), h=1.0)
        spectrum = power_spectrum(normalize_history(hist))
        assert spectrum.power[0] == pytest.approx(1.0, abs=1e-12)
        assert spectrum.power[1:].max() <= 1e-12

    def test_power_sums_to_one_for_normalized_input(self, seven_node_window):
        _, window = seven_node_window
        spectrum = power_spectrum(normalize_history(window))
        assert abs(spectrum.power.sum() - 1.0) <= 1e-10

    def test_decaying_oscillation_peak_and_width(self):
        t_final, samples = 4.0, 2048
        t = np.linspace(0.0, t_final, samples, endpoint=False)

        def folded_power(decay):
            signal = np.exp(decay * t) * np.cos(2 * np.pi * 8.0 * t)
            hist = HistoryMatrix(signal[None, :], h=t_final / samples)
            return power_spectrum(normalize_history(hist))

        narrow = folded_power(-0.5)
        peak = int(np.argmax(narrow.power[1:])) + 1
        assert narrow.frequencies[peak] == pytest.approx(8.0, abs=0.5)
        wide = folded_power(-2.0)
        half_width = lambda ps: int((ps.power >= 0.5 * ps.power.max()).sum())
        assert half_width(wide) > half_width(narrow)

    def test_scenario_dominated_by_zero_frequency(self, seven_node_window):
        _, window = seven_node_window
        spectrum = power_spectrum(normalize_history(window))
        assert int(np.argmax(spectrum.power)) == 0
        # low-frequency envelope decreases over the first few positive bins
        assert spectrum.power[1] > spectrum.power[2] > spectrum.power[3]

    def test_scenario_haar_zeroth_dominates(self, seven_node_window):
        _, window = seven_node_window
        spectrum = haar_time(normalize_history(window))
        power = (spectrum.coefficients**2).sum(axis=0)
        assert int(np.argmax(power)) == 0
        assert power[0] > 0.9 * power.sum()

    def test_scenario_energy_rank(self, seven_node_window):
        _, window = seven_node_window
        sigma = svd_history(window).singular_values
        energy = np.cumsum(sigma**2) / (sigma**2).sum()
        assert int(np.searchsorted(energy, 0.9999)) + 1 == 2  # regression pin
