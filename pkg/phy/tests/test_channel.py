from unittest import TestCase as UnitTestCase

import numpy as np

from core.errors import ConfigurationError, InvalidArgument, NumericFailure
from phy.services.channel import (
    ChannelModel,
    ChannelProcess,
    NoiseModel,
    assemble,
    channel_model_from_config,
    complex_gaussian,
    condition_number_db,
    correlation_from_config,
    detach,
    estimate,
    noise_model_from_config,
    olpc_power,
    received_snr,
    sample_channel,
    subband_of_re,
    transmit,
    whiten,
    with_powers,
)


class PowerControlTests(UnitTestCase):
    def test_reference_operating_point(self):
        self.assertAlmostEqual(olpc_power(-98, 1.0, 100, 24, 23), 15.802, places=3)

    def test_large_pathloss_clamps_to_pmax(self):
        self.assertEqual(olpc_power(-98, 1.0, 200, 24, 23), 23)

    def test_no_pathloss_compensation(self):
        expected = -98 + 10 * np.log10(24)
        self.assertAlmostEqual(olpc_power(-98, 0.0, 140, 24, 23), expected, places=12)

    def test_alpha_out_of_range(self):
        with self.assertRaises(InvalidArgument):
            olpc_power(-98, 1.5, 100, 24, 23)

    def test_received_snr_of_silent_ue_is_zero(self):
        self.assertEqual(received_snr(-np.inf, 100, 24), 0.0)

    def test_received_snr_noise_floor(self):
        # -174 + 10 log10(12 * 30e3) + 7 = -111.44 dBm per PRB
        snr = received_snr(10 * np.log10(24) - 101.43697499232713, 10.0, 24)
        self.assertAlmostEqual(10 * np.log10(snr), 0.0, places=6)


class CompositeChannelTests(UnitTestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.blocks = [complex_gaussian(rng, (5, 4, 1)), complex_gaussian(rng, (5, 4, 2))]

    def test_detach_reverses_assemble(self):
        realization = assemble(self.blocks, [2.0, 8.0])
        self.assertEqual(realization.h.shape, (5, 4, 3))
        for original, block in zip(self.blocks, detach(realization)):
            np.testing.assert_array_equal(original, block)

    def test_columns_scaled_by_power_per_antenna(self):
        realization = assemble(self.blocks, [2.0, 8.0])
        np.testing.assert_allclose(realization.h[:, :, 0], np.sqrt(2.0) * self.blocks[0][:, :, 0])
        np.testing.assert_allclose(realization.h[:, :, 1:], 2.0 * self.blocks[1])

    def test_with_powers_rescales(self):
        realization = with_powers(assemble(self.blocks, [1.0, 1.0]), [0.0, 2.0])
        self.assertFalse(realization.h[:, :, 0].any())
        np.testing.assert_allclose(realization.h[:, :, 1:], self.blocks[1])

    def test_select_keeps_layout(self):
        realization = assemble(self.blocks, [1.0, 1.0]).select([0, 3])
        self.assertEqual(realization.n_re, 2)
        self.assertEqual(realization.num_ue, 2)


class SamplingTests(UnitTestCase):
    def test_iid_column_variance(self):
        model = ChannelModel()
        realization = sample_channel(
            ChannelModel(n_subbands=2500), 4, [1], [1.0], 2500, np.random.default_rng(1)
        )
        variance = np.mean(np.abs(realization.h) ** 2)
        self.assertAlmostEqual(variance, 1.0, delta=0.05)
        self.assertEqual(model.temporal_coef, 0.0)

    def test_subbands_are_contiguous(self):
        np.testing.assert_array_equal(subband_of_re(6, 3), [0, 0, 1, 1, 2, 2])

    def test_ar1_coefficient_one_freezes_the_channel(self):
        process = ChannelProcess(ChannelModel(kind='ar1', ar1_coef=1.0), 4, [1, 1], np.random.default_rng(2))
        first = process.step([1.0, 1.0], 12)
        second = process.step([1.0, 1.0], 12)
        np.testing.assert_array_equal(first.h, second.h)
        self.assertEqual(int(second.re_index[0, 1]), 1)

    def test_ar1_coefficient_zero_decorrelates_slots(self):
        process = ChannelProcess(
            ChannelModel(kind='ar1', ar1_coef=0.0, n_subbands=5000), 1, [1], np.random.default_rng(3)
        )
        a = process.step([1.0], 5000).h.ravel()
        b = process.step([1.0], 5000).h.ravel()
        correlation = np.abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
        self.assertLess(correlation, 0.05)

    def test_non_psd_correlation_rejected(self):
        with self.assertRaises(InvalidArgument):
            ChannelModel(kind='kronecker', rx_corr=np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_exponential_correlation(self):
        matrix = correlation_from_config({'type': 'exponential', 'rho': 0.5}, 3)
        self.assertAlmostEqual(matrix[0, 2].real, 0.25)

    def test_config_errors_are_configuration_errors(self):
        with self.assertRaises(ConfigurationError):
            channel_model_from_config({'kind': 'kronecker', 'rx_correlation': {'type': 'exponential'}}, 4)

    def test_condition_number_of_orthogonal_channel(self):
        self.assertAlmostEqual(float(condition_number_db(np.eye(3)[None])[0]), 0.0, places=9)
        self.assertAlmostEqual(float(condition_number_db(np.diag([10.0, 1.0])[None])[0]), 20.0, places=9)


class WhiteningTests(UnitTestCase):
    def setUp(self):
        rng = np.random.default_rng(4)
        self.realization = assemble([complex_gaussian(rng, (3, 4, 2))], [1.0])
        self.y = complex_gaussian(rng, (3, 4))

    def test_identity_whitening(self):
        h, y = whiten(self.realization, self.y, NoiseModel.identity(4))
        np.testing.assert_allclose(h.h, self.realization.h, atol=1e-12)
        np.testing.assert_allclose(y, self.y, atol=1e-12)

    def test_scalar_covariance_halves(self):
        nm = NoiseModel(k_n=4 * np.eye(4, dtype=complex), k_e=np.zeros((4, 4), dtype=complex))
        h, y = whiten(self.realization, self.y, nm)
        np.testing.assert_allclose(h.h, self.realization.h / 2, atol=1e-12)
        np.testing.assert_allclose(y, self.y / 2, atol=1e-12)

    def test_singular_covariance(self):
        k_n = np.diag([1.0, 1.0, 1.0, 0.0]).astype(complex)
        nm = NoiseModel(k_n=k_n, k_e=np.zeros((4, 4), dtype=complex))
        with self.assertRaises(NumericFailure) as ctx:
            whiten(self.realization, self.y, nm)
        self.assertEqual(ctx.exception.condition_number, np.inf)

    def test_whitened_noise_is_white(self):
        rng = np.random.default_rng(5)
        a = complex_gaussian(rng, (4, 4))
        k_n = a @ a.conj().T + 0.5 * np.eye(4)
        nm = NoiseModel(k_n=k_n, k_e=np.zeros((4, 4), dtype=complex))
        zero = assemble([np.zeros((10000, 4, 1), dtype=complex)], [1.0])
        y = transmit(zero, np.zeros((10000, 1)), nm, rng)
        _, y_white = whiten(zero, y, nm)
        covariance = y_white.T @ y_white.conj() / y_white.shape[0]
        self.assertLess(np.linalg.norm(covariance - np.eye(4)), 0.05 * 4)

    def test_estimation_error_disabled_by_default(self):
        nm = noise_model_from_config({}, 4)
        self.assertIs(estimate(self.realization, nm, np.random.default_rng(6)), self.realization)

    def test_noise_config_diagonal(self):
        nm = noise_model_from_config({'k_n': {'type': 'diagonal', 'values': [1, 2, 3, 4]}, 'k_e': 0.1}, 4)
        np.testing.assert_allclose(np.diag(nm.total).real, [1.1, 2.1, 3.1, 4.1])

    def test_noise_config_wrong_size(self):
        with self.assertRaises(ConfigurationError):
            noise_model_from_config({'k_n': {'type': 'diagonal', 'values': [1, 2]}}, 4)
