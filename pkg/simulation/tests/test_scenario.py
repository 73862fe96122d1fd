import json
import tempfile
from pathlib import Path
from unittest import TestCase as UnitTestCase

import numpy as np

from core.errors import ConfigurationError
from simulation.services.scenario import (
    SimConfig,
    TableJob,
    config_hash,
    load_scenario,
    load_sim_config,
    load_table_job,
    sim_config_from_dict,
    table_job_from_dict,
)

SCENARIO_DIR = Path(__file__).resolve().parents[2] / 'scenarios'


def minimal(**overrides):
    raw = {
        'version': 1,
        'kind': 'simulation',
        'name': 'minimal',
        'n_r': 4,
        'ues': [{'n_t': 1, 'count': 2, 'snr_db': 10.0}],
    }
    raw.update(overrides)
    return raw


class ShippedScenarioTests(UnitTestCase):
    def test_simulation_scenarios_load(self):
        for name in ('ref4ue', 'hybrid_mix', 'qpsk2ue', 'full_scale'):
            config = load_sim_config(SCENARIO_DIR / f'{name}.json')
            self.assertIsInstance(config, SimConfig, msg=name)
            self.assertEqual(config.name, name)

    def test_table_scenarios_load(self):
        job = load_table_job(SCENARIO_DIR / 'awgn.json')
        self.assertIsInstance(job, TableJob)
        self.assertEqual(len(job.codes), 24)
        self.assertEqual(job.modulations, (2,))

    def test_hybrid_scenario(self):
        config = load_sim_config(SCENARIO_DIR / 'hybrid_mix.json')
        self.assertEqual([d.name for d in config.detectors], ['lmmse', 'kbest16'])
        self.assertEqual(config.channel.alt_prob, 0.4)
        self.assertIsNotNone(config.channel.rx_corr_alt)
        self.assertEqual(config.predictor_for(config.detectors[1]).n_samples, 16)

    def test_custom_mcs_table_resolves_next_to_scenario(self):
        config = load_sim_config(SCENARIO_DIR / 'qpsk2ue.json')
        self.assertEqual(config.mcs_table.modulations, [2])

    def test_kind_mismatch(self):
        with self.assertRaises(ConfigurationError):
            load_sim_config(SCENARIO_DIR / 'awgn.json')
        with self.assertRaises(ConfigurationError):
            load_table_job(SCENARIO_DIR / 'ref4ue.json')


class ScenarioFileTests(UnitTestCase):
    def write(self, tmp, raw):
        path = Path(tmp) / 'scenario.json'
        path.write_text(json.dumps(raw) if isinstance(raw, dict) else raw)
        return path

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            load_scenario('/nonexistent/scenario.json')

    def test_invalid_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigurationError):
                load_scenario(self.write(tmp, '{"version": 1,'))

    def test_version_is_required(self):
        raw = minimal()
        del raw['version']
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigurationError):
                load_scenario(self.write(tmp, raw))

    def test_unknown_kind(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigurationError):
                load_scenario(self.write(tmp, minimal(kind='system')))


class SimConfigTests(UnitTestCase):
    def test_defaults(self):
        config = sim_config_from_dict(minimal())
        self.assertEqual(config.num_ue, 2)
        self.assertEqual(config.n_t_list, [1, 1])
        self.assertEqual(config.scheme, 'single')
        self.assertEqual([d.name for d in config.detectors], ['lmmse'])
        self.assertEqual(config.n_re_per_tb, 360)
        self.assertEqual(config.target_cer, 0.01)
        np.testing.assert_allclose(config.noise.k_n, np.eye(4))

    def test_unknown_keys_are_rejected(self):
        with self.assertRaises(ConfigurationError):
            sim_config_from_dict(minimal(slot=10))
        with self.assertRaises(ConfigurationError):
            sim_config_from_dict(minimal(ues=[{'n_t': 1, 'snr': 3.0}]))

    def test_invalid_values(self):
        for raw in (
            minimal(n_r=0),
            minimal(ues=[]),
            minimal(target_cer=1.5),
            minimal(gamma=2.0),
            minimal(drops=True),
            minimal(channel={'kind': 'ar1', 'ar1_coef': 1.5}),
            minimal(ues=[{'n_t': 1, 'alpha': 1.2}]),
            minimal(ues=[{'n_t': 1, 'pathloss_db': {'min': 120, 'max': 90}}]),
            minimal(mcs_table='missing.csv'),
        ):
            with self.assertRaises(ConfigurationError, msg=raw):
                sim_config_from_dict(raw)

    def test_single_scheme_needs_one_detector(self):
        with self.assertRaises(ConfigurationError):
            sim_config_from_dict(minimal(detectors=['lmmse', 'kbest8']))

    def test_detectors_sorted_by_complexity(self):
        config = sim_config_from_dict(minimal(detectors=['kbest8', 'lmmse'], scheme='hybrid'))
        self.assertEqual([d.name for d in config.detectors], ['lmmse', 'kbest8'])

    def test_mi_table_predictor_needs_linear_detector(self):
        raw = minimal(detectors=['kbest8'], predictors={'kbest8': {'kind': 'mi_table'}})
        with self.assertRaises(ConfigurationError):
            sim_config_from_dict(raw)

    def test_olla_steps_balance(self):
        config = sim_config_from_dict(minimal(target_cer=0.1, olla={'step_fail': 0.09}))
        self.assertAlmostEqual(config.olla.step_ok, 0.01)

    def test_fixed_snr_powers(self):
        config = sim_config_from_dict(minimal())
        np.testing.assert_allclose(config.ue_powers(np.random.default_rng(0)), [10.0, 10.0])

    def test_power_scale(self):
        config = sim_config_from_dict(minimal(power_scale=0.0))
        np.testing.assert_allclose(config.ue_powers(np.random.default_rng(0)), [0.0, 0.0])

    def test_pathloss_draw_stays_in_range(self):
        ue = {'n_t': 1, 'count': 3, 'pathloss_db': {'min': 90.0, 'max': 110.0}}
        config = sim_config_from_dict(minimal(ues=[ue]))
        powers = config.ue_powers(np.random.default_rng(4))
        low = sim_config_from_dict(minimal(ues=[{'n_t': 1, 'pathloss_db': 110.0}]))
        high = sim_config_from_dict(minimal(ues=[{'n_t': 1, 'pathloss_db': 90.0}]))
        floor = low.ue_powers(np.random.default_rng(0))[0]
        ceiling = high.ue_powers(np.random.default_rng(0))[0]
        self.assertTrue(np.all(powers >= floor - 1e-12))
        self.assertTrue(np.all(powers <= ceiling + 1e-12))

    def test_noiseless_receiver(self):
        config = sim_config_from_dict(minimal(noiseless=True, noise={'k_e': 0.5}))
        self.assertEqual(np.abs(config.channel_noise.total).max(), 0.0)
        self.assertGreater(config.receiver_noise.k_n[0, 0].real, 0.0)

    def test_overrides(self):
        config = sim_config_from_dict(minimal(detectors=['lmmse', 'kbest8'], scheme='hybrid'))
        single = config.with_overrides(seed=9, detector='kbest8')
        self.assertEqual(single.seed, 9)
        self.assertEqual(single.scheme, 'single')
        self.assertEqual([d.name for d in single.detectors], ['kbest8'])
        weighted = config.with_overrides(gamma=0.5)
        self.assertEqual((weighted.scheme, weighted.gamma), ('hybrid', 0.5))
        with self.assertRaises(ConfigurationError):
            config.with_overrides(detector='zf')
        with self.assertRaises(ConfigurationError):
            config.with_overrides(gamma=-0.1)

    def test_hash_ignores_key_order(self):
        self.assertEqual(config_hash({'a': 1, 'b': [1, 2]}), config_hash({'b': [1, 2], 'a': 1}))
        self.assertNotEqual(config_hash({'a': 1}), config_hash({'a': 2}))


class TableJobTests(UnitTestCase):
    def raw(self, **overrides):
        raw = {'version': 1, 'kind': 'table', 'codes': [{'rate': '1/2', 'n': 720}]}
        raw.update(overrides)
        return raw

    def test_defaults(self):
        job = table_job_from_dict(self.raw())
        self.assertEqual(job.modulations, (2,))
        self.assertEqual(job.cw_budget, 20000)
        self.assertEqual(len(job.codes), 1)

    def test_rates_times_lengths(self):
        job = table_job_from_dict(self.raw(codes=None, rates=['1/3', '1/2'], lengths=[720, 1440]))
        self.assertEqual(len(job.codes), 4)

    def test_codes_are_required(self):
        with self.assertRaises(ConfigurationError):
            table_job_from_dict(self.raw(codes=None))

    def test_explicit_grid(self):
        job = table_job_from_dict(self.raw(snr_grid=[0.0, 1.0]))
        np.testing.assert_allclose(job.snr_grid.for_capacity(12.3), [0.0, 1.0])

    def test_offset_grid_snaps_to_step(self):
        job = table_job_from_dict(self.raw(snr_grid={'start_offset_db': -1.0, 'stop_offset_db': 1.0, 'step_db': 0.5}))
        np.testing.assert_allclose(job.snr_grid.for_capacity(0.2), [-1.0, -0.5, 0.0, 0.5, 1.0])

    def test_invalid_grid(self):
        with self.assertRaises(ConfigurationError):
            table_job_from_dict(self.raw(snr_grid={'step_db': 0.0}))
        with self.assertRaises(ConfigurationError):
            table_job_from_dict(self.raw(snr_grid={'values': []}))
