"""
Scenario files.

A scenario is a versioned JSON document. "kind": "simulation" describes a
closed-loop run (SimConfig); "kind": "table" describes a BMDR-CER table
build (TableJob). Unknown keys are rejected so typos do not silently fall
back to defaults.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from django.conf import settings

from core.errors import ConfigurationError, InvalidArgument, LinkSimError
from phy.services.bmdr import BmdrPredictor
from phy.services.channel import (
    NoiseModel,
    channel_model_from_config,
    noise_model_from_config,
    olpc_power,
    received_snr,
)
from phy.services.coding import parse_rate
from phy.services.detect import DetectorSpec, order_by_complexity
from simulation.services.mcs import McsTable, default_mcs_table

logger = logging.getLogger(__name__)

SCENARIO_VERSION = 1
SCHEMES = ('lmmse-eesm', 'single', 'hybrid')

SIMULATION_KEYS = {
    'version', 'kind', 'name', 'description', 'seed', 'drops', 'slots', 't_slot',
    'n_re_per_codeword', 'codewords_per_tb', 'n_r', 'ues', 'link_budget',
    'channel', 'noise', 'detectors', 'scheme', 'gamma', 'predictors',
    'mcs_table', 'target_cer', 'olla', 'table_dir', 'beta_table', 'noiseless',
    'power_scale',
}
UE_KEYS = {'n_t', 'count', 'snr_db', 'p0_dbm', 'alpha', 'pathloss_db', 'p_max_dbm', 'n_prb'}
OLLA_KEYS = {'step_fail', 'step_ok', 'eesm_step_fail_db', 'eesm_bound_db'}
TABLE_JOB_KEYS = {
    'version', 'kind', 'name', 'description', 'seed', 'codes', 'rates', 'lengths',
    'modulations', 'snr_grid', 'cw_budget', 'mi_budget', 'batch_size', 'table_dir',
}

# receiver noise floor standing in for "no noise"
NOISELESS_FLOOR = 1e-8


def config_hash(raw: dict) -> str:
    """sha256 of the canonical JSON form of a scenario"""
    canonical = json.dumps(raw, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _check_keys(section: dict, allowed: set, where: str):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigurationError(f"Unknown key(s) {unknown} in {where}")


def _positive_int(raw: dict, key: str, default=None) -> int:
    value = raw.get(key, default)
    if value is None:
        raise ConfigurationError(f"Scenario is missing required key {key!r}")
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigurationError(f"{key} must be a positive integer, got {value!r}")
    return value


def _resolve(base_dir: Path, value) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base_dir / path


@dataclass(frozen=True)
class UeConfig:
    """
    One scheduled UE.

    The per-RE receive SNR is either given directly (snr_db) or derived
    from open-loop power control and a pathloss that is fixed or drawn
    uniformly per drop from [min, max].
    """
    n_t: int = 1
    snr_db: float = None
    p0_dbm: float = -98.0
    alpha: float = 1.0
    pathloss_db: tuple = (100.0, 100.0)
    p_max_dbm: float = 23.0
    n_prb: int = 24

    def rho(self, draw: float, link_budget: dict) -> float:
        """Linear receive SNR for a uniform draw in [0, 1) selecting the pathloss"""
        if self.snr_db is not None:
            return float(10.0 ** (self.snr_db / 10.0))
        low, high = self.pathloss_db
        pathloss = low + draw * (high - low)
        tx_power = olpc_power(self.p0_dbm, self.alpha, pathloss, self.n_prb, self.p_max_dbm)
        return received_snr(
            tx_power, pathloss, self.n_prb,
            subcarrier_spacing_hz=link_budget.get('subcarrier_spacing_hz', 30e3),
            noise_figure_db=link_budget.get('noise_figure_db', 7.0),
        )


@dataclass(frozen=True)
class OllaConfig:
    step_fail: float
    step_ok: float
    eesm_step_fail_db: float = 0.5
    eesm_step_ok_db: float = None
    eesm_bound_db: float = 10.0


@dataclass(frozen=True, eq=False)
class SimConfig:
    name: str
    seed: int
    drops: int
    slots: int
    t_slot: float
    n_re: int
    codewords_per_tb: int
    n_r: int
    ues: tuple
    link_budget: dict
    channel: object
    noise: NoiseModel
    detectors: tuple
    scheme: str
    gamma: float
    predictor_settings: dict
    mcs_table: McsTable
    target_cer: float
    olla: OllaConfig
    table_dir: Path
    beta_table: Path = None
    noiseless: bool = False
    power_scale: float = 1.0
    path: Path = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def num_ue(self) -> int:
        return len(self.ues)

    @property
    def n_t_list(self) -> list:
        return [ue.n_t for ue in self.ues]

    @property
    def n_re_per_tb(self) -> int:
        return self.n_re * self.codewords_per_tb

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)

    @property
    def receiver_noise(self) -> NoiseModel:
        """Covariance the receiver whitens with"""
        if self.noiseless:
            return NoiseModel(
                k_n=NOISELESS_FLOOR * np.eye(self.n_r, dtype=np.complex128),
                k_e=np.zeros((self.n_r, self.n_r), dtype=np.complex128),
            )
        return self.noise

    @property
    def channel_noise(self) -> NoiseModel:
        """Covariance of the noise actually added to the received signal"""
        if self.noiseless:
            zeros = np.zeros((self.n_r, self.n_r), dtype=np.complex128)
            return NoiseModel(k_n=zeros, k_e=zeros)
        return self.noise

    def ue_powers(self, rng) -> np.ndarray:
        """Per-drop linear receive SNRs; one pathloss draw per UE"""
        draws = rng.random(self.num_ue)
        return self.power_scale * np.array([ue.rho(d, self.link_budget) for ue, d in zip(self.ues, draws)])

    def predictor_for(self, spec: DetectorSpec) -> BmdrPredictor:
        options = self.predictor_settings.get(spec.name, {})
        kind = options.get('kind', 'mi_table' if spec.is_linear else 'monte_carlo')
        return BmdrPredictor(kind=kind, detector=spec, n_samples=int(options.get('n_samples', 16)))

    @property
    def se_complexities(self) -> list:
        """Complexity of each detector at the top modulation order"""
        mods = [self.mcs_table.m_max] * self.num_ue
        return [spec.complexity_for(mods, self.n_t_list) for spec in self.detectors]

    def with_overrides(self, seed=None, detector=None, gamma=None) -> 'SimConfig':
        """Apply --seed, --detector and --gamma"""
        config = self
        if seed is not None:
            config = replace(config, seed=int(seed))
        if detector is not None:
            known = {spec.name: spec for spec in config.detectors}
            try:
                spec = known.get(detector) or DetectorSpec.parse(detector)
            except InvalidArgument as exc:
                raise ConfigurationError(str(exc)) from exc
            scheme = 'lmmse-eesm' if config.scheme == 'lmmse-eesm' else 'single'
            config = replace(config, detectors=(spec,), scheme=scheme)
        if gamma is not None:
            if not 0.0 <= gamma <= 1.0:
                raise ConfigurationError(f"gamma must lie in [0, 1], got {gamma}")
            config = replace(config, gamma=float(gamma), scheme='hybrid')
        config._validate_scheme()
        return config

    def _validate_scheme(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"Unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.scheme == 'single' and len(self.detectors) != 1:
            raise ConfigurationError(
                f"Scheme 'single' needs exactly one detector, got {[d.name for d in self.detectors]}; "
                f"pick one with --detector"
            )
        if self.scheme == 'lmmse-eesm' and [d.kind for d in self.detectors] != ['lmmse']:
            raise ConfigurationError("Scheme 'lmmse-eesm' runs the LMMSE detector only")


@dataclass(frozen=True, eq=False)
class SnrGrid:
    """Explicit SNR values, or offsets around the AWGN capacity SNR of each code"""
    values: tuple = None
    start_offset_db: float = -1.0
    stop_offset_db: float = 6.0
    step_db: float = 0.5

    def for_capacity(self, capacity_db: float) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=np.float64)
        count = int(np.floor((self.stop_offset_db - self.start_offset_db) / self.step_db + 1e-9)) + 1
        offsets = self.start_offset_db + self.step_db * np.arange(count)
        # snap to the step so grids of different codes line up
        return np.round((capacity_db + offsets) / self.step_db) * self.step_db


@dataclass(frozen=True, eq=False)
class TableJob:
    name: str
    seed: int
    codes: tuple
    modulations: tuple
    snr_grid: SnrGrid
    cw_budget: int
    mi_budget: int
    batch_size: int
    table_dir: Path
    path: Path = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def read_scenario(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Scenario file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"Scenario {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"Scenario {path} must be a JSON object")
    if raw.get('version') != SCENARIO_VERSION:
        raise ConfigurationError(f"Scenario {path} must declare \"version\": {SCENARIO_VERSION}")
    return raw


def load_scenario(path):
    """SimConfig or TableJob, depending on the scenario's "kind" """
    raw = read_scenario(path)
    kind = raw.get('kind', 'simulation')
    if kind == 'simulation':
        return sim_config_from_dict(raw, Path(path))
    if kind == 'table':
        return table_job_from_dict(raw, Path(path))
    raise ConfigurationError(f"Unknown scenario kind {kind!r} in {path}")


def load_sim_config(path) -> SimConfig:
    config = load_scenario(path)
    if not isinstance(config, SimConfig):
        raise ConfigurationError(f"{path} describes a table build, not a simulation")
    return config


def load_table_job(path) -> TableJob:
    config = load_scenario(path)
    if not isinstance(config, TableJob):
        raise ConfigurationError(f"{path} describes a simulation, not a table build")
    return config


def _ue_from_dict(entry: dict, position: int) -> tuple:
    _check_keys(entry, UE_KEYS, f"ues[{position}]")
    count = entry.get('count', 1)
    if not isinstance(count, int) or count < 1:
        raise ConfigurationError(f"ues[{position}].count must be a positive integer")
    pathloss = entry.get('pathloss_db', 100.0)
    if isinstance(pathloss, dict):
        pathloss = (float(pathloss['min']), float(pathloss['max']))
    else:
        pathloss = (float(pathloss), float(pathloss))
    if pathloss[0] > pathloss[1]:
        raise ConfigurationError(f"ues[{position}].pathloss_db has min > max")
    ue = UeConfig(
        n_t=_positive_int(entry, 'n_t', 1),
        snr_db=None if entry.get('snr_db') is None else float(entry['snr_db']),
        p0_dbm=float(entry.get('p0_dbm', -98.0)),
        alpha=float(entry.get('alpha', 1.0)),
        pathloss_db=pathloss,
        p_max_dbm=float(entry.get('p_max_dbm', 23.0)),
        n_prb=_positive_int(entry, 'n_prb', 24),
    )
    if not 0.0 <= ue.alpha <= 1.0:
        raise ConfigurationError(f"ues[{position}].alpha must lie in [0, 1]")
    return (ue,) * count


def _detectors_from_list(entries, mcs_table: McsTable, n_t_list) -> tuple:
    specs = []
    for entry in entries:
        if isinstance(entry, str):
            specs.append(DetectorSpec.parse(entry))
        else:
            specs.append(DetectorSpec.parse(entry['name'], entry.get('complexity')))
    mods = [mcs_table.m_max] * len(n_t_list)
    return tuple(order_by_complexity(specs, mods, n_t_list))


def _olla_from_dict(raw: dict, eps: float) -> OllaConfig:
    raw = raw or {}
    _check_keys(raw, OLLA_KEYS, 'olla')
    step_fail = float(raw.get('step_fail', settings.LINKSIM_OLLA_STEP_FAIL))
    # drift balance: eps * step_fail = (1 - eps) * step_ok
    step_ok = float(raw.get('step_ok', step_fail * eps / (1.0 - eps)))
    eesm_fail = float(raw.get('eesm_step_fail_db', 0.5))
    if min(step_fail, step_ok, eesm_fail) <= 0:
        raise ConfigurationError("OLLA step sizes must be positive")
    return OllaConfig(
        step_fail=step_fail,
        step_ok=step_ok,
        eesm_step_fail_db=eesm_fail,
        eesm_step_ok_db=eesm_fail * eps / (1.0 - eps),
        eesm_bound_db=float(raw.get('eesm_bound_db', 10.0)),
    )


def sim_config_from_dict(raw: dict, path: Path = None) -> SimConfig:
    """
    Build a SimConfig from a parsed scenario.

    Args:
        raw: scenario dictionary ("kind": "simulation")
        path: file the scenario came from; relative paths resolve against its directory

    Returns:
        SimConfig
    """
    _check_keys(raw, SIMULATION_KEYS, 'simulation scenario')
    base_dir = path.parent if path is not None else Path('.')
    try:
        n_r = _positive_int(raw, 'n_r')
        if not raw.get('ues'):
            raise ConfigurationError("Scenario needs a non-empty 'ues' list")
        ues = tuple(ue for i, entry in enumerate(raw['ues']) for ue in _ue_from_dict(entry, i))
        n_t_list = [ue.n_t for ue in ues]

        mcs_path = raw.get('mcs_table')
        if mcs_path is None:
            mcs_table = default_mcs_table()
        else:
            resolved = _resolve(base_dir, mcs_path)
            if not resolved.exists():
                raise ConfigurationError(f"MCS table not found: {resolved}")
            mcs_table = McsTable.from_csv(resolved)

        eps = float(raw.get('target_cer', 1e-2))
        if not 0.0 < eps < 1.0:
            raise ConfigurationError(f"target_cer must lie in (0, 1), got {eps}")

        t_slot = float(raw.get('t_slot', 5e-4))
        if t_slot <= 0:
            raise ConfigurationError(f"t_slot must be positive, got {t_slot}")

        gamma = raw.get('gamma')
        if gamma is not None:
            gamma = float(gamma)
            if not 0.0 <= gamma <= 1.0:
                raise ConfigurationError(f"gamma must lie in [0, 1], got {gamma}")

        power_scale = float(raw.get('power_scale', 1.0))
        if power_scale < 0:
            raise ConfigurationError("power_scale must be non-negative")

        beta_table = raw.get('beta_table')
        config = SimConfig(
            name=str(raw.get('name', path.stem if path else 'scenario')),
            seed=int(raw.get('seed', 1)),
            drops=_positive_int(raw, 'drops', 1),
            slots=_positive_int(raw, 'slots', 100),
            t_slot=t_slot,
            n_re=_positive_int(raw, 'n_re_per_codeword', 360),
            codewords_per_tb=_positive_int(raw, 'codewords_per_tb', 1),
            n_r=n_r,
            ues=ues,
            link_budget=dict(raw.get('link_budget') or {}),
            channel=channel_model_from_config(raw.get('channel') or {}, n_r, n_t_list),
            noise=noise_model_from_config(raw.get('noise') or {}, n_r, base_dir),
            detectors=_detectors_from_list(raw.get('detectors', ['lmmse']), mcs_table, n_t_list),
            scheme=str(raw.get('scheme', 'single')),
            gamma=gamma,
            predictor_settings=dict(raw.get('predictors') or {}),
            mcs_table=mcs_table,
            target_cer=eps,
            olla=_olla_from_dict(raw.get('olla'), eps),
            table_dir=_resolve(base_dir, raw['table_dir']) if raw.get('table_dir') else Path(settings.LINKSIM_TABLE_DIR),
            beta_table=_resolve(base_dir, beta_table) if beta_table else None,
            noiseless=bool(raw.get('noiseless', False)),
            power_scale=power_scale,
            path=path,
            raw=raw,
        )
    except ConfigurationError:
        raise
    except (LinkSimError, KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"Invalid scenario {path or ''}: {exc}") from exc
    config._validate_scheme()
    for spec in config.detectors:
        try:
            config.predictor_for(spec)
        except InvalidArgument as exc:
            raise ConfigurationError(f"Predictor for {spec.name}: {exc}") from exc
    return config


def table_job_from_dict(raw: dict, path: Path = None) -> TableJob:
    """Build a TableJob from a parsed scenario ("kind": "table")"""
    _check_keys(raw, TABLE_JOB_KEYS, 'table scenario')
    base_dir = path.parent if path is not None else Path('.')
    try:
        if raw.get('codes'):
            codes = [(parse_rate(c['rate']), int(c['n'])) for c in raw['codes']]
        elif raw.get('rates') and raw.get('lengths'):
            codes = [(parse_rate(r), int(n)) for r in raw['rates'] for n in raw['lengths']]
        else:
            raise ConfigurationError("Table scenario needs 'codes' or both 'rates' and 'lengths'")
        if any(n < 1 for _, n in codes):
            raise ConfigurationError("Codeword lengths must be positive")

        grid = raw.get('snr_grid') or {}
        if isinstance(grid, list):
            snr_grid = SnrGrid(values=tuple(float(v) for v in grid))
        else:
            snr_grid = SnrGrid(
                values=tuple(float(v) for v in grid['values']) if 'values' in grid else None,
                start_offset_db=float(grid.get('start_offset_db', -1.0)),
                stop_offset_db=float(grid.get('stop_offset_db', 6.0)),
                step_db=float(grid.get('step_db', 0.5)),
            )
        if snr_grid.values is not None and not snr_grid.values:
            raise ConfigurationError("snr_grid.values must not be empty")
        if snr_grid.values is None and (snr_grid.step_db <= 0 or snr_grid.stop_offset_db < snr_grid.start_offset_db):
            raise ConfigurationError("snr_grid needs step_db > 0 and stop_offset_db >= start_offset_db")

        modulations = tuple(int(m) for m in raw.get('modulations', [2]))
        return TableJob(
            name=str(raw.get('name', path.stem if path else 'tables')),
            seed=int(raw.get('seed', 1)),
            codes=tuple(dict.fromkeys(codes)),
            modulations=modulations,
            snr_grid=snr_grid,
            cw_budget=_positive_int(raw, 'cw_budget', 20000),
            mi_budget=_positive_int(raw, 'mi_budget', 10000),
            batch_size=_positive_int(raw, 'batch_size', 200),
            table_dir=_resolve(base_dir, raw['table_dir']) if raw.get('table_dir') else Path(settings.LINKSIM_TABLE_DIR),
            path=path,
            raw=raw,
        )
    except ConfigurationError:
        raise
    except (LinkSimError, KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"Invalid table scenario {path or ''}: {exc}") from exc
