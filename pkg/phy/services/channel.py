"""
Synthetic MU-MIMO uplink channels, noise whitening and power control.

A ChannelRealization batches the composite channel of every RE of a
transmission along the leading axis: h has shape (n_re, n_r, N). Column
block i holds UE i's channel scaled by sqrt(rho_i / n_t_i).
"""
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from core.errors import ConfigurationError, InvalidArgument, NumericFailure

logger = logging.getLogger(__name__)

CHANNEL_KINDS = ('iid_rayleigh', 'kronecker', 'ar1')
THERMAL_NOISE_DBM_PER_HZ = -174.0
SUBCARRIERS_PER_PRB = 12
EIGEN_FLOOR = 1e-12


@dataclass(frozen=True)
class UeLayout:
    n_t: int
    power: float
    start: int

    @property
    def stop(self) -> int:
        return self.start + self.n_t

    @property
    def columns(self) -> slice:
        return slice(self.start, self.stop)


def build_layout(n_t_list, powers) -> tuple:
    """Per-UE column layout; powers are linear received SNRs rho_i"""
    n_t_list = [int(n) for n in n_t_list]
    powers = [float(p) for p in powers]
    if len(n_t_list) != len(powers):
        raise InvalidArgument(f"{len(n_t_list)} antenna counts but {len(powers)} powers")
    if any(n < 1 for n in n_t_list):
        raise InvalidArgument(f"Every UE needs at least one antenna, got {n_t_list}")
    if any(p < 0 or not np.isfinite(p) for p in powers):
        raise InvalidArgument(f"Powers must be finite and non-negative, got {powers}")
    starts = np.concatenate([[0], np.cumsum(n_t_list)[:-1]])
    return tuple(UeLayout(n_t=n, power=p, start=int(s)) for n, p, s in zip(n_t_list, powers, starts))


def column_scales(layout) -> np.ndarray:
    return np.concatenate([np.full(ue.n_t, np.sqrt(ue.power / ue.n_t)) for ue in layout])


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Composite channel of a set of REs plus the per-UE layout"""
    h: np.ndarray
    layout: tuple
    h_unscaled: np.ndarray = field(repr=False)
    re_index: np.ndarray = field(default=None, repr=False)

    @property
    def n_re(self) -> int:
        return self.h.shape[0]

    @property
    def n_r(self) -> int:
        return self.h.shape[1]

    @property
    def n_streams(self) -> int:
        return self.h.shape[2]

    @property
    def num_ue(self) -> int:
        return len(self.layout)

    def ue_block(self, ue: int) -> np.ndarray:
        """Unscaled channel of one UE, shape (n_re, n_r, n_t)"""
        return self.h_unscaled[:, :, self.layout[ue].columns]

    def select(self, res) -> 'ChannelRealization':
        """Restrict to a subset of REs (index array, slice or mask)"""
        re_index = None if self.re_index is None else self.re_index[res]
        return replace(self, h=self.h[res], h_unscaled=self.h_unscaled[res], re_index=re_index)


def assemble(blocks, powers, re_index=None) -> ChannelRealization:
    """
    Build the composite channel from unscaled per-UE blocks.

    Args:
        blocks: list of (n_re, n_r, n_t_i) complex arrays
        powers: linear rho_i per UE
        re_index: optional (n_re, 2) array of (subcarrier, symbol)

    Returns:
        ChannelRealization
    """
    blocks = [np.asarray(b, dtype=np.complex128) for b in blocks]
    layout = build_layout([b.shape[2] for b in blocks], powers)
    h_unscaled = np.concatenate(blocks, axis=2)
    h = h_unscaled * column_scales(layout)
    return ChannelRealization(h=h, layout=layout, h_unscaled=h_unscaled, re_index=re_index)


def detach(realization: ChannelRealization) -> list:
    """Inverse of assemble: the unscaled per-UE blocks"""
    return [realization.ue_block(i) for i in range(realization.num_ue)]


def with_powers(realization: ChannelRealization, powers) -> ChannelRealization:
    layout = build_layout([ue.n_t for ue in realization.layout], powers)
    h = realization.h_unscaled * column_scales(layout)
    return replace(realization, h=h, layout=layout)


# ---------------------------------------------------------------------------
# Spatial correlation
# ---------------------------------------------------------------------------

def validate_correlation(matrix, name: str = 'correlation') -> np.ndarray:
    """Check Hermitian, unit diagonal and PSD; returns the matrix as complex"""
    matrix = np.asarray(matrix, dtype=np.complex128)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidArgument(f"{name} matrix must be square, got shape {matrix.shape}")
    if not np.allclose(matrix, matrix.conj().T, atol=1e-9):
        raise InvalidArgument(f"{name} matrix is not Hermitian")
    if not np.allclose(np.diag(matrix).real, 1.0, atol=1e-9):
        raise InvalidArgument(f"{name} matrix must have a unit diagonal")
    eigenvalues = np.linalg.eigvalsh(matrix)
    if eigenvalues.min() < -1e-9:
        raise InvalidArgument(f"{name} matrix is not positive semidefinite (min eigenvalue {eigenvalues.min():.3e})")
    return matrix


def psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix"""
    eigenvalues, vectors = np.linalg.eigh(matrix)
    return (vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ vectors.conj().T


def correlation_from_config(spec, size: int, name: str = 'correlation') -> np.ndarray:
    """
    Correlation matrix from a scenario entry.

    Supported forms: None or {"type": "identity"}; {"type": "exponential",
    "rho": r}; {"type": "eigen", "values": [...]} (DFT eigenbasis, spectrum
    rescaled to unit diagonal); {"type": "dense", "matrix": [[...]]}.
    """
    if spec is None:
        return np.eye(size, dtype=np.complex128)
    kind = spec.get('type', 'identity')
    if kind == 'identity':
        matrix = np.eye(size)
    elif kind == 'exponential':
        rho = float(spec['rho'])
        if not 0 <= abs(rho) <= 1:
            raise InvalidArgument(f"Exponential correlation coefficient must be in [0, 1], got {rho}")
        index = np.arange(size)
        matrix = rho ** np.abs(index[:, None] - index[None, :])
    elif kind == 'eigen':
        values = np.asarray(spec['values'], dtype=np.float64)
        if values.size != size:
            raise InvalidArgument(f"{name} eigen-spectrum has {values.size} values, expected {size}")
        if np.any(values < 0):
            raise InvalidArgument(f"{name} eigen-spectrum must be non-negative")
        values = values * size / values.sum()
        basis = np.fft.fft(np.eye(size)) / np.sqrt(size)
        matrix = (basis * values) @ basis.conj().T
    elif kind == 'dense':
        matrix = np.asarray(spec['matrix'], dtype=np.complex128)
        if matrix.shape != (size, size):
            raise InvalidArgument(f"{name} matrix must be {size}x{size}, got {matrix.shape}")
    else:
        raise InvalidArgument(f"Unknown {name} type {kind!r}")
    return validate_correlation(matrix, name)


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """
    Spatial and temporal channel statistics.

    iid_rayleigh: unit-variance entries; kronecker: Rr^1/2 G Rt^1/2;
    ar1: slot-to-slot evolution H' = a H + sqrt(1-a^2) W (spatial factors
    still apply). rx_corr_alt with regime probability alt_prob switches
    the receive correlation per slot.
    """
    kind: str = 'iid_rayleigh'
    rx_corr: np.ndarray = None
    tx_corr: dict = None
    ar1_coef: float = 0.0
    n_subbands: int = 1
    rx_corr_alt: np.ndarray = None
    alt_prob: float = 0.0
    regime_switch_prob: float = 0.0

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise InvalidArgument(f"Unknown channel kind {self.kind!r}, expected one of {CHANNEL_KINDS}")
        if not 0.0 <= self.ar1_coef <= 1.0:
            raise InvalidArgument(f"AR(1) coefficient must be in [0, 1], got {self.ar1_coef}")
        if self.n_subbands < 1:
            raise InvalidArgument(f"n_subbands must be >= 1, got {self.n_subbands}")
        for prob in (self.alt_prob, self.regime_switch_prob):
            if not 0.0 <= prob <= 1.0:
                raise InvalidArgument(f"Regime probabilities must be in [0, 1], got {prob}")
        for matrix in (self.rx_corr, self.rx_corr_alt):
            if matrix is not None:
                validate_correlation(matrix, 'receive correlation')
        for matrix in (self.tx_corr or {}).values():
            validate_correlation(matrix, 'transmit correlation')

    @property
    def temporal_coef(self) -> float:
        return self.ar1_coef if self.kind == 'ar1' else 0.0

    def rx_sqrt(self, alternate: bool = False):
        matrix = self.rx_corr_alt if alternate else self.rx_corr
        return None if matrix is None else psd_sqrt(matrix)

    def tx_sqrt(self, n_t: int):
        matrix = (self.tx_corr or {}).get(n_t)
        return None if matrix is None else psd_sqrt(matrix)


def channel_model_from_config(cfg: dict, n_r: int, n_t_values=()) -> ChannelModel:
    """Build a ChannelModel from the "channel" section of a scenario"""
    kind = cfg.get('kind', 'iid_rayleigh')
    rx_corr = cfg.get('rx_correlation')
    rx_alt = cfg.get('rx_correlation_alt')
    tx_spec = cfg.get('tx_correlation')
    try:
        tx_corr = {
            n_t: correlation_from_config(tx_spec, n_t, 'transmit correlation')
            for n_t in sorted(set(n_t_values))
        } if tx_spec else None
        return ChannelModel(
            kind=kind,
            rx_corr=correlation_from_config(rx_corr, n_r, 'receive correlation') if rx_corr else None,
            tx_corr=tx_corr,
            ar1_coef=float(cfg.get('ar1_coef', 0.0)),
            n_subbands=int(cfg.get('n_subbands', 1)),
            rx_corr_alt=correlation_from_config(rx_alt, n_r, 'receive correlation') if rx_alt else None,
            alt_prob=float(cfg.get('alt_prob', 0.0)),
            regime_switch_prob=float(cfg.get('regime_switch_prob', 0.0)),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"Invalid channel configuration: {exc}") from exc


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def complex_gaussian(rng, shape, variance: float = 1.0) -> np.ndarray:
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def subband_of_re(n_re: int, n_subbands: int) -> np.ndarray:
    """Contiguous, near-equal assignment of REs to subbands"""
    return (np.arange(n_re) * n_subbands) // n_re


def _shape(model: ChannelModel, innovations: np.ndarray, n_t_list, alternate: bool) -> np.ndarray:
    """Apply Kronecker factors to iid (n_sub, n_r, N) innovations"""
    shaped = innovations
    rx = model.rx_sqrt(alternate)
    if rx is not None:
        shaped = rx @ shaped
    if model.tx_corr:
        shaped = shaped.copy()
        start = 0
        for n_t in n_t_list:
            tx = model.tx_sqrt(n_t)
            if tx is not None:
                shaped[:, :, start:start + n_t] = shaped[:, :, start:start + n_t] @ tx
            start += n_t
    return shaped


def sample_channel(model: ChannelModel, n_r: int, n_t_list, powers, n_re: int, rng) -> ChannelRealization:
    """
    Draw one channel realization (independent per subband, constant within).

    Args:
        model: channel statistics
        n_r: receive antennas
        n_t_list: transmit antennas per UE
        powers: linear rho_i per UE
        n_re: number of REs in the realization
        rng: numpy Generator (named stream)

    Returns:
        ChannelRealization with h of shape (n_re, n_r, sum(n_t))
    """
    if n_r < 1 or n_re < 1:
        raise InvalidArgument(f"Invalid dimensions n_r={n_r}, n_re={n_re}")
    layout = build_layout(n_t_list, powers)
    n_streams = sum(ue.n_t for ue in layout)
    alternate = model.rx_corr_alt is not None and rng.random() < model.alt_prob
    innovations = complex_gaussian(rng, (model.n_subbands, n_r, n_streams))
    subbands = _shape(model, innovations, n_t_list, alternate)
    return _expand(subbands, layout, n_re)


def _expand(subbands: np.ndarray, layout, n_re: int) -> ChannelRealization:
    index = subband_of_re(n_re, subbands.shape[0])
    h_unscaled = subbands[index]
    re_index = np.stack([np.arange(n_re), np.zeros(n_re, dtype=np.int64)], axis=1)
    return ChannelRealization(
        h=h_unscaled * column_scales(layout),
        layout=layout,
        h_unscaled=h_unscaled,
        re_index=re_index,
    )


class ChannelProcess:
    """
    Slot-by-slot channel of one drop.

    The unshaped state G evolves as G' = a G + sqrt(1 - a^2) W per slot;
    Kronecker shaping and the receive-correlation regime are applied on top.
    """

    def __init__(self, model: ChannelModel, n_r: int, n_t_list, rng):
        self.model = model
        self.n_r = n_r
        self.n_t_list = [int(n) for n in n_t_list]
        self.rng = rng
        self.slot = -1
        self.state = None
        self.alternate = False

    def _next_regime(self) -> bool:
        if self.model.rx_corr_alt is None:
            return False
        if self.slot == 0 or self.rng.random() < self.model.regime_switch_prob:
            return bool(self.rng.random() < self.model.alt_prob)
        return self.alternate

    def step(self, powers, n_re: int) -> ChannelRealization:
        """Advance one slot and return its realization"""
        self.slot += 1
        shape = (self.model.n_subbands, self.n_r, sum(self.n_t_list))
        innovation = complex_gaussian(self.rng, shape)
        coef = self.model.temporal_coef
        if self.state is None:
            self.state = innovation
        else:
            self.state = coef * self.state + np.sqrt(1.0 - coef ** 2) * innovation
        self.alternate = self._next_regime()
        shaped = _shape(self.model, self.state, self.n_t_list, self.alternate)
        realization = _expand(shaped, build_layout(self.n_t_list, powers), n_re)
        realization.re_index[:, 1] = self.slot
        return realization


# ---------------------------------------------------------------------------
# Noise, estimation error and whitening
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NoiseModel:
    """K_n: interference-plus-noise covariance; K_e: aggregate estimation-error covariance"""
    k_n: np.ndarray
    k_e: np.ndarray

    def __post_init__(self):
        for name, matrix in (('K_n', self.k_n), ('K_e', self.k_e)):
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise InvalidArgument(f"{name} must be square, got {matrix.shape}")
            if not np.allclose(matrix, matrix.conj().T, atol=1e-9):
                raise InvalidArgument(f"{name} must be Hermitian")
            if np.linalg.eigvalsh(matrix).min() < -1e-9:
                raise InvalidArgument(f"{name} must be positive semidefinite")
        if self.k_n.shape != self.k_e.shape:
            raise InvalidArgument("K_n and K_e must have the same size")

    @property
    def n_r(self) -> int:
        return self.k_n.shape[0]

    @property
    def total(self) -> np.ndarray:
        return self.k_n + self.k_e

    @classmethod
    def identity(cls, n_r: int) -> 'NoiseModel':
        return cls(k_n=np.eye(n_r, dtype=np.complex128), k_e=np.zeros((n_r, n_r), dtype=np.complex128))


def _covariance_from_config(spec, n_r: int, base_dir: Path, name: str) -> np.ndarray:
    if spec is None:
        return np.zeros((n_r, n_r), dtype=np.complex128)
    if isinstance(spec, (int, float)):
        spec = {'type': 'scalar', 'value': spec}
    kind = spec.get('type', 'scalar')
    if kind == 'scalar':
        return float(spec['value']) * np.eye(n_r, dtype=np.complex128)
    if kind == 'diagonal':
        values = np.asarray(spec['values'], dtype=np.float64)
        if values.size != n_r:
            raise ConfigurationError(f"{name} diagonal has {values.size} values, expected {n_r}")
        return np.diag(values).astype(np.complex128)
    if kind == 'file':
        path = Path(spec['path'])
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigurationError(f"{name} file not found: {path}")
        matrix = np.loadtxt(path, delimiter=',', dtype=np.float64, ndmin=2)
        if matrix.shape != (n_r, n_r):
            raise ConfigurationError(f"{name} in {path} must be {n_r}x{n_r}, got {matrix.shape}")
        return matrix.astype(np.complex128)
    raise ConfigurationError(f"Unknown {name} type {kind!r}")


def noise_model_from_config(cfg: dict, n_r: int, base_dir=Path('.')) -> NoiseModel:
    """
    NoiseModel from the "noise" section of a scenario.

    K_n defaults to the identity (noise floor normalized to one), K_e to zero.
    Each entry is a number, {"type": "scalar"|"diagonal"|"file", ...}.
    """
    cfg = cfg or {}
    k_n_spec = cfg.get('k_n', 1.0)
    try:
        k_n = _covariance_from_config(k_n_spec, n_r, Path(base_dir), 'K_n')
        k_e = _covariance_from_config(cfg.get('k_e'), n_r, Path(base_dir), 'K_e')
        return NoiseModel(k_n=k_n, k_e=k_e)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"Invalid noise configuration: {exc}") from exc


def estimate(realization: ChannelRealization, nm: NoiseModel, rng) -> ChannelRealization:
    """
    Channel estimate H_hat = H - dH, dH columns ~ CN(0, K_e / N).

    The aggregate error dH s then has covariance K_e for unit-energy symbols.
    """
    if not np.any(nm.k_e):
        return realization
    n_streams = realization.n_streams
    error_sqrt = psd_sqrt(nm.k_e / n_streams)
    error = error_sqrt @ complex_gaussian(rng, realization.h.shape)
    scales = column_scales(realization.layout)
    safe = np.where(scales > 0, scales, 1.0)
    h_hat = realization.h - error
    return replace(realization, h=h_hat, h_unscaled=h_hat / safe)


def inverse_sqrt(covariance: np.ndarray) -> np.ndarray:
    """(K)^(-1/2) via eigendecomposition; raises NumericFailure when K is numerically singular"""
    eigenvalues, vectors = np.linalg.eigh(covariance)
    largest = eigenvalues.max()
    smallest = eigenvalues.min()
    if largest <= 0 or smallest <= EIGEN_FLOOR * largest:
        condition = np.inf if smallest <= 0 else largest / smallest
        raise NumericFailure("Interference-plus-error covariance is singular", condition_number=condition)
    return (vectors / np.sqrt(eigenvalues)) @ vectors.conj().T


def whiten(h, y, nm: NoiseModel) -> tuple:
    """
    Whiten the received signal and channel estimate with (K_n + K_e)^(-1/2).

    Args:
        h: ChannelRealization holding the estimate H_hat
        y: (n_re, n_r) received vectors, or None
        nm: NoiseModel

    Returns:
        (whitened ChannelRealization, whitened y or None)
    """
    if nm.n_r != h.n_r:
        raise InvalidArgument(f"Noise model is {nm.n_r}x{nm.n_r} but channel has n_r={h.n_r}")
    transform = inverse_sqrt(nm.total)
    scales = column_scales(h.layout)
    safe = np.where(scales > 0, scales, 1.0)
    h_white = transform @ h.h
    whitened = replace(h, h=h_white, h_unscaled=h_white / safe)
    y_white = None if y is None else np.asarray(y) @ transform.T
    return whitened, y_white


def transmit(realization: ChannelRealization, symbols: np.ndarray, nm: NoiseModel, rng) -> np.ndarray:
    """
    Received vectors y = H s + n with n ~ CN(0, K_n).

    The estimation-error term is folded into the noise when the caller
    hands the detector an estimate; with K_e = 0 this is plain AWGN.
    """
    signal = np.einsum('erc,ec->er', realization.h, symbols)
    noise_sqrt = psd_sqrt(nm.k_n)
    noise = complex_gaussian(rng, signal.shape) @ noise_sqrt.T
    return signal + noise


# ---------------------------------------------------------------------------
# Power control and link budget
# ---------------------------------------------------------------------------

def olpc_power(p0_dbm: float, alpha: float, pl_db: float, n_prb: int, p_max_dbm: float) -> float:
    """Open-loop power control: min(Pmax, P0 + 10 log10(N_PRB) + alpha PL) in dBm"""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgument(f"alpha must be in [0, 1], got {alpha}")
    if n_prb < 1:
        raise InvalidArgument(f"N_PRB must be >= 1, got {n_prb}")
    return min(p_max_dbm, p0_dbm + 10.0 * np.log10(n_prb) + alpha * pl_db)


def noise_power_per_prb_dbm(subcarrier_spacing_hz: float, noise_figure_db: float) -> float:
    return THERMAL_NOISE_DBM_PER_HZ + 10.0 * np.log10(SUBCARRIERS_PER_PRB * subcarrier_spacing_hz) + noise_figure_db


def received_snr(tx_power_dbm: float, pl_db: float, n_prb: int,
                 subcarrier_spacing_hz: float = 30e3, noise_figure_db: float = 7.0) -> float:
    """Linear per-RE receive SNR rho for a UE spreading tx_power_dbm over n_prb PRBs"""
    if not np.isfinite(tx_power_dbm):
        return 0.0
    per_prb_dbm = tx_power_dbm - 10.0 * np.log10(n_prb)
    snr_db = per_prb_dbm - pl_db - noise_power_per_prb_dbm(subcarrier_spacing_hz, noise_figure_db)
    return float(10.0 ** (snr_db / 10.0))


def condition_number_db(h) -> np.ndarray:
    """20 log10(sigma_max / sigma_min) per RE; inf for rank-deficient channels"""
    matrix = h.h if isinstance(h, ChannelRealization) else np.asarray(h)
    singular = np.linalg.svd(matrix, compute_uv=False)
    with np.errstate(divide='ignore', invalid='ignore'):
        return 20.0 * np.log10(singular[..., 0] / singular[..., -1])
