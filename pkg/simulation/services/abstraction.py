"""
PHY abstraction.

Two ways to predict the codeword error probability p_hat without running
the decoder:

* BMDR: the mean predicted BMDR over the codeword's REs, mapped through the
  AWGN BMDR-CER table of the code (works for any detector).
* ESM: per-RE post-equalization SINRs compressed into one effective SINR,
      rho_bar = beta1 * I^-1( mean I(rho / beta2) ),
  mapped through the AWGN SNR-CER relation of the code (linear detectors).

Codeword probabilities compose into transport blocks as
P = 1 - prod(1 - p) and into a UE's BLER as the mean over its blocks.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from core.csvio import read_csv, write_csv
from core.errors import ConfigurationError, InvalidArgument, TargetUnreachable
from phy.services.bmdr import predict_bmdr
from phy.services.mi_curves import get_mi_curves

logger = logging.getLogger(__name__)

ESM_FAMILIES = ('cesm', 'eesm', 'lesm', 'miesm')
BETA_COLUMNS = ['mcs_index', 'beta']


@dataclass(frozen=True)
class EsmConfig:
    """Effective-SINR family with its adaptation parameters beta1, beta2"""
    family: str = 'eesm'
    beta1: float = 1.0
    beta2: float = 1.0

    def __post_init__(self):
        if self.family not in ESM_FAMILIES:
            raise InvalidArgument(f"Unknown ESM family {self.family!r}, expected one of {ESM_FAMILIES}")
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise InvalidArgument(f"ESM betas must be positive, got {self.beta1}, {self.beta2}")

    @classmethod
    def eesm(cls, beta: float) -> 'EsmConfig':
        """Single-beta EESM"""
        return cls(family='eesm', beta1=beta, beta2=beta)


def esm_effective_sinr(sinrs, cfg: EsmConfig, m: int = None, curves=None, weights=None) -> tuple:
    """
    Effective SINR of a set of per-RE SINRs.

    Args:
        sinrs: linear SINRs
        cfg: EsmConfig
        m: modulation order (MIESM only)
        curves: MiCurves for MIESM, default the shared curves
        weights: optional multiplicity of each SINR

    Returns:
        (rho_bar linear, clamped) where clamped flags an MIESM mean
        outside the MI curve range
    """
    sinrs = np.asarray(sinrs, dtype=np.float64).reshape(-1)
    if sinrs.size == 0:
        raise InvalidArgument("ESM needs at least one SINR")
    if np.any(sinrs < 0) or not np.all(np.isfinite(sinrs)):
        raise InvalidArgument("SINRs must be finite and non-negative")
    weights = np.ones(sinrs.size) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.size != sinrs.size:
        raise InvalidArgument(f"{weights.size} weights for {sinrs.size} SINRs")
    weights = weights / weights.sum()
    scaled = sinrs / cfg.beta2

    if cfg.family == 'eesm':
        # -ln(mean exp(-x)) in log-sum-exp form, stable for large SINRs
        value = -logsumexp(-scaled, b=weights)
        return float(cfg.beta1 * value), False
    if cfg.family == 'cesm':
        return float(cfg.beta1 * np.expm1(np.sum(weights * np.log1p(scaled)))), False
    if cfg.family == 'lesm':
        with np.errstate(divide='ignore'):
            mean_log = np.sum(weights * np.log10(scaled))
        return float(cfg.beta1 * 10.0 ** mean_log), False

    if m is None:
        raise InvalidArgument("MIESM needs the modulation order")
    curves = get_mi_curves() if curves is None else curves
    mean_mi = float(np.sum(weights * curves.mi(m, scaled)))
    rho, clamped = curves.inverse(m, mean_mi)
    if clamped:
        logger.debug("MIESM mean MI %.6f outside the m=%d curve; clamped", mean_mi, m)
    return float(cfg.beta1 * rho), clamped


def abstract_bmdr(pred, mods, h, rng=None, weights=None):
    """
    Predicted BMDR of a codeword: the mean over its REs of the per-RE
    prediction (BmdrEstimate, one value per UE).
    """
    if h.n_re == 0:
        raise InvalidArgument("A codeword needs at least one RE")
    return predict_bmdr(pred, mods, h, rng=rng, weights=weights)


def map_cer(table, bmdr: float, log_interp: bool = False) -> float:
    """
    CER of the table row whose BMDR is closest to bmdr; ties go to the
    lower BMDR. log_interp interpolates log10(CER) in BMDR instead.
    """
    cer = table.cleaned_cer()
    if log_interp:
        floor = 0.5 / max(float(table.n_cw.max()), 1.0)
        logs = np.log10(np.maximum(cer, floor))
        return float(np.clip(10.0 ** np.interp(bmdr, table.bmdr, logs), 0.0, 1.0))
    distance = np.abs(table.bmdr - bmdr)
    # rows are sorted by BMDR, so argmin returns the lower of two equidistant rows
    return float(cer[int(np.argmin(distance))])


def _probabilities(values, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InvalidArgument(f"{name} needs at least one probability")
    if np.any(values < 0) or np.any(values > 1) or not np.all(np.isfinite(values)):
        raise InvalidArgument(f"{name} probabilities must lie in [0, 1]")
    return values


def compose_tb(p_hat) -> float:
    """Transport-block error probability 1 - prod(1 - p) over its code blocks"""
    p_hat = _probabilities(p_hat, 'compose_tb')
    return float(1.0 - np.prod(1.0 - p_hat))


def bler(tb_errors) -> float:
    """Mean transport-block error probability"""
    return float(_probabilities(tb_errors, 'bler').mean())


def estimate_throughput(k_bits, p_hat, slots: int, t_slot: float) -> float:
    """Expected throughput in Mbps: sum (1 - p_j) k_j / (T t_slot) / 1e6"""
    if slots <= 0 or t_slot <= 0:
        raise InvalidArgument(f"Slots and slot duration must be positive, got {slots}, {t_slot}")
    k_bits = np.asarray(k_bits, dtype=np.float64)
    p_hat = _probabilities(p_hat, 'estimate_throughput') if np.size(p_hat) else np.zeros(0)
    if k_bits.shape != p_hat.shape:
        raise InvalidArgument(f"{k_bits.shape} payload sizes for {p_hat.shape} probabilities")
    return float(np.sum((1.0 - p_hat) * k_bits) / (slots * t_slot) / 1e6)


@dataclass
class AbstractionResult:
    """Abstracted error probabilities of one UE over a run"""
    ue: int
    p_hat: list = field(default_factory=list)
    tb_error: list = field(default_factory=list)
    k_bits: list = field(default_factory=list)

    def add_tb(self, p_hat, k_bits):
        self.p_hat.append(np.asarray(p_hat, dtype=np.float64))
        self.k_bits.append(np.asarray(k_bits, dtype=np.float64))
        self.tb_error.append(compose_tb(p_hat))

    @property
    def bler(self) -> float:
        return bler(self.tb_error)

    def throughput(self, slots: int, t_slot: float) -> float:
        if not self.p_hat:
            return 0.0
        return estimate_throughput(np.concatenate(self.k_bits), np.concatenate(self.p_hat), slots, t_slot)


# ---------------------------------------------------------------------------
# SNR-CER relations for the ESM path
# ---------------------------------------------------------------------------

class AwgnSnrMap:
    """
    AWGN SNR-CER relation of every (m, rate, n).

    When the table store holds a table of the requested order its SNR
    column is used directly. Otherwise the QPSK-built table is reached
    through the BMDR axis: SNR -> I_m(SNR) / m -> table.
    """

    def __init__(self, tables, eps: float, curves=None, log_interp: bool = False):
        self.tables = tables
        self.eps = float(eps)
        self.curves = curves
        self.log_interp = log_interp
        self._thresholds = {}

    def _curves(self):
        return get_mi_curves() if self.curves is None else self.curves

    def threshold_db(self, m: int, rate, n: int) -> float:
        """Lowest AWGN SNR (dB) meeting eps; inf when unreachable"""
        key = (m, rate, n)
        if key not in self._thresholds:
            lookup = self.tables.table_for(m, rate, n)
            try:
                if lookup.qpsk_fallback:
                    target = lookup.value.target(self.eps)
                    snr, _ = self._curves().inverse(m, m * target)
                    value = 10.0 * np.log10(snr)
                else:
                    value = lookup.value.snr_threshold(self.eps)
            except TargetUnreachable:
                value = np.inf
            self._thresholds[key] = float(value)
        return self._thresholds[key]

    __call__ = threshold_db

    def cer(self, m: int, rate, n: int, snr_linear: float) -> float:
        lookup = self.tables.table_for(m, rate, n)
        table = lookup.value
        if lookup.qpsk_fallback:
            return map_cer(table, float(self._curves().bmdr(m, snr_linear)), self.log_interp)
        snr_db = 10.0 * np.log10(max(snr_linear, 1e-30))
        return table.cer_at_snr(snr_db, log_interp=self.log_interp)


def abstract_esm(sinrs, cfg: EsmConfig, m: int, rate, n: int, snr_map: AwgnSnrMap, weights=None) -> tuple:
    """
    ESM abstraction of one codeword.

    Returns:
        (p_hat, rho_bar linear, clamped)
    """
    rho_bar, clamped = esm_effective_sinr(sinrs, cfg, m=m, curves=snr_map.curves, weights=weights)
    return snr_map.cer(m, rate, n, rho_bar), rho_bar, clamped


# ---------------------------------------------------------------------------
# Per-MCS EESM beta
# ---------------------------------------------------------------------------

class BetaTable:
    """EESM beta per MCS index; indices without an entry use beta = 1"""

    def __init__(self, betas=None):
        self.betas = {int(k): float(v) for k, v in (betas or {}).items()}
        for index, beta in self.betas.items():
            if beta <= 0:
                raise InvalidArgument(f"beta for MCS {index} must be positive, got {beta}")

    def beta(self, mcs_index: int) -> float:
        return self.betas.get(int(mcs_index), 1.0)

    def to_csv(self, path) -> Path:
        rows = sorted(self.betas.items())
        return write_csv(path, BETA_COLUMNS, rows, comments=['linksim eesm beta table'])

    @classmethod
    def from_csv(cls, path) -> 'BetaTable':
        _, rows = read_csv(path)
        try:
            return cls({int(row['mcs_index']): float(row['beta']) for row in rows})
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"Invalid beta table {path}: {exc}") from exc
