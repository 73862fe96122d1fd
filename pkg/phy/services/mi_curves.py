"""
AWGN bit-level mutual-information curves I_m(x) for Gray square QAM.

I_m(x) is the BICM mutual information (bits per symbol) of 2^m-QAM at
linear SNR x. A Gray square QAM splits into two independent sqrt(M)-PAM
axes, each with SNR 2x per real dimension, so the curve is computed as
twice the per-axis bit MI, integrating the noise by Gauss-Hermite
quadrature. Curves live on a 0.1 dB grid and are interpolated with a
monotone cubic (PCHIP) in the dB domain.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from django.conf import settings
from scipy.interpolate import PchipInterpolator
from scipy.optimize import bisect
from scipy.special import logsumexp

from core.csvio import read_csv, write_csv
from core.errors import ConfigurationError, InvalidArgument
from phy.services.modem import SUPPORTED_ORDERS, pam_amplitudes

logger = logging.getLogger(__name__)

GRID_MIN_DB = -20.0
GRID_MAX_DB = 40.0
GRID_STEP_DB = 0.1
QUADRATURE_NODES = 64
CURVE_FORMAT = 'linksim bit-mi curves v1'


def snr_grid_db() -> np.ndarray:
    count = int(round((GRID_MAX_DB - GRID_MIN_DB) / GRID_STEP_DB)) + 1
    return np.round(np.linspace(GRID_MIN_DB, GRID_MAX_DB, count), 10)


def bicm_mutual_information(m: int, snr_linear) -> np.ndarray:
    """
    BICM mutual information of Gray 2^m-QAM over AWGN.

    Args:
        m: bits per symbol
        snr_linear: array of linear SNRs (Es/N0)

    Returns:
        bits per symbol, same shape as snr_linear
    """
    if m not in SUPPORTED_ORDERS:
        raise InvalidArgument(f"Modulation order must be one of {SUPPORTED_ORDERS}, got {m}")
    snr = np.atleast_1d(np.asarray(snr_linear, dtype=np.float64))
    half = m // 2
    levels = 1 << half
    scale = np.sqrt(2.0 * ((1 << m) - 1) / 3.0)
    amplitudes = pam_amplitudes(half) / scale
    labels = (np.arange(levels)[:, None] >> np.arange(half - 1, -1, -1)) & 1

    nodes, weights = np.polynomial.hermite.hermgauss(QUADRATURE_NODES)
    weights = weights / np.sqrt(np.pi)

    # per real dimension: signal energy 1/2, noise variance 1/(2 snr)
    with np.errstate(divide='ignore'):
        sigma2 = 1.0 / (2.0 * snr)
    sigma2 = np.where(np.isfinite(sigma2), sigma2, np.inf)[:, None, None, None]
    noise = np.sqrt(2.0 * sigma2[..., 0]) * nodes
    # received (snr, sent level, node)
    received = amplitudes[None, :, None] + noise
    with np.errstate(invalid='ignore'):
        log_lik = -(received[..., None] - amplitudes) ** 2 / (2.0 * sigma2)
    log_lik = np.where(np.isfinite(log_lik), log_lik, 0.0)

    all_levels = logsumexp(log_lik, axis=-1)
    axis_mi = np.zeros(snr.shape)
    for j in range(half):
        sent_bit = labels[:, j]
        same = labels[:, j][None, :] == sent_bit[:, None]
        same_levels = logsumexp(np.where(same[None, :, None, :], log_lik, -np.inf), axis=-1)
        # log2 of p(y) / p(y | b), averaged over levels and noise
        penalty = (all_levels - same_levels) / np.log(2.0)
        expected = np.einsum('sln,n->s', penalty, weights) / levels
        axis_mi += 1.0 - expected
    mi = np.clip(2.0 * axis_mi, 0.0, float(m))
    if np.ndim(snr_linear) == 0:
        return float(mi[0])
    return mi.reshape(np.shape(snr_linear))


@dataclass(frozen=True, eq=False)
class MiCurves:
    """Tabulated I_m on an SNR grid in dB, with PCHIP interpolation and inversion"""
    snr_db: np.ndarray
    values: dict

    def __post_init__(self):
        object.__setattr__(self, '_interpolators', {
            m: PchipInterpolator(self.snr_db, curve, extrapolate=False)
            for m, curve in self.values.items()
        })

    def _curve(self, m: int) -> np.ndarray:
        if m not in self.values:
            raise InvalidArgument(f"No MI curve for m={m}; available {sorted(self.values)}")
        return self.values[m]

    def mi(self, m: int, snr_linear) -> np.ndarray:
        """I_m(x) in bits per symbol; clamps to the grid ends"""
        curve = self._curve(m)
        snr = np.asarray(snr_linear, dtype=np.float64)
        with np.errstate(divide='ignore'):
            snr_db = 10.0 * np.log10(np.maximum(snr, 0.0))
        clamped = np.clip(snr_db, self.snr_db[0], self.snr_db[-1])
        value = self._interpolators[m](clamped)
        value = np.where(snr_db <= self.snr_db[0], curve[0], value)
        value = np.where(snr_db >= self.snr_db[-1], curve[-1], value)
        return value

    def bmdr(self, m: int, snr_linear) -> np.ndarray:
        """Per-bit MI, I_m(x) / m"""
        return self.mi(m, snr_linear) / m

    def inverse(self, m: int, mi_value, tol: float = 1e-10) -> tuple:
        """
        Linear SNR x with I_m(x) = mi_value.

        Returns:
            (snr_linear, clamped) where clamped flags values outside the
            curve range, mapped to the nearest grid end
        """
        curve = self._curve(m)
        target = float(mi_value)
        if target <= curve[0]:
            return 10.0 ** (self.snr_db[0] / 10.0), target < curve[0]
        if target >= curve[-1]:
            return 10.0 ** (self.snr_db[-1] / 10.0), target > curve[-1]
        interpolator = self._interpolators[m]
        # first grid point at or above the target brackets the root
        upper = int(np.searchsorted(curve, target, side='left'))
        lower = max(upper - 1, 0)
        if curve[upper] == target:
            return 10.0 ** (self.snr_db[upper] / 10.0), False
        root = bisect(
            lambda x: float(interpolator(x)) - target,
            self.snr_db[lower], self.snr_db[upper], xtol=tol,
        )
        return 10.0 ** (root / 10.0), False


def compute_curves(orders=SUPPORTED_ORDERS) -> MiCurves:
    grid = snr_grid_db()
    snr = 10.0 ** (grid / 10.0)
    values = {}
    for m in orders:
        curve = np.concatenate([
            bicm_mutual_information(m, part) for part in np.array_split(snr, 20)
        ])
        # quadrature noise must not break monotonicity
        values[m] = np.maximum.accumulate(curve)
        logger.debug("Computed I_%d on %d grid points", m, grid.size)
    return MiCurves(snr_db=grid, values=values)


def write_curves(curves: MiCurves, path) -> Path:
    orders = sorted(curves.values)
    rows = (
        [snr] + [curves.values[m][i] for m in orders]
        for i, snr in enumerate(curves.snr_db)
    )
    return write_csv(
        path,
        ['snr_db'] + [f'm{m}' for m in orders],
        rows,
        comments=[f"{CURVE_FORMAT}; bits per symbol; gauss-hermite nodes {QUADRATURE_NODES}"],
    )


def read_curves(path) -> MiCurves:
    comments, rows = read_csv(path)
    if not comments or not comments[0].startswith(CURVE_FORMAT):
        raise ConfigurationError(f"{path} is not a {CURVE_FORMAT} file")
    try:
        snr_db = np.array([float(row['snr_db']) for row in rows])
        orders = [int(name[1:]) for name in rows[0] if name.startswith('m')]
        values = {m: np.array([float(row[f'm{m}']) for row in rows]) for m in orders}
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigurationError(f"Malformed MI curve file {path}") from exc
    return MiCurves(snr_db=snr_db, values=values)


def get_curve_path() -> Path:
    return Path(settings.LINKSIM_MI_CURVE_PATH)


@lru_cache(maxsize=1)
def get_mi_curves() -> MiCurves:
    """Curves from LINKSIM_MI_CURVE_PATH when present, otherwise computed in memory"""
    path = get_curve_path()
    if path.exists():
        return read_curves(path)
    logger.info("MI curve file %s not found; computing curves (python manage.py generate_mi_curves writes it)", path)
    return compute_curves()


def awgn_capacity_snr(m: int, rate) -> float:
    """Linear SNR at which I_m(x) / m equals the code rate"""
    curves = get_mi_curves()
    snr, _ = curves.inverse(m, float(rate) * m)
    return snr
