"""
EESM beta calibration.

Fits one beta per MCS index so that the EESM-predicted CER of each
codeword matches its full-chain outcome in the least-squares (Brier)
sense. Samples come from a full simulation of an LMMSE receiver run with
SINR recording enabled.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from core.errors import InvalidArgument
from simulation.services.abstraction import AwgnSnrMap, BetaTable, EsmConfig, esm_effective_sinr

logger = logging.getLogger(__name__)

BETA_BOUNDS = (0.1, 50.0)


@dataclass(frozen=True, eq=False)
class CalibrationSample:
    mcs_index: int
    m: int
    rate: object
    n: int
    sinrs: np.ndarray
    weights: np.ndarray
    decoded: bool


@dataclass(frozen=True)
class BetaFit:
    mcs_index: int
    beta: float
    brier: float
    samples: int
    errors: int


def collect_samples(run) -> list:
    """Per-codeword SINR samples of the selected detector from a RunResult"""
    samples = []
    for slot in run.slot_results:
        for ue in slot.chosen:
            for (sinrs, weights), decoded in zip(ue.sinr_samples, ue.ok):
                samples.append(CalibrationSample(
                    mcs_index=ue.mcs_index, m=ue.m, rate=ue.rate, n=ue.n,
                    sinrs=sinrs, weights=weights, decoded=bool(decoded),
                ))
    return samples


def brier_score(beta: float, samples, snr_map: AwgnSnrMap) -> float:
    """Mean squared difference between predicted CER and the observed error indicator"""
    cfg = EsmConfig.eesm(beta)
    residuals = []
    for sample in samples:
        rho_bar, _ = esm_effective_sinr(sample.sinrs, cfg, weights=sample.weights)
        p_hat = snr_map.cer(sample.m, sample.rate, sample.n, rho_bar)
        residuals.append(p_hat - (0.0 if sample.decoded else 1.0))
    return float(np.mean(np.square(residuals)))


def fit_beta(samples, snr_map: AwgnSnrMap, bounds=BETA_BOUNDS) -> BetaFit:
    """Bounded scalar minimisation of the Brier score for one MCS"""
    if not samples:
        raise InvalidArgument("Beta calibration needs at least one sample")
    indices = {s.mcs_index for s in samples}
    if len(indices) != 1:
        raise InvalidArgument(f"Samples of one MCS expected, got indices {sorted(indices)}")
    result = minimize_scalar(
        brier_score, bounds=bounds, args=(samples, snr_map), method='bounded', options={'xatol': 1e-3},
    )
    return BetaFit(
        mcs_index=samples[0].mcs_index,
        beta=float(result.x),
        brier=float(result.fun),
        samples=len(samples),
        errors=sum(not s.decoded for s in samples),
    )


def calibrate_betas(samples, tables, eps: float, min_samples: int = 20) -> tuple:
    """
    Fit beta for every MCS index with enough samples.

    Args:
        samples: CalibrationSample list
        tables: TableStore providing the AWGN SNR-CER relations
        eps: target CER (only used for threshold lookups of the map)
        min_samples: MCS indices with fewer samples keep beta = 1

    Returns:
        (BetaTable, list of BetaFit)
    """
    snr_map = AwgnSnrMap(tables, eps, log_interp=True)
    grouped = {}
    for sample in samples:
        grouped.setdefault(sample.mcs_index, []).append(sample)

    fits = []
    for index in sorted(grouped):
        group = grouped[index]
        if len(group) < min_samples:
            logger.warning("MCS %d has %d samples (< %d); keeping beta = 1", index, len(group), min_samples)
            continue
        fit = fit_beta(group, snr_map)
        logger.info("MCS %d: beta %.3f, Brier %.4f over %d codewords", index, fit.beta, fit.brier, fit.samples)
        fits.append(fit)
    return BetaTable({fit.mcs_index: fit.beta for fit in fits}), fits
