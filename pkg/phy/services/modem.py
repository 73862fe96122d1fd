"""
Gray-labelled square QAM, bit/symbol mapping and soft demapping.

LLR convention used throughout linksim: L = log(P[b=1] / P[b=0]). LLR values
are float64 numpy arrays clipped to +/- LINKSIM_LLR_CLIP.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from django.conf import settings
from scipy.special import expit, logsumexp

from core.errors import InvalidArgument

SUPPORTED_ORDERS = (2, 4, 6, 8)

# same expression as the posterior below, so L = 0 gives exactly -1 bit
_LN2 = np.logaddexp(0.0, 0.0)


def get_llr_clip() -> float:
    """LLR clip limit from settings"""
    return float(settings.LINKSIM_LLR_CLIP)


@dataclass(frozen=True, eq=False)
class Constellation:
    """
    Unit-energy 2^m-QAM.

    points[v] is the symbol labelled by the m-bit integer v (MSB first);
    labels[v] holds those bits. The first m/2 bits select the in-phase
    level, the last m/2 the quadrature level, each with a reflected Gray code.
    """
    order: int
    points: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def bit_weights(self) -> np.ndarray:
        return 1 << np.arange(self.order - 1, -1, -1)

    def bit_masks(self) -> np.ndarray:
        """(m, 2^m) boolean array, True where bit j of the label is 1"""
        return self.labels.T.astype(bool)


def _inverse_gray(g: int) -> int:
    position = g
    shift = g >> 1
    while shift:
        position ^= shift
        shift >>= 1
    return position


def pam_amplitudes(bits_per_axis: int) -> np.ndarray:
    """Amplitude of the PAM level labelled by each Gray code value"""
    levels = 1 << bits_per_axis
    return np.array(
        [2 * _inverse_gray(g) - (levels - 1) for g in range(levels)],
        dtype=np.float64,
    )


@lru_cache(maxsize=None)
def build_constellation(m: int) -> Constellation:
    """
    Build the unit-energy Gray-labelled square 2^m-QAM.

    Args:
        m: bits per symbol, one of 2, 4, 6, 8

    Returns:
        Constellation (cached, immutable)
    """
    if m not in SUPPORTED_ORDERS:
        raise InvalidArgument(f"Modulation order must be one of {SUPPORTED_ORDERS}, got {m}")

    half = m // 2
    amplitudes = pam_amplitudes(half)
    size = 1 << m
    values = np.arange(size)
    in_phase = amplitudes[values >> half]
    quadrature = amplitudes[values & ((1 << half) - 1)]
    scale = np.sqrt(2.0 * (size - 1) / 3.0)
    points = (in_phase + 1j * quadrature) / scale

    labels = ((values[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.uint8)

    points.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(order=m, points=points, labels=labels)


def map_bits(bits, c: Constellation) -> np.ndarray:
    """
    Map groups of m bits to constellation symbols.

    Args:
        bits: 0/1 array whose last axis has a length divisible by m
        c: constellation

    Returns:
        complex array with the last axis shortened by a factor m
    """
    bits = np.asarray(bits)
    if bits.shape[-1] % c.order != 0:
        raise InvalidArgument(
            f"Bit string length {bits.shape[-1]} is not divisible by m={c.order}"
        )
    groups = bits.reshape(bits.shape[:-1] + (-1, c.order)).astype(np.int64)
    return c.points[groups @ c.bit_weights]


def demap_bits(symbols, c: Constellation) -> np.ndarray:
    """Hard demapping to the nearest point; inverse of map_bits on clean symbols"""
    symbols = np.asarray(symbols)
    nearest = np.argmin(np.abs(symbols[..., None] - c.points) ** 2, axis=-1)
    bits = c.labels[nearest]
    return bits.reshape(symbols.shape[:-1] + (-1,))


def clip_llrs(values, clip_limit: float = None) -> np.ndarray:
    """Clip LLRs to +/- clip_limit"""
    limit = get_llr_clip() if clip_limit is None else clip_limit
    return np.clip(values, -limit, limit)


def demap_scalar(z, noise_var, c: Constellation, max_log: bool = True, clip_limit: float = None) -> np.ndarray:
    """
    Soft demapping of scalar observations z = s + w, w ~ CN(0, noise_var).

    Args:
        z: complex array of equalized symbols
        noise_var: noise variance, broadcastable to z
        c: constellation
        max_log: max-log (default) or exact log-MAP LLRs
        clip_limit: LLR clip, defaults to LINKSIM_LLR_CLIP

    Returns:
        float array of shape z.shape + (m,)
    """
    z = np.asarray(z)
    noise_var = np.asarray(noise_var, dtype=np.float64)
    metrics = np.abs(z[..., None] - c.points) ** 2 / noise_var[..., None]
    masks = c.bit_masks()
    llrs = np.empty(z.shape + (c.order,), dtype=np.float64)
    for j in range(c.order):
        ones, zeros = metrics[..., masks[j]], metrics[..., ~masks[j]]
        if max_log:
            llrs[..., j] = zeros.min(axis=-1) - ones.min(axis=-1)
        else:
            llrs[..., j] = logsumexp(-ones, axis=-1) - logsumexp(-zeros, axis=-1)
    return clip_llrs(llrs, clip_limit)


def llr_to_posterior(llr, observed_bit) -> np.ndarray:
    """
    Posterior probability of the observed bit value given its LLR.

    Returns 1/(1+exp(-L)) for bit 1 and 1/(1+exp(L)) for bit 0.
    """
    sign = 2.0 * np.asarray(observed_bit, dtype=np.float64) - 1.0
    return expit(sign * np.asarray(llr, dtype=np.float64))


def log2_posterior(llr, observed_bit) -> np.ndarray:
    """log2 of llr_to_posterior, evaluated without underflow"""
    sign = 2.0 * np.asarray(observed_bit, dtype=np.float64) - 1.0
    return -np.logaddexp(0.0, -sign * np.asarray(llr, dtype=np.float64)) / _LN2
