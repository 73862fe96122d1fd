"""
Bit-metric decoding rate (BMDR).

The BMDR of detector D for UE i on channel H is
    R = max(1 + E[log2 q_D(b | y, H)] / (m_i n_t_i) summed over the UE's bits, 0)
i.e. one plus the average log2 posterior of the transmitted bits, clamped
at zero. Over a set of channels it is the plain mean. BMDR-CER tables map
the AWGN BMDR of a code and modulation to its codeword error rate; the
target BMDR for an error target eps is the smallest tabulated BMDR whose
CER is at most eps.
"""
import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.optimize import isotonic_regression

from core.csvio import read_csv, write_csv
from core.errors import ConfigurationError, InvalidArgument, TargetUnreachable
from phy.services.channel import complex_gaussian
from phy.services.coding import code_id_for, parse_rate
from phy.services.detect import DetectorSpec, lmmse_post_sinr, run_detector
from phy.services.mi_curves import get_mi_curves
from phy.services.modem import build_constellation, log2_posterior, map_bits

logger = logging.getLogger(__name__)

TABLE_FORMAT = 'linksim bmdr-cer table v1'
TABLE_COLUMNS = ['snr_db', 'bmdr', 'cer', 'n_cw', 'n_mi']
TABLE_FILENAME = re.compile(r'bmdr_cer_m(\d+)_r(\d+)-(\d+)_n(\d+)\.csv$')
QPSK = 2


@dataclass(frozen=True, eq=False)
class BmdrEstimate:
    """BMDR per UE with its standard error and the number of samples behind it"""
    value: np.ndarray
    std_err: np.ndarray
    sample_count: int

    def __post_init__(self):
        value = np.atleast_1d(np.asarray(self.value, dtype=np.float64))
        if np.any(value < 0) or np.any(value > 1):
            raise InvalidArgument(f"BMDR values must lie in [0, 1], got {value}")
        object.__setattr__(self, 'value', value)
        object.__setattr__(self, 'std_err', np.atleast_1d(np.asarray(self.std_err, dtype=np.float64)))


# ---------------------------------------------------------------------------
# Monte-Carlo estimation
# ---------------------------------------------------------------------------

def _draw_transmission(h, mods, n_samples: int, rng) -> tuple:
    """Uniform symbols and unit noise on n_samples copies of every RE"""
    bits, symbols = [], []
    for ue, m in zip(h.layout, mods):
        ue_bits = rng.integers(0, 2, size=(n_samples * h.n_re, ue.n_t * m), dtype=np.uint8)
        bits.append(ue_bits)
        symbols.append(map_bits(ue_bits, build_constellation(m)))
    repeated = h.select(np.tile(np.arange(h.n_re), n_samples))
    s = np.concatenate(symbols, axis=1)
    y = np.einsum('erc,ec->er', repeated.h, s) + complex_gaussian(rng, (repeated.n_re, h.n_r))
    return repeated, y, bits


def estimate_bmdr_per_re(d: DetectorSpec, h, mods, n_samples: int, rng) -> tuple:
    """
    Monte-Carlo BMDR of every RE of h.

    Returns:
        (values (n_re, U) clamped at 0, std_err (n_re, U))
    """
    if n_samples < 1:
        raise InvalidArgument(f"n_samples must be >= 1, got {n_samples}")
    if len(mods) != h.num_ue:
        raise InvalidArgument(f"{len(mods)} modulation orders for {h.num_ue} UEs")
    repeated, y, bits = _draw_transmission(h, mods, n_samples, rng)
    output = run_detector(d, y, repeated, [build_constellation(m) for m in mods])

    values = np.empty((h.n_re, h.num_ue))
    std_err = np.empty((h.n_re, h.num_ue))
    for i in range(h.num_ue):
        per_sample = 1.0 + log2_posterior(output.llrs[i], bits[i]).mean(axis=1)
        per_sample = per_sample.reshape(n_samples, h.n_re)
        values[:, i] = np.maximum(per_sample.mean(axis=0), 0.0)
        spread = per_sample.std(axis=0, ddof=1) if n_samples > 1 else np.zeros(h.n_re)
        std_err[:, i] = spread / np.sqrt(n_samples)
    return np.minimum(values, 1.0), std_err


def estimate_bmdr_mc(d: DetectorSpec, h, mods, n_samples: int, rng) -> BmdrEstimate:
    """
    Monte-Carlo BMDR of detector d for every UE, averaged over the REs of h.

    Args:
        d: detector
        h: whitened ChannelRealization (one or more REs)
        mods: modulation order per UE
        n_samples: symbol/noise draws per RE
        rng: numpy Generator

    Returns:
        BmdrEstimate with one value per UE
    """
    values, std_err = estimate_bmdr_per_re(d, h, mods, n_samples, rng)
    return bmdr_of_set(values, std_err=std_err, samples_per_entry=n_samples)


def bmdr_of_set(values, weights=None, std_err=None, samples_per_entry: int = 1) -> BmdrEstimate:
    """
    BMDR over a set of channels: the (weighted) mean of per-channel values.

    Args:
        values: sequence of BmdrEstimate, or array (n,) / (n, U) of per-channel BMDRs
        weights: optional multiplicity of each entry
        std_err: per-entry standard errors when values is an array

    Returns:
        BmdrEstimate
    """
    if isinstance(values, (list, tuple)) and values and isinstance(values[0], BmdrEstimate):
        std_err = np.array([e.std_err for e in values])
        sample_count = sum(e.sample_count for e in values)
        values = np.array([e.value for e in values])
    else:
        values = np.asarray(values, dtype=np.float64)
        sample_count = None
    if values.size == 0 or values.shape[0] == 0:
        raise InvalidArgument("BMDR of an empty channel set is undefined")
    if values.ndim == 1:
        values = values[:, None]
    weights = np.ones(values.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    mean = np.clip((weights[:, None] * values).sum(axis=0) / total, 0.0, 1.0)
    if std_err is None:
        combined = np.zeros(values.shape[1])
    else:
        std_err = np.asarray(std_err, dtype=np.float64).reshape(values.shape)
        combined = np.sqrt((weights[:, None] ** 2 * std_err ** 2).sum(axis=0)) / total
    if sample_count is None:
        sample_count = int(values.shape[0] * samples_per_entry)
    return BmdrEstimate(value=mean, std_err=combined, sample_count=sample_count)


# ---------------------------------------------------------------------------
# Predictors
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BmdrPredictor:
    """
    BMDR predictor bound to one detector.

    mi_table: LMMSE post-equalization SINR per stream mapped through the
    AWGN bit-MI curve I_m / m (linear detectors only).
    monte_carlo: estimate_bmdr_mc with n_samples draws per RE.
    """
    kind: str
    detector: DetectorSpec
    n_samples: int = 64
    curves: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ('mi_table', 'monte_carlo'):
            raise InvalidArgument(f"Unknown predictor kind {self.kind!r}")
        if self.kind == 'mi_table' and not self.detector.is_linear:
            raise InvalidArgument(f"mi_table predictor needs a linear detector, got {self.detector.name}")
        if self.n_samples < 1:
            raise InvalidArgument(f"n_samples must be >= 1, got {self.n_samples}")

    @property
    def separable(self) -> bool:
        """True when a UE's prediction ignores the other UEs' modulation orders"""
        return self.kind == 'mi_table'

    def mi_curves(self):
        return self.curves if self.curves is not None else get_mi_curves()


def predict_bmdr_per_re(p: BmdrPredictor, mods, h, rng=None) -> np.ndarray:
    """Predicted BMDR of every RE and UE, shape (n_re, U)"""
    mods = [int(m) for m in mods]
    if len(mods) != h.num_ue:
        raise InvalidArgument(f"{len(mods)} modulation orders for {h.num_ue} UEs")
    if p.kind == 'monte_carlo':
        if rng is None:
            raise InvalidArgument("monte_carlo predictor needs a random generator")
        values, _ = estimate_bmdr_per_re(p.detector, h, mods, p.n_samples, rng)
        return values

    curves = p.mi_curves()
    sinr = lmmse_post_sinr(h)
    values = np.empty((h.n_re, h.num_ue))
    for i, (ue, m) in enumerate(zip(h.layout, mods)):
        values[:, i] = curves.bmdr(m, sinr[:, ue.columns]).mean(axis=1)
    return np.clip(values, 0.0, 1.0)


def predict_bmdr(p: BmdrPredictor, mods, h, rng=None, weights=None) -> BmdrEstimate:
    """
    Predicted BMDR per UE over the REs of h.

    Args:
        p: predictor
        mods: modulation order per UE
        h: whitened ChannelRealization
        rng: generator, required by the monte_carlo kind
        weights: optional RE multiplicities (e.g. REs per subband)

    Returns:
        BmdrEstimate
    """
    values = predict_bmdr_per_re(p, mods, h, rng)
    samples = p.n_samples if p.kind == 'monte_carlo' else 1
    return bmdr_of_set(values, weights=weights, samples_per_entry=samples)


# ---------------------------------------------------------------------------
# BMDR-CER tables
# ---------------------------------------------------------------------------

def table_filename(m: int, rate: Fraction, n: int) -> str:
    return f"bmdr_cer_m{m}_r{rate.numerator}-{rate.denominator}_n{n}.csv"


@dataclass(frozen=True, eq=False)
class BmdrCerTable:
    """
    (SNR, BMDR, CER) rows of one code and modulation, sorted by BMDR.

    cleaned_cer is the non-increasing (in BMDR) isotonic fit of the raw
    CERs weighted by codeword counts; queries use the cleaned values.
    """
    code_id: str
    rate: Fraction
    n: int
    m: int
    snr_db: np.ndarray
    bmdr: np.ndarray
    cer: np.ndarray
    n_cw: np.ndarray
    n_mi: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, name), dtype=np.float64) for name in TABLE_COLUMNS]
        lengths = {a.size for a in arrays}
        if len(lengths) != 1 or 0 in lengths:
            raise InvalidArgument(f"Table {self.code_id} m={self.m} needs equally long, non-empty columns")
        if np.any(arrays[2] < 0) or np.any(arrays[2] > 1):
            raise InvalidArgument("CER values must lie in [0, 1]")
        order = np.lexsort((arrays[0], arrays[1]))
        for name, array in zip(TABLE_COLUMNS, arrays):
            object.__setattr__(self, name, array[order])
        object.__setattr__(self, 'rate', parse_rate(self.rate))

    @classmethod
    def from_rows(cls, rate, n: int, m: int, rows) -> 'BmdrCerTable':
        """rows: iterable of (snr_db, bmdr, cer, n_cw, n_mi)"""
        rate = parse_rate(rate)
        columns = np.array(list(rows), dtype=np.float64).reshape(-1, len(TABLE_COLUMNS)).T
        return cls(code_id_for(rate, n), rate, n, m, *columns)

    @property
    def size(self) -> int:
        return self.bmdr.size

    @property
    def filename(self) -> str:
        return table_filename(self.m, self.rate, self.n)

    @staticmethod
    def _non_increasing(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
        if np.all(np.diff(values) <= 0):
            return values
        return isotonic_regression(values, weights=np.maximum(weights, 1.0), increasing=False).x

    def cleaned_cer(self) -> np.ndarray:
        return self._non_increasing(self.cer, self.n_cw)

    def target(self, eps: float) -> float:
        """min{BMDR | cleaned CER <= eps}"""
        if not 0 < eps < 1:
            raise InvalidArgument(f"Target CER must lie in (0, 1), got {eps}")
        meets = np.flatnonzero(self.cleaned_cer() <= eps)
        if meets.size == 0:
            raise TargetUnreachable(
                f"No row of {self.code_id} m={self.m} reaches CER <= {eps:g}",
                query=(self.m, self.rate, self.n, eps),
            )
        return float(self.bmdr[meets[0]])

    def _by_snr(self) -> tuple:
        order = np.argsort(self.snr_db, kind='stable')
        snr = self.snr_db[order]
        return snr, self._non_increasing(self.cer[order], self.n_cw[order])

    def snr_threshold(self, eps: float) -> float:
        """Lowest SNR (dB) whose cleaned CER is at most eps"""
        snr, cer = self._by_snr()
        meets = np.flatnonzero(cer <= eps)
        if meets.size == 0:
            raise TargetUnreachable(
                f"No SNR of {self.code_id} m={self.m} reaches CER <= {eps:g}",
                query=(self.m, self.rate, self.n, eps),
            )
        return float(snr[meets[0]])

    def cer_at_snr(self, snr_db: float, log_interp: bool = False) -> float:
        """CER at an SNR: nearest row (ties to the lower SNR), or log-domain interpolation"""
        snr, cer = self._by_snr()
        if log_interp:
            floor = 0.5 / max(float(self.n_cw.max()), 1.0)
            return float(np.clip(10.0 ** np.interp(snr_db, snr, np.log10(np.maximum(cer, floor))), 0.0, 1.0))
        distance = np.abs(snr - snr_db)
        return float(cer[int(np.argmin(distance))])

    def to_csv(self, directory) -> Path:
        rows = zip(self.snr_db, self.bmdr, self.cer, self.n_cw.astype(int), self.n_mi.astype(int))
        comment = f"{TABLE_FORMAT}; code={self.code_id}; m={self.m}; rate={self.rate}; n={self.n}"
        return write_csv(Path(directory) / self.filename, TABLE_COLUMNS, rows, comments=[comment])

    @classmethod
    def from_csv(cls, path) -> 'BmdrCerTable':
        path = Path(path)
        comments, rows = read_csv(path)
        if not comments or not comments[0].startswith(TABLE_FORMAT):
            raise ConfigurationError(f"{path} is not a {TABLE_FORMAT} file")
        fields = dict(
            part.strip().split('=', 1) for part in comments[0].split(';')[1:] if '=' in part
        )
        try:
            return cls.from_rows(
                fields['rate'], int(fields['n']), int(fields['m']),
                [[float(row[name]) for name in TABLE_COLUMNS] for row in rows],
            )
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"Malformed BMDR-CER table {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Table store and target BMDR
# ---------------------------------------------------------------------------

@dataclass
class TableLookup:
    """Result of a table query and how it was resolved"""
    value: object
    nearest_n: bool = False
    interpolated: bool = False
    qpsk_fallback: bool = False

    @property
    def flags(self) -> list:
        return [name for name in ('nearest_n', 'interpolated', 'qpsk_fallback') if getattr(self, name)]


class TableStore:
    """
    BMDR-CER tables keyed by (m, rate, n).

    Tables of other modulation orders fall back to the QPSK table of the
    same code; lengths without a table are interpolated in 1/n between
    the bracketing lengths, or take the nearest length (flagged).
    """

    def __init__(self, tables=()):
        self._tables = {}
        for table in tables:
            self.add(table)

    @classmethod
    def from_directory(cls, directory) -> 'TableStore':
        directory = Path(directory)
        store = cls()
        if not directory.exists():
            return store
        for path in sorted(directory.iterdir()):
            if TABLE_FILENAME.search(path.name):
                store.add(BmdrCerTable.from_csv(path))
        logger.debug("Loaded %d BMDR-CER tables from %s", len(store), directory)
        return store

    def __len__(self) -> int:
        return len(self._tables)

    def add(self, table: BmdrCerTable):
        self._tables[(table.m, table.rate, table.n)] = table

    def get(self, m: int, rate, n: int):
        return self._tables.get((m, parse_rate(rate), int(n)))

    def lengths(self, m: int, rate) -> list:
        rate = parse_rate(rate)
        return sorted(n for (mm, r, n) in self._tables if mm == m and r == rate)

    def _modulation_for(self, m: int, rate) -> tuple:
        if self.lengths(m, rate):
            return m, False
        if m != QPSK and self.lengths(QPSK, rate):
            return QPSK, True
        raise ConfigurationError(
            f"No BMDR-CER table for rate {parse_rate(rate)} (m={m}); "
            f"build one with python manage.py build_table"
        )

    def table_for(self, m: int, rate, n: int) -> TableLookup:
        """Exact table, else nearest length; QPSK stands in for missing orders"""
        used_m, fallback = self._modulation_for(m, rate)
        lengths = self.lengths(used_m, rate)
        nearest = min(lengths, key=lambda length: (abs(length - n), length))
        if nearest != n:
            logger.debug("No table for m=%d rate=%s n=%d; using n=%d", m, rate, n, nearest)
        return TableLookup(
            value=self.get(used_m, rate, nearest),
            nearest_n=nearest != n,
            qpsk_fallback=fallback,
        )

    def covers(self, m: int, rate, n: int) -> bool:
        """True when an exact or bracketing pair of tables exists"""
        try:
            used_m, _ = self._modulation_for(m, rate)
        except ConfigurationError:
            return False
        lengths = self.lengths(used_m, rate)
        return n in lengths or (lengths[0] < n < lengths[-1])

    def target(self, m: int, rate, n: int, eps: float) -> TableLookup:
        """Target BMDR with 1/n interpolation between bracketing lengths"""
        used_m, fallback = self._modulation_for(m, rate)
        lengths = self.lengths(used_m, rate)
        if n in lengths:
            return TableLookup(self.get(used_m, rate, n).target(eps), qpsk_fallback=fallback)
        below = [length for length in lengths if length < n]
        above = [length for length in lengths if length > n]
        if below and above:
            n1, n2 = below[-1], above[0]
            t1 = self.get(used_m, rate, n1).target(eps)
            t2 = self.get(used_m, rate, n2).target(eps)
            weight = (1.0 / n - 1.0 / n1) / (1.0 / n2 - 1.0 / n1)
            return TableLookup(t1 + weight * (t2 - t1), interpolated=True, qpsk_fallback=fallback)
        nearest = (below or above)[-1 if below else 0]
        return TableLookup(self.get(used_m, rate, nearest).target(eps), nearest_n=True, qpsk_fallback=fallback)


def target_bmdr(tables: TableStore, m: int, r, n: int, eps: float) -> float:
    """Target BMDR for modulation m, code C(r, n) and CER target eps"""
    return tables.target(m, r, n, eps).value
