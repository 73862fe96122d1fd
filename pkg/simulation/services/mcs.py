"""
Modulation and coding scheme (MCS) tables.

An entry fixes the modulation order m and nominal code rate r. The codeword
length follows from the resource grid: a UE with n_t layers sending one
codeword over n_re REs uses n = n_re * m * n_t coded bits.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from core.csvio import read_csv, write_csv
from core.errors import ConfigurationError, InvalidArgument
from phy.services.coding import parse_rate
from phy.services.modem import SUPPORTED_ORDERS

logger = logging.getLogger(__name__)

MCS_COLUMNS = ['index', 'm', 'r', 'k', 'n']

DEFAULT_RATES = {
    2: ('1/4', '1/3', '1/2', '2/3'),
    4: ('1/2', '3/5', '2/3', '3/4'),
    6: ('2/3', '3/4', '4/5', '5/6'),
}


@dataclass(frozen=True)
class McsEntry:
    index: int
    m: int
    rate: Fraction

    @property
    def se(self) -> Fraction:
        """Spectral efficiency m * r in bits per symbol"""
        return self.m * self.rate

    @property
    def modulation_index(self) -> int:
        """c in m = 2c"""
        return self.m // 2

    def n_for(self, n_re: int, n_t: int = 1) -> int:
        return int(n_re) * self.m * int(n_t)

    def nominal_k(self, n_re: int, n_t: int = 1) -> int:
        return int(self.rate * self.n_for(n_re, n_t))


class McsTable:
    """
    Ordered MCS entries with strictly increasing spectral efficiency.

    The modulation set is {2, 4, ..., 2 k_max}; every order has at least one
    rate. rates_for(m) lists the rates of one order in ascending order.
    """

    def __init__(self, entries):
        entries = sorted(entries, key=lambda e: e.index)
        if not entries:
            raise InvalidArgument("An MCS table needs at least one entry")
        for entry in entries:
            if entry.m not in SUPPORTED_ORDERS:
                raise InvalidArgument(f"MCS {entry.index}: unsupported modulation order {entry.m}")
            if not 0 < entry.rate < 1:
                raise InvalidArgument(f"MCS {entry.index}: rate {entry.rate} outside (0, 1)")
        for previous, entry in zip(entries, entries[1:]):
            if entry.index == previous.index:
                raise InvalidArgument(f"Duplicate MCS index {entry.index}")
            if entry.se <= previous.se:
                raise InvalidArgument(
                    f"MCS {entry.index} (SE {float(entry.se):.4f}) does not exceed "
                    f"MCS {previous.index} (SE {float(previous.se):.4f})"
                )
        modulations = sorted({e.m for e in entries})
        expected = list(range(2, 2 * len(modulations) + 1, 2))
        if modulations != expected:
            raise InvalidArgument(f"Modulation orders must be {expected}, got {modulations}")

        self.entries = tuple(entries)
        self._by_index = {e.index: e for e in entries}
        self._by_pair = {(e.m, e.rate): e for e in entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def modulations(self) -> list:
        return sorted({e.m for e in self.entries})

    @property
    def k_max(self) -> int:
        return len(self.modulations)

    @property
    def r_max(self) -> Fraction:
        return max(e.rate for e in self.entries)

    @property
    def m_max(self) -> int:
        return max(self.modulations)

    @property
    def se_bound(self) -> Fraction:
        """r_max * m_max, the normaliser of the weighted detector choice"""
        return self.r_max * self.m_max

    def rates_for(self, m: int) -> list:
        rates = sorted(e.rate for e in self.entries if e.m == m)
        if not rates:
            raise InvalidArgument(f"MCS table has no entry with m={m}")
        return rates

    def entry(self, m: int, rate) -> McsEntry:
        try:
            return self._by_pair[(int(m), parse_rate(rate))]
        except KeyError:
            raise InvalidArgument(f"MCS table has no entry (m={m}, r={rate})") from None

    def by_index(self, index: int) -> McsEntry:
        try:
            return self._by_index[int(index)]
        except KeyError:
            raise InvalidArgument(f"Unknown MCS index {index}") from None

    @property
    def lowest(self) -> McsEntry:
        return self.entries[0]

    @property
    def highest(self) -> McsEntry:
        return self.entries[-1]

    def codes(self, n_re: int, n_t_values=(1,)) -> list:
        """Every (m, rate, n) this table can produce for the given layer counts"""
        return sorted({
            (e.m, e.rate, e.n_for(n_re, n_t))
            for e in self.entries for n_t in n_t_values
        })

    def to_csv(self, path, n_re: int) -> Path:
        """Columns index,m,r,k,n for a single-layer UE"""
        rows = (
            (e.index, e.m, str(e.rate), e.nominal_k(n_re), e.n_for(n_re))
            for e in self.entries
        )
        return write_csv(path, MCS_COLUMNS, rows, comments=[f"linksim mcs table; n_re={n_re}; n_t=1"])

    @classmethod
    def from_csv(cls, path) -> 'McsTable':
        """Read an index,m,r[,k,n] table; k and n are informative only"""
        _, rows = read_csv(path)
        try:
            entries = [
                McsEntry(index=int(row['index']), m=int(row['m']), rate=parse_rate(row['r']))
                for row in rows
            ]
            return cls(entries)
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"Invalid MCS table {path}: {exc}") from exc


def default_mcs_table() -> McsTable:
    """Twelve entries over QPSK, 16-QAM and 64-QAM"""
    entries = []
    for m, rates in DEFAULT_RATES.items():
        for rate in rates:
            entries.append(McsEntry(index=len(entries) + 1, m=m, rate=parse_rate(rate)))
    return McsTable(entries)
