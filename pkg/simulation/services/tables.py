"""
BMDR-CER table construction.

For every SNR of the grid the coded SISO-AWGN chain (encode, 2^m-QAM,
AWGN, ML demapping, min-sum decoding) gives the codeword error rate, and a
separate Monte-Carlo run of the ML detector on the same channel gives the
BMDR. Each SNR point is an independent task with its own named random
streams, so tables do not depend on the number of workers.
"""
import logging
from pathlib import Path

import numpy as np

from core.errors import ConfigurationError, InvalidArgument
from core.parallel import ordered_map
from core.rng import stream
from phy.services.bmdr import BmdrCerTable, TableStore, estimate_bmdr_mc
from phy.services.channel import assemble, complex_gaussian
from phy.services.coding import decode_batch, encode, get_code
from phy.services.detect import DetectorSpec
from phy.services.mi_curves import awgn_capacity_snr
from phy.services.modem import build_constellation, demap_scalar, map_bits

logger = logging.getLogger(__name__)

MLD = DetectorSpec(kind='mld')


def awgn_codeword_errors(code, m: int, snr_db: float, n_codewords: int, rng, batch_size: int = 200) -> int:
    """
    Count codeword errors of the coded SISO-AWGN chain.

    A codeword counts as an error when the decoder stops without a valid
    codeword or returns a message different from the one sent.
    """
    if code.n % m:
        raise InvalidArgument(f"Codeword length {code.n} is not a multiple of m={m}")
    constellation = build_constellation(m)
    snr = 10.0 ** (snr_db / 10.0)
    errors = 0
    remaining = n_codewords
    while remaining > 0:
        batch = min(batch_size, remaining)
        remaining -= batch
        msg = rng.integers(0, 2, size=(batch, code.k), dtype=np.uint8)
        symbols = map_bits(encode(msg, code), constellation)
        received = symbols + complex_gaussian(rng, symbols.shape, variance=1.0 / snr)
        llrs = demap_scalar(received, 1.0 / snr, constellation).reshape(batch, code.n)
        msg_hat, success = decode_batch(llrs, code)
        errors += int(np.sum(~success | np.any(msg_hat != msg, axis=1)))
    return errors


def awgn_bmdr(m: int, snr_db: float, n_samples: int, rng):
    """Monte-Carlo BMDR of the ML detector on a SISO-AWGN channel"""
    siso = assemble([np.ones((1, 1, 1), dtype=np.complex128)], [10.0 ** (snr_db / 10.0)])
    return estimate_bmdr_mc(MLD, siso, [m], n_samples, rng)


def _table_point(task) -> tuple:
    """One (snr_db, bmdr, cer, n_cw, n_mi) row; top-level so worker processes can run it"""
    rate, n, m, snr_db, cw_budget, mi_budget, batch_size, seed = task
    code = get_code(rate, n)
    key = ('table', code.code_id, m, f"{snr_db:.4f}")
    errors = awgn_codeword_errors(code, m, snr_db, cw_budget, stream(seed, *key, 'cer'), batch_size)
    estimate = awgn_bmdr(m, snr_db, mi_budget, stream(seed, *key, 'bmdr'))
    cer = errors / cw_budget
    logger.info(
        "%s m=%d SNR %.2f dB: CER %.3e (%d/%d), BMDR %.4f",
        code.code_id, m, snr_db, cer, errors, cw_budget, estimate.value[0],
    )
    return (snr_db, float(estimate.value[0]), cer, cw_budget, mi_budget)


def build_awgn_table(code, m: int, snr_grid, cw_budget: int, mi_budget: int, seed: int,
                     workers: int = 1, batch_size: int = 200) -> BmdrCerTable:
    """
    Map AWGN BMDR to CER for one code and modulation.

    Args:
        code: CodeSpec (its rate and n identify the table)
        m: modulation order
        snr_grid: SNR values in dB
        cw_budget: codewords per SNR point
        mi_budget: symbol/noise draws for the BMDR per SNR point
        seed: master seed
        workers: processes for the SNR points

    Returns:
        BmdrCerTable with one row per SNR
    """
    snr_grid = [float(s) for s in np.atleast_1d(snr_grid)]
    if not snr_grid:
        raise InvalidArgument("The SNR grid must not be empty")
    if cw_budget < 1 or mi_budget < 1:
        raise InvalidArgument(f"Budgets must be >= 1, got cw={cw_budget}, mi={mi_budget}")
    tasks = [(code.rate, code.n, m, snr, cw_budget, mi_budget, batch_size, seed) for snr in snr_grid]
    rows = ordered_map(_table_point, tasks, workers)
    return BmdrCerTable.from_rows(code.rate, code.n, m, rows)


def snr_grid_for(job, rate, m: int) -> np.ndarray:
    """The job's SNR grid for one code, centred on its AWGN capacity SNR when not explicit"""
    capacity_db = 10.0 * np.log10(awgn_capacity_snr(m, rate))
    return job.snr_grid.for_capacity(capacity_db)


def run_table_job(job, out_dir=None, workers: int = 1) -> list:
    """
    Build every (code, modulation) table of a TableJob.

    All SNR points of all tables go through one ordered map.

    Returns:
        list of written CSV paths
    """
    out_dir = Path(out_dir) if out_dir is not None else job.table_dir
    plan = []
    tasks = []
    for rate, n in job.codes:
        code = get_code(rate, n)
        for m in job.modulations:
            if code.n % m:
                raise InvalidArgument(f"{code.code_id}: n={n} is not a multiple of m={m}")
            grid = snr_grid_for(job, rate, m)
            plan.append((code, m, len(grid)))
            tasks.extend(
                (code.rate, code.n, m, float(snr), job.cw_budget, job.mi_budget, job.batch_size, job.seed)
                for snr in grid
            )
    logger.info("Building %d tables (%d SNR points) into %s", len(plan), len(tasks), out_dir)
    rows = ordered_map(_table_point, tasks, workers)

    paths = []
    offset = 0
    for code, m, count in plan:
        table = BmdrCerTable.from_rows(code.rate, code.n, m, rows[offset:offset + count])
        offset += count
        paths.append(table.to_csv(out_dir))
    return paths


def check_tables(store: TableStore, mcs_table, n_re: int, n_t_values, scenario_path=None) -> list:
    """
    Resolve every (m, rate, n) the MCS table can produce against the store.

    Returns:
        list of (m, rate, n, flags) for combinations served by a fallback

    Raises:
        ConfigurationError naming the build command when a rate has no table
    """
    fallbacks = []
    for m, rate, n in mcs_table.codes(n_re, sorted(set(n_t_values))):
        try:
            lookup = store.table_for(m, rate, n)
        except ConfigurationError as exc:
            target = scenario_path or 'scenarios/awgn.json'
            raise ConfigurationError(
                f"Missing BMDR-CER table for m={m}, rate {rate}, n={n}; "
                f"run python manage.py build_table --config {target}"
            ) from exc
        if lookup.nearest_n and not store.covers(m, rate, n):
            fallbacks.append((m, rate, n, lookup.flags))
    for m, rate, n, flags in fallbacks:
        logger.warning("Table for m=%d rate %s n=%d resolved with %s", m, rate, n, ','.join(flags))
    return fallbacks
