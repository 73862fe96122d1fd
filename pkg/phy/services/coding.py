"""
LDPC channel coding, CRC-24 and code-block segmentation.

Codes are quasi-cyclic LDPC codes lifted from an all-column-weight-3
protograph; lengths that do not divide the protograph fall back to a
progressive-edge-growth construction with the same column weight. A code
for a given (rate, n) is always built the same way, so every process sees
the same parity-check matrix.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import ceil
from pathlib import Path

import numpy as np
from django.conf import settings
from scipy import sparse

from core.errors import ConfigurationError, InvalidArgument
from core.rng import stream
from phy.services.alist import read_alist

logger = logging.getLogger(__name__)

CRC24_POLY = 0x864CFB
COLUMN_WEIGHT = 3
SUPPORTED_CRC_BITS = (0, 24)
CODE_SEED = 20240611

# Sign-preserving stand-in for "no message" on padded check-node slots
_PAD_MAGNITUDE = 1e9


def get_decoder_iterations() -> int:
    return int(settings.LINKSIM_DECODER_ITERATIONS)


def get_min_sum_scale() -> float:
    return float(settings.LINKSIM_MIN_SUM_SCALE)


def get_crc_bits() -> int:
    """CRC length per code block; 24, or 0 to disable the CRC"""
    crc_bits = int(settings.LINKSIM_CRC_BITS)
    if crc_bits not in SUPPORTED_CRC_BITS:
        raise ConfigurationError(f"LINKSIM_CRC_BITS must be 0 or 24, got {crc_bits}")
    return crc_bits


def parse_rate(rate) -> Fraction:
    """Accept Fraction, 'p/q' strings, ints or floats (limited to small denominators)"""
    if isinstance(rate, float):
        value = Fraction(rate).limit_denominator(64)
    else:
        try:
            value = Fraction(rate)
        except (TypeError, ValueError) as exc:
            raise InvalidArgument(f"Unparseable code rate {rate!r}") from exc
    if not 0 < value < 1:
        raise InvalidArgument(f"Code rate must lie in (0, 1), got {value}")
    return value


def code_id_for(rate: Fraction, n: int) -> str:
    return f"r{rate.numerator}-{rate.denominator}_n{n}"


@dataclass(frozen=True, eq=False)
class CodeSpec:
    """
    A binary linear code C(r, n) with its decoder graph.

    parity_check holds only linearly independent rows, so k = n - rows.
    A codeword has the message on info_positions and parity_map @ msg on
    parity_positions.
    """
    code_id: str
    rate: Fraction
    n: int
    k: int
    parity_check: sparse.csr_matrix
    info_positions: np.ndarray
    parity_positions: np.ndarray
    parity_map: np.ndarray = field(repr=False)

    @property
    def exact_rate(self) -> float:
        return self.k / self.n

    @property
    def num_checks(self) -> int:
        return self.parity_check.shape[0]

    def is_codeword(self, bits) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        syndrome = (self.parity_check @ bits.T) % 2
        return ~np.any(syndrome, axis=0)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def protograph_shape(rate: Fraction) -> tuple:
    """(rows, cols) of the base matrix for rate p/q: ((q-p)t, qt), t smallest with (q-p)t >= 3"""
    redundancy = rate.denominator - rate.numerator
    t = ceil(COLUMN_WEIGHT / redundancy)
    return redundancy * t, rate.denominator * t


def _protograph_rows(base_rows: int, base_cols: int) -> list:
    """Rows of the three ones in each base column, spread round-robin"""
    return [
        [(COLUMN_WEIGHT * col + i) % base_rows for i in range(COLUMN_WEIGHT)]
        for col in range(base_cols)
    ]


def _qc_parity_check(base_rows: int, base_cols: int, lifting: int, rng) -> sparse.csr_matrix:
    """Lift the protograph with circulant shifts chosen to avoid length-4 cycles"""
    shifts = {}
    placements = _protograph_rows(base_rows, base_cols)
    for col, rows in enumerate(placements):
        for row in rows:
            for _ in range(64):
                candidate = int(rng.integers(lifting))
                if not _closes_four_cycle(shifts, row, col, candidate, lifting):
                    break
            shifts[(row, col)] = candidate

    row_idx, col_idx = [], []
    offsets = np.arange(lifting)
    for (row, col), shift in shifts.items():
        row_idx.append(row * lifting + offsets)
        col_idx.append(col * lifting + (offsets + shift) % lifting)
    rows = np.concatenate(row_idx)
    cols = np.concatenate(col_idx)
    data = np.ones(rows.size, dtype=np.uint8)
    return sparse.csr_matrix((data, (rows, cols)), shape=(base_rows * lifting, base_cols * lifting))


def _closes_four_cycle(shifts: dict, row: int, col: int, shift: int, lifting: int) -> bool:
    for (r2, c2), s_r2c2 in shifts.items():
        if r2 == row or c2 == col:
            continue
        s_row_c2 = shifts.get((row, c2))
        s_r2_col = shifts.get((r2, col))
        if s_row_c2 is None or s_r2_col is None:
            continue
        if (shift - s_row_c2 + s_r2c2 - s_r2_col) % lifting == 0:
            return True
    return False


def _peg_parity_check(n: int, num_checks: int, rng) -> sparse.csr_matrix:
    """Column-weight-3 graph grown edge by edge, avoiding length-4 cycles when possible"""
    if num_checks < COLUMN_WEIGHT:
        raise InvalidArgument(f"PEG construction needs at least {COLUMN_WEIGHT} checks, got {num_checks}")
    check_vars = [set() for _ in range(num_checks)]
    var_checks = []
    degree = np.zeros(num_checks, dtype=np.int64)
    # random tie-breaking between equal-degree checks
    jitter = rng.random(num_checks)
    for var in range(n):
        chosen = []
        forbidden = np.zeros(num_checks, dtype=bool)
        for _ in range(COLUMN_WEIGHT):
            allowed = ~forbidden
            allowed[chosen] = False
            if not allowed.any():
                allowed = np.ones(num_checks, dtype=bool)
                allowed[chosen] = False
            score = np.where(allowed, degree + jitter, np.inf)
            check = int(np.argmin(score))
            chosen.append(check)
            for other in check_vars[check]:
                forbidden[list(var_checks[other])] = True
        for check in chosen:
            check_vars[check].add(var)
            degree[check] += 1
        var_checks.append(set(chosen))
        jitter = rng.random(num_checks)

    rows = np.concatenate([list(checks) for checks in var_checks])
    cols = np.repeat(np.arange(n), COLUMN_WEIGHT)
    data = np.ones(rows.size, dtype=np.uint8)
    return sparse.csr_matrix((data, (rows, cols)), shape=(num_checks, n))


def gf2_row_reduce(matrix) -> tuple:
    """
    Reduced row echelon form over GF(2).

    Args:
        matrix: dense or sparse 0/1 matrix (rows, n)

    Returns:
        (rref, pivot_columns, independent_rows): rref is uint8 (rank, n);
        independent_rows are indices of original rows spanning the row space
    """
    dense = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)
    dense = (dense % 2).astype(np.uint8)
    num_rows, n = dense.shape
    packed = np.packbits(dense, axis=1, bitorder='little')
    words = -(-packed.shape[1] // 8)
    padded = np.zeros((num_rows, words * 8), dtype=np.uint8)
    padded[:, :packed.shape[1]] = packed
    rows = padded.view('<u8').copy()
    origin = np.arange(num_rows)

    pivots = []
    rank = 0
    for col in range(n):
        if rank == num_rows:
            break
        word, bit = divmod(col, 64)
        bit = np.uint64(bit)
        column = (rows[rank:, word] >> bit) & np.uint64(1)
        hits = np.flatnonzero(column)
        if hits.size == 0:
            continue
        pivot = rank + hits[0]
        if pivot != rank:
            rows[[rank, pivot]] = rows[[pivot, rank]]
            origin[[rank, pivot]] = origin[[pivot, rank]]
        mask = ((rows[:, word] >> bit) & np.uint64(1)).astype(bool)
        mask[rank] = False
        rows[mask] ^= rows[rank]
        pivots.append(col)
        rank += 1

    reduced = np.unpackbits(
        rows[:rank].view(np.uint8), axis=1, count=n, bitorder='little'
    )
    return reduced, np.array(pivots, dtype=np.int64), np.sort(origin[:rank])


def code_from_parity_check(parity_check, rate, code_id: str = None) -> CodeSpec:
    """
    Wrap an arbitrary parity-check matrix as a CodeSpec.

    Dependent rows are dropped, then the RREF gives the systematic encoder.
    """
    parity_check = sparse.csr_matrix(parity_check, dtype=np.uint8)
    n = parity_check.shape[1]
    rate = parse_rate(rate)
    reduced, pivots, independent = gf2_row_reduce(parity_check)
    info_positions = np.setdiff1d(np.arange(n), pivots)
    parity_map = reduced[:, info_positions].T.astype(np.float32)
    for array in (info_positions, pivots, parity_map):
        array.setflags(write=False)
    return CodeSpec(
        code_id=code_id or code_id_for(rate, n),
        rate=rate,
        n=n,
        k=info_positions.size,
        parity_check=parity_check[independent],
        info_positions=info_positions,
        parity_positions=pivots,
        parity_map=parity_map,
    )


def build_code(rate, n: int) -> CodeSpec:
    """
    Construct the QC-LDPC code of nominal rate and length n.

    Args:
        rate: nominal rate p/q
        n: codeword length

    Returns:
        CodeSpec; k = n - rank(H) is at least the nominal r*n
    """
    rate = parse_rate(rate)
    if n <= 0:
        raise InvalidArgument(f"Codeword length must be positive, got {n}")
    rng = stream(CODE_SEED, 'code', str(rate), n)
    base_rows, base_cols = protograph_shape(rate)
    if n % base_cols == 0 and n // base_cols >= 2 * COLUMN_WEIGHT:
        lifting = n // base_cols
        parity_check = _qc_parity_check(base_rows, base_cols, lifting, rng)
        construction = f"qc protograph {base_rows}x{base_cols}, lifting {lifting}"
    else:
        num_checks = n - int(rate * n)
        parity_check = _peg_parity_check(n, num_checks, rng)
        construction = f"peg {num_checks}x{n}"

    code = code_from_parity_check(parity_check, rate)
    logger.debug("Built %s (%s): k=%d, exact rate %.4f", code.code_id, construction, code.k, code.exact_rate)
    return code


def get_code_dir() -> Path:
    return Path(settings.LINKSIM_CODE_DIR)


@lru_cache(maxsize=128)
def _cached_code(rate: Fraction, n: int) -> CodeSpec:
    code_id = code_id_for(rate, n)
    alist_path = get_code_dir() / f"{code_id}.alist"
    if alist_path.exists():
        logger.info("Loading %s from %s", code_id, alist_path)
        parity_check = read_alist(alist_path)
        if parity_check.shape[1] != n:
            raise ConfigurationError(
                f"{alist_path} has {parity_check.shape[1]} columns, expected {n}"
            )
        return code_from_parity_check(parity_check, rate, code_id)
    return build_code(rate, n)


def get_code(rate, n: int) -> CodeSpec:
    """
    Code registry: an alist file in LINKSIM_CODE_DIR named after the code id
    takes precedence over the built-in construction. Results are cached.
    """
    return _cached_code(parse_rate(rate), int(n))


# ---------------------------------------------------------------------------
# Encoding and decoding
# ---------------------------------------------------------------------------

def encode(msg, code: CodeSpec) -> np.ndarray:
    """
    Systematic encoding.

    Args:
        msg: k message bits, or a (batch, k) array
        code: CodeSpec

    Returns:
        uint8 codeword(s) with the same leading shape as msg
    """
    msg = np.asarray(msg)
    if msg.shape[-1] != code.k:
        raise InvalidArgument(f"Message length {msg.shape[-1]} does not match k={code.k} of {code.code_id}")
    batch = msg.reshape(-1, code.k).astype(np.float32)
    codewords = np.empty((batch.shape[0], code.n), dtype=np.uint8)
    codewords[:, code.info_positions] = batch
    codewords[:, code.parity_positions] = np.remainder(batch @ code.parity_map, 2)
    return codewords.reshape(msg.shape[:-1] + (code.n,))


@dataclass(frozen=True, eq=False)
class _DecoderGraph:
    variables: np.ndarray      # (checks, max_degree) variable index per check slot
    valid: np.ndarray          # (checks, max_degree) mask of real edges
    edge_to_var: sparse.csr_matrix


@lru_cache(maxsize=128)
def _decoder_graph(code: CodeSpec) -> _DecoderGraph:
    parity_check = code.parity_check.tocsr()
    degrees = np.diff(parity_check.indptr)
    max_degree = int(degrees.max())
    num_checks = parity_check.shape[0]
    variables = np.zeros((num_checks, max_degree), dtype=np.int64)
    valid = np.arange(max_degree)[None, :] < degrees[:, None]
    variables[valid] = parity_check.indices
    num_edges = parity_check.indices.size
    edge_to_var = sparse.csr_matrix(
        (np.ones(num_edges), (np.arange(num_edges), parity_check.indices)),
        shape=(num_edges, code.n),
    )
    return _DecoderGraph(variables=variables, valid=valid, edge_to_var=edge_to_var)


def _parity_ok(posterior: np.ndarray, graph: _DecoderGraph) -> tuple:
    """Hard decisions and success flags; a zero posterior is an erasure and fails"""
    hard = (posterior < 0).astype(np.uint8)
    checks = hard[:, graph.variables] & graph.valid
    satisfied = ~np.any(checks.sum(axis=2) % 2, axis=1)
    return hard, satisfied & ~np.any(posterior == 0, axis=1)


def decode_batch(llrs, code: CodeSpec, max_iters: int = None, scale: float = None) -> tuple:
    """
    Normalized min-sum decoding of a batch of codewords.

    Args:
        llrs: (batch, n) LLRs, convention log(P[b=1]/P[b=0])
        code: CodeSpec
        max_iters: iteration limit, defaults to LINKSIM_DECODER_ITERATIONS
        scale: check-node normalization, defaults to LINKSIM_MIN_SUM_SCALE

    Returns:
        (msg_hat (batch, k) uint8, success (batch,) bool)
    """
    max_iters = get_decoder_iterations() if max_iters is None else int(max_iters)
    scale = get_min_sum_scale() if scale is None else float(scale)
    if max_iters < 1:
        raise InvalidArgument(f"max_iters must be >= 1, got {max_iters}")
    llrs = np.atleast_2d(np.asarray(llrs, dtype=np.float64))
    if llrs.shape[1] != code.n:
        raise InvalidArgument(f"LLR length {llrs.shape[1]} does not match n={code.n} of {code.code_id}")
    if not np.all(np.isfinite(llrs)):
        raise InvalidArgument("Decoder input contains non-finite LLRs")

    graph = _decoder_graph(code)
    # internal messages use log(P0/P1)
    channel = -llrs
    batch = channel.shape[0]
    decided, success = _parity_ok(channel, graph)

    active = np.flatnonzero(~success)
    check_to_var = np.zeros((active.size,) + graph.variables.shape)
    total = channel[active]
    slot_positions = np.arange(graph.variables.shape[1])

    for _ in range(max_iters):
        if active.size == 0:
            break
        var_to_check = total[:, graph.variables] - check_to_var
        var_to_check[:, ~graph.valid] = _PAD_MAGNITUDE
        signs = np.where(var_to_check < 0, -1.0, 1.0)
        magnitudes = np.abs(var_to_check)
        two_smallest = np.partition(magnitudes, 1, axis=2)[..., :2]
        first = np.argmin(magnitudes, axis=2)
        excluded_min = np.where(
            slot_positions[None, None, :] == first[..., None],
            two_smallest[..., 1:2],
            two_smallest[..., 0:1],
        )
        sign_product = np.prod(signs, axis=2, keepdims=True)
        check_to_var = scale * sign_product * signs * excluded_min
        check_to_var[:, ~graph.valid] = 0.0

        edges = check_to_var[:, graph.valid]
        total = channel[active] + (graph.edge_to_var.T @ edges.T).T

        hard_active, done = _parity_ok(total, graph)
        finished = active[done]
        decided[finished] = hard_active[done]
        success[finished] = True
        decided[active[~done]] = hard_active[~done]

        keep = ~done
        active = active[keep]
        check_to_var = check_to_var[keep]
        total = total[keep]

    logger.debug("Decoded %d codewords of %s: %d parity-satisfied", batch, code.code_id, int(success.sum()))
    return decided[:, code.info_positions], success


def decode(llrs, code: CodeSpec, max_iters: int = None) -> tuple:
    """Decode a single codeword; returns (msg_hat, success)"""
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.ndim != 1:
        raise InvalidArgument("decode expects a single LLR vector; use decode_batch for batches")
    msg_hat, success = decode_batch(llrs[None, :], code, max_iters)
    return msg_hat[0], bool(success[0])


# ---------------------------------------------------------------------------
# CRC and segmentation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _crc24_matrix(length: int) -> np.ndarray:
    """(length, 24) generator: CRC of a message is bits @ matrix mod 2"""
    matrix = np.empty((length, 24), dtype=np.float32)
    full_poly = (1 << 24) | CRC24_POLY
    remainder = CRC24_POLY
    shifts = np.arange(23, -1, -1)
    for position in range(length - 1, -1, -1):
        matrix[position] = (remainder >> shifts) & 1
        remainder <<= 1
        if remainder & (1 << 24):
            remainder ^= full_poly
    matrix.setflags(write=False)
    return matrix


def crc24(bits) -> np.ndarray:
    bits = np.asarray(bits)
    return np.remainder(bits.astype(np.float32) @ _crc24_matrix(bits.shape[-1]), 2).astype(np.uint8)


def crc24_attach(bits) -> np.ndarray:
    """Append the 24-bit CRC (zero initial value, no final xor) along the last axis"""
    bits = np.asarray(bits, dtype=np.uint8)
    return np.concatenate([bits, crc24(bits)], axis=-1)


def crc24_check(bits) -> np.ndarray:
    """True where the trailing 24 bits match the CRC of the preceding bits"""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] <= 24:
        raise InvalidArgument("CRC check needs more than 24 bits")
    return np.all(crc24(bits[..., :-24]) == bits[..., -24:], axis=-1)


@dataclass(frozen=True)
class SegmentLayout:
    payload_bits: int
    num_blocks: int
    block_payload_bits: int
    crc_bits: int

    @property
    def block_bits(self) -> int:
        """Message length k of every code block, CRC included"""
        return self.block_payload_bits + self.crc_bits

    @property
    def padding_bits(self) -> int:
        return self.num_blocks * self.block_payload_bits - self.payload_bits


@dataclass(frozen=True, eq=False)
class TransportBlock:
    tb_index: int
    layout: SegmentLayout
    code_blocks: list


def segment(tb_payload_bits: int, max_cb_bits: int, crc_bits: int) -> SegmentLayout:
    """
    Split a transport-block payload into near-equal code blocks.

    Args:
        tb_payload_bits: payload size B
        max_cb_bits: largest code-block message length, CRC included
        crc_bits: CRC length per code block, 0 or 24

    Returns:
        SegmentLayout with L = ceil(B / (max_cb - crc)) blocks, zero padding at the tail
    """
    if tb_payload_bits <= 0 or max_cb_bits <= 0 or crc_bits < 0:
        raise InvalidArgument(
            f"Segment sizes must be positive (payload={tb_payload_bits}, max_cb={max_cb_bits}, crc={crc_bits})"
        )
    if crc_bits not in SUPPORTED_CRC_BITS:
        raise InvalidArgument(f"Only CRC-24 or no CRC is supported, got crc_bits={crc_bits}")
    if max_cb_bits <= crc_bits:
        raise InvalidArgument(f"max_cb_bits={max_cb_bits} leaves no room for a {crc_bits}-bit CRC")
    num_blocks = ceil(tb_payload_bits / (max_cb_bits - crc_bits))
    block_payload = ceil(tb_payload_bits / num_blocks)
    return SegmentLayout(
        payload_bits=tb_payload_bits,
        num_blocks=num_blocks,
        block_payload_bits=block_payload,
        crc_bits=crc_bits,
    )


def split_payload(payload, layout: SegmentLayout, tb_index: int = 0) -> TransportBlock:
    """Pad, split and CRC-protect payload bits according to layout"""
    payload = np.asarray(payload, dtype=np.uint8)
    if payload.size != layout.payload_bits:
        raise InvalidArgument(f"Payload has {payload.size} bits, layout expects {layout.payload_bits}")
    padded = np.concatenate([payload, np.zeros(layout.padding_bits, dtype=np.uint8)])
    blocks = padded.reshape(layout.num_blocks, layout.block_payload_bits)
    if layout.crc_bits:
        blocks = crc24_attach(blocks)
    return TransportBlock(tb_index=tb_index, layout=layout, code_blocks=list(blocks))


def reassemble(code_blocks, layout: SegmentLayout) -> np.ndarray:
    """Inverse of split_payload: strip CRCs and padding"""
    blocks = np.asarray(code_blocks, dtype=np.uint8).reshape(layout.num_blocks, layout.block_bits)
    payload = blocks[:, :layout.block_payload_bits].reshape(-1)
    return payload[:layout.payload_bits]
