"""
Soft-output MU-MIMO detectors.

All detectors work on the whitened model y = H s + n, n ~ CN(0, I), for a
batch of REs (h.h has shape (n_re, n_r, N), y has shape (n_re, n_r)), and
return max-log LLRs per UE laid out as (n_re, n_t * m): layer-major, bit
minor, which is the order codeword bits are mapped to symbols.
"""
import logging
import re
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from django.conf import settings

from core.errors import InvalidArgument, NumericFailure, UnsupportedSize
from phy.services.modem import clip_llrs, demap_scalar, get_llr_clip

logger = logging.getLogger(__name__)

DETECTOR_KINDS = ('lmmse', 'kbest', 'mld')
R_DIAGONAL_FLOOR = 1e-12
# distance evaluations per MLD chunk
MLD_CHUNK_ELEMENTS = 2 ** 22


def get_mld_cap() -> int:
    return int(settings.LINKSIM_MLD_ENUMERATION_CAP)


@dataclass(frozen=True)
class DetectorSpec:
    """A detector and its complexity metric"""
    kind: str
    k: int = None
    complexity: float = None

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise InvalidArgument(f"Unknown detector kind {self.kind!r}")
        if self.kind == 'kbest' and (self.k is None or self.k < 1):
            raise InvalidArgument(f"K-best needs K >= 1, got {self.k}")
        if self.complexity is not None and self.complexity < 0:
            raise InvalidArgument(f"Complexity must be non-negative, got {self.complexity}")

    @classmethod
    def parse(cls, text: str, complexity: float = None) -> 'DetectorSpec':
        """Parse 'lmmse', 'mld', 'kbest32' or 'kbest:32'"""
        name = text.strip().lower()
        if name in ('lmmse', 'mld'):
            return cls(kind=name, complexity=complexity)
        match = re.fullmatch(r'kbest:?(\d+)', name)
        if match:
            return cls(kind='kbest', k=int(match.group(1)), complexity=complexity)
        raise InvalidArgument(f"Unknown detector {text!r}; expected lmmse, mld or kbest<K>")

    @property
    def name(self) -> str:
        return f"kbest{self.k}" if self.kind == 'kbest' else self.kind

    @property
    def is_linear(self) -> bool:
        return self.kind == 'lmmse'

    def complexity_for(self, mods=(), n_t_list=()) -> float:
        """Configured complexity, else 1 for LMMSE, K for K-best, |Q|^N for MLD"""
        if self.complexity is not None:
            return float(self.complexity)
        if self.kind == 'lmmse':
            return 1.0
        if self.kind == 'kbest':
            return float(self.k)
        return float(np.prod([2.0 ** (m * n_t) for m, n_t in zip(mods, n_t_list)]))


def order_by_complexity(specs, mods=(), n_t_list=()) -> list:
    """Specs sorted by non-decreasing complexity (stable)"""
    return sorted(specs, key=lambda spec: spec.complexity_for(mods, n_t_list))


@dataclass(frozen=True, eq=False)
class DetectorOutput:
    llrs: list
    post_eq_sinr: np.ndarray
    detector_id: str
    meta: dict = field(default_factory=dict)

    def ue_llrs(self, ue: int) -> np.ndarray:
        """Flattened LLRs of one UE in codeword-bit order"""
        return self.llrs[ue].reshape(-1)


def _check_inputs(y, h, constellations):
    if len(constellations) != h.num_ue:
        raise InvalidArgument(f"{len(constellations)} constellations for {h.num_ue} UEs")
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (h.n_re, h.n_r):
        raise InvalidArgument(f"y has shape {y.shape}, expected {(h.n_re, h.n_r)}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(h.h))):
        raise NumericFailure("Detector input contains non-finite values")
    return y


def stream_constellations(h, constellations) -> list:
    """One constellation per stream, following the UE column layout"""
    per_stream = []
    for ue, c in zip(h.layout, constellations):
        per_stream.extend([c] * ue.n_t)
    return per_stream


def _split_per_ue(per_stream_llrs, h) -> list:
    """Group (n_re, m) arrays per stream into (n_re, n_t * m) arrays per UE"""
    return [
        np.concatenate(per_stream_llrs[ue.start:ue.stop], axis=1)
        for ue in h.layout
    ]


# ---------------------------------------------------------------------------
# LMMSE
# ---------------------------------------------------------------------------

def _lmmse_gram_inverse(matrix: np.ndarray) -> np.ndarray:
    n_streams = matrix.shape[-1]
    gram = np.conj(np.swapaxes(matrix, -1, -2)) @ matrix + np.eye(n_streams)
    return np.linalg.inv(gram)


def lmmse_post_sinr(h) -> np.ndarray:
    """
    Post-equalization SINR of every stream, (n_re, N).

    With G = H^H H + I, the LMMSE bias is mu = 1 - [G^-1]_kk and the
    SINR is mu / (1 - mu) = 1 / [G^-1]_kk - 1.
    """
    matrix = h.h if hasattr(h, 'h') else np.asarray(h)
    if not np.all(np.isfinite(matrix)):
        raise NumericFailure("Channel contains non-finite values")
    inverse_diag = np.real(np.diagonal(_lmmse_gram_inverse(matrix), axis1=-2, axis2=-1))
    return np.clip(1.0 / inverse_diag - 1.0, 0.0, None)


def detect_lmmse(y, h, constellations, clip_limit: float = None) -> DetectorOutput:
    """
    LMMSE equalization W = (H^H H + I)^-1 H^H followed by per-stream
    max-log demapping of the unbiased estimate with noise variance 1/SINR.

    Args:
        y: (n_re, n_r) whitened received vectors
        h: whitened ChannelRealization
        constellations: one Constellation per UE

    Returns:
        DetectorOutput with post_eq_sinr of shape (n_re, N)
    """
    y = _check_inputs(y, h, constellations)
    inverse = _lmmse_gram_inverse(h.h)
    hermitian = np.conj(np.swapaxes(h.h, -1, -2))
    estimate = (inverse @ (hermitian @ y[..., None]))[..., 0]
    inverse_diag = np.real(np.diagonal(inverse, axis1=-2, axis2=-1))
    bias = 1.0 - inverse_diag
    sinr = np.clip(1.0 / inverse_diag - 1.0, 0.0, None)

    informative = bias > 1e-15
    with np.errstate(divide='ignore', invalid='ignore'):
        unbiased = np.where(informative, estimate / np.where(informative, bias, 1.0), 0.0)
        noise_var = np.where(informative, 1.0 / np.where(sinr > 0, sinr, 1.0), np.inf)

    per_stream = []
    for k, c in enumerate(stream_constellations(h, constellations)):
        llrs = demap_scalar(unbiased[:, k], noise_var[:, k], c, clip_limit=clip_limit)
        llrs[~informative[:, k]] = 0.0
        per_stream.append(llrs)

    return DetectorOutput(
        llrs=_split_per_ue(per_stream, h),
        post_eq_sinr=sinr,
        detector_id='lmmse',
    )


# ---------------------------------------------------------------------------
# Candidate-list LLRs shared by K-best and MLD
# ---------------------------------------------------------------------------

def _candidate_llrs(metrics, candidates, per_stream, clip_limit) -> list:
    """
    Max-log LLRs from candidate lists.

    Args:
        metrics: (n_re, C) candidate metrics ||y - H s||^2 (up to a per-RE constant)
        candidates: (n_re or 1, C, N) symbol indices in original stream order
        per_stream: constellation of every stream

    Returns:
        list of (n_re, m) LLR arrays, one per stream
    """
    out = []
    for k, c in enumerate(per_stream):
        bits = c.labels[candidates[:, :, k]].astype(bool)
        llrs = np.empty((metrics.shape[0], c.order))
        for j in range(c.order):
            ones = np.where(bits[..., j], metrics, np.inf).min(axis=1)
            zeros = np.where(bits[..., j], np.inf, metrics).min(axis=1)
            llrs[:, j] = np.where(
                np.isinf(ones), -clip_limit,
                np.where(np.isinf(zeros), clip_limit, zeros - ones),
            )
        out.append(clip_llrs(llrs, clip_limit))
    return out


# ---------------------------------------------------------------------------
# Exhaustive MLD
# ---------------------------------------------------------------------------

def detect_mld(y, h, constellations, clip_limit: float = None, cap: int = None) -> DetectorOutput:
    """
    Exact max-log LLRs by enumerating every transmit vector.

    Raises UnsupportedSize when |Q|^N exceeds LINKSIM_MLD_ENUMERATION_CAP.
    """
    y = _check_inputs(y, h, constellations)
    clip_limit = get_llr_clip() if clip_limit is None else clip_limit
    cap = get_mld_cap() if cap is None else cap
    per_stream = stream_constellations(h, constellations)
    sizes = [c.size for c in per_stream]
    total = int(np.prod(sizes, dtype=np.float64))
    if total > cap:
        raise UnsupportedSize(f"MLD would enumerate {total} vectors, cap is {cap}")

    candidates = np.array(list(product(*[range(s) for s in sizes])), dtype=np.int64)
    symbols = np.stack([per_stream[k].points[candidates[:, k]] for k in range(len(sizes))], axis=1)

    chunk = max(1, MLD_CHUNK_ELEMENTS // (total * h.n_r))
    per_stream_llrs = [[] for _ in per_stream]
    for start in range(0, h.n_re, chunk):
        stop = min(start + chunk, h.n_re)
        # (re, r, C)
        noiseless = h.h[start:stop] @ symbols.T
        metrics = np.sum(np.abs(y[start:stop, :, None] - noiseless) ** 2, axis=1)
        for k, llrs in enumerate(_candidate_llrs(metrics, candidates[None], per_stream, clip_limit)):
            per_stream_llrs[k].append(llrs)

    per_stream_llrs = [np.concatenate(parts, axis=0) for parts in per_stream_llrs]
    return DetectorOutput(
        llrs=_split_per_ue(per_stream_llrs, h),
        post_eq_sinr=None,
        detector_id='mld',
        meta={'enumerated': total},
    )


# ---------------------------------------------------------------------------
# K-best
# ---------------------------------------------------------------------------

def _kbest_group(y_rot, upper, per_stream_sorted, k_best):
    """
    Breadth-first search for REs sharing one detection order.

    Levels run from the last row of R upwards. Every level above the leaf
    keeps at most K partial paths; the leaf level keeps all children of the
    survivors (C = survivors x |Q|) for LLR generation, so one stream with
    any K is exact max-log ML.

    Returns:
        (metrics (g, C), candidates (g, C, N) in sorted order, survivors
        per level above the leaf)
    """
    group, n_streams = y_rot.shape
    paths = np.zeros((group, 1, n_streams), dtype=np.int64)
    symbols = np.zeros((group, 1, n_streams), dtype=np.complex128)
    metrics = np.zeros((group, 1))
    list_sizes = []

    for level in range(n_streams - 1, -1, -1):
        points = per_stream_sorted[level].points
        interference = np.einsum('gcj,gj->gc', symbols, upper[:, level, :])
        residual = y_rot[:, level, None] - interference
        step = np.abs(residual[..., None] - upper[:, level, level, None, None] * points) ** 2
        expanded = (metrics[..., None] + step).reshape(group, -1)

        num_paths, num_points = paths.shape[1], points.size
        parent = np.repeat(np.arange(num_paths), num_points)
        child = np.tile(np.arange(num_points), num_paths)

        if level > 0:
            keep = min(k_best, expanded.shape[1])
            order = np.argsort(expanded, axis=1, kind='stable')[:, :keep]
        else:
            order = np.broadcast_to(np.arange(expanded.shape[1]), expanded.shape)

        parents = parent[order]
        paths = np.take_along_axis(paths, parents[..., None], axis=1).copy()
        symbols = np.take_along_axis(symbols, parents[..., None], axis=1).copy()
        paths[:, :, level] = child[order]
        symbols[:, :, level] = points[child[order]]
        metrics = np.take_along_axis(expanded, order, axis=1)
        if level > 0:
            list_sizes.append(metrics.shape[1])

    return metrics, paths, list_sizes


def detect_kbest(y, h, k_best: int, constellations, clip_limit: float = None) -> DetectorOutput:
    """
    Soft-output K-best detection with sorted QR.

    Streams are ordered by ascending column norm (per RE), so the
    strongest stream sits at the bottom of R and is detected first.
    A bit without a surviving counter-hypothesis gets LLR +/- clip_limit.

    Args:
        y: (n_re, n_r) whitened received vectors
        h: whitened ChannelRealization
        k_best: list size K >= 1
        constellations: one Constellation per UE

    Returns:
        DetectorOutput; meta records the orders used, the largest survivor
        list (<= K), the leaf candidates behind the LLRs (survivors x |Q|)
        and the number of regularized R diagonals
    """
    if k_best < 1:
        raise InvalidArgument(f"K must be >= 1, got {k_best}")
    y = _check_inputs(y, h, constellations)
    clip_limit = get_llr_clip() if clip_limit is None else clip_limit
    per_stream = stream_constellations(h, constellations)
    n_streams = h.n_streams

    norms = np.linalg.norm(h.h, axis=1)
    orders = np.argsort(norms, axis=1, kind='stable')
    unique_orders, group_of_re = np.unique(orders, axis=0, return_inverse=True)
    group_of_re = np.asarray(group_of_re).reshape(-1)

    per_stream_llrs = [np.empty((h.n_re, c.order)) for c in per_stream]
    regularized = 0
    max_list = 1
    leaf_candidates = 0
    for g, order in enumerate(unique_orders):
        res = np.flatnonzero(group_of_re == g)
        q, upper = np.linalg.qr(h.h[res][:, :, order])
        diagonal = np.abs(np.diagonal(upper, axis1=1, axis2=2))
        tiny = diagonal < R_DIAGONAL_FLOOR
        if np.any(tiny):
            regularized += int(tiny.sum())
            idx = np.nonzero(tiny)
            upper[idx[0], idx[1], idx[1]] = R_DIAGONAL_FLOOR
        y_rot = (np.conj(np.swapaxes(q, 1, 2)) @ y[res][..., None])[..., 0]
        metrics, paths, list_sizes = _kbest_group(
            y_rot, upper, [per_stream[s] for s in order], k_best,
        )
        max_list = max(max_list, max(list_sizes, default=1))
        leaf_candidates = max(leaf_candidates, metrics.shape[1])
        # back to original stream order
        inverse = np.argsort(order)
        candidates = paths[:, :, inverse]
        for k, llrs in enumerate(_candidate_llrs(metrics, candidates, per_stream, clip_limit)):
            per_stream_llrs[k][res] = llrs

    if regularized:
        logger.warning("K-best regularized %d R diagonal entries below %.0e", regularized, R_DIAGONAL_FLOOR)

    return DetectorOutput(
        llrs=_split_per_ue(per_stream_llrs, h),
        post_eq_sinr=None,
        detector_id=f'kbest{k_best}',
        meta={
            'sorted_qr': 'ascending column norm',
            'orders': unique_orders,
            'max_list_size': max_list,
            'leaf_candidates': leaf_candidates,
            'regularized': regularized,
        },
    )


def run_detector(spec: DetectorSpec, y, h, constellations, clip_limit: float = None) -> DetectorOutput:
    """Dispatch on spec.kind"""
    if spec.kind == 'lmmse':
        return detect_lmmse(y, h, constellations, clip_limit)
    if spec.kind == 'kbest':
        return detect_kbest(y, h, spec.k, constellations, clip_limit)
    return detect_mld(y, h, constellations, clip_limit)
