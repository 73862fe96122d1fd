"""
Link adaptation: BMDR-based MCS selection, correction offsets and
detector selection.

For every UE i the selection looks for the largest spectral efficiency
m_i * r_i whose predicted BMDR meets the target of the code that MCS would
use:
    R_hat_i(mods, H) >= target(m_i, C(r_i, n_i), eps) - delta_i,
    n_i = n_re * m_i * n_t_i.
select_mcs walks every UE down from the highest modulation order; the
result is exact when the predictor is separable (a UE's BMDR does not
depend on the other UEs' orders) and is flagged otherwise.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from numbers import Number

import numpy as np
from django.conf import settings

from core.errors import InvalidArgument, TargetUnreachable
from phy.services.bmdr import TableStore, predict_bmdr
from simulation.services.abstraction import EsmConfig, esm_effective_sinr

logger = logging.getLogger(__name__)

HISTORY_WINDOW = 200


def get_delta_bound() -> float:
    return float(settings.LINKSIM_DELTA_BOUND)


def default_steps(eps: float, step_fail: float = None) -> tuple:
    """
    (step_ok, step_fail) with step_ok / step_fail = eps / (1 - eps), so the
    offset drifts to zero exactly when the CER equals eps.
    """
    if not 0.0 < eps < 1.0:
        raise InvalidArgument(f"Target CER must lie in (0, 1), got {eps}")
    step_fail = float(settings.LINKSIM_OLLA_STEP_FAIL) if step_fail is None else float(step_fail)
    return step_fail * eps / (1.0 - eps), step_fail


@dataclass
class LaState:
    """
    Per-UE link-adaptation memory.

    delta: correction offset (BMDR units for the BMDR schemes, dB for LMMSE-EESM)
    modulation_index: c_i of the last selection (m_i = 2 c_i)
    history: recent ACK (True) / NACK (False) outcomes
    """
    delta: np.ndarray
    modulation_index: np.ndarray
    bound: float
    history: list = field(default_factory=list)

    @classmethod
    def initial(cls, num_ue: int, k_max: int, bound: float = None) -> 'LaState':
        bound = get_delta_bound() if bound is None else float(bound)
        return cls(
            delta=np.zeros(num_ue),
            modulation_index=np.full(num_ue, int(k_max)),
            bound=bound,
            history=[deque(maxlen=HISTORY_WINDOW) for _ in range(num_ue)],
        )

    @property
    def num_ue(self) -> int:
        return self.delta.size

    def recent_cer(self, ue: int) -> float:
        outcomes = self.history[ue]
        if not outcomes:
            return float('nan')
        return 1.0 - sum(outcomes) / len(outcomes)


def update_delta(state: LaState, ue: int, decoded_ok: bool, step_ok: float, step_fail: float) -> LaState:
    """
    Outer-loop correction: raise delta by step_ok after a decoded codeword,
    lower it by step_fail after a failure, clamped to [-bound, bound].
    """
    if step_ok <= 0 or step_fail <= 0:
        raise InvalidArgument(f"Step sizes must be positive, got step_ok={step_ok}, step_fail={step_fail}")
    change = step_ok if decoded_ok else -step_fail
    state.delta[ue] = np.clip(state.delta[ue] + change, -state.bound, state.bound)
    state.history[ue].append(bool(decoded_ok))
    return state


# ---------------------------------------------------------------------------
# Target BMDR resolution
# ---------------------------------------------------------------------------

class TargetResolver:
    """
    Memoised target BMDR per (m, rate, n); unreachable targets come back as
    +inf so the criterion simply fails for that rate.
    """

    def __init__(self, tables: TableStore, eps: float):
        self.tables = tables
        self.eps = float(eps)
        self._cache = {}

    def __call__(self, m: int, rate: Fraction, n: int) -> float:
        key = (m, rate, n)
        if key not in self._cache:
            try:
                self._cache[key] = float(self.tables.target(m, rate, n, self.eps).value)
            except TargetUnreachable:
                logger.debug("Target unreachable for m=%d rate=%s n=%d eps=%g", m, rate, n, self.eps)
                self._cache[key] = np.inf
        return self._cache[key]


def _resolver(tables, eps) -> TargetResolver:
    if isinstance(tables, TargetResolver):
        return tables
    return TargetResolver(tables, eps)


@dataclass(frozen=True)
class UeAssignment:
    ue: int
    index: int
    m: int
    rate: Fraction
    n: int
    bmdr: float
    target: float
    fallback: bool

    @property
    def se(self) -> Fraction:
        return self.m * self.rate


@dataclass(frozen=True, eq=False)
class McsSelection:
    """Outcome of one MCS selection for all UEs"""
    assignments: tuple
    iterations: int
    evaluations: int
    possibly_suboptimal: bool
    trace: tuple = ()

    @property
    def indices(self) -> list:
        return [a.index for a in self.assignments]

    @property
    def mods(self) -> list:
        return [a.m for a in self.assignments]

    @property
    def pairs(self) -> list:
        return [(a.m, a.rate) for a in self.assignments]

    @property
    def se_sum(self) -> Fraction:
        return sum((a.se for a in self.assignments), Fraction(0))


def _best_rate(table, m: int, n: int, bmdr: float, delta: float, targets) -> tuple:
    """(rate, target, evaluations): largest rate meeting the criterion, or None"""
    evaluations = 0
    for rate in reversed(table.rates_for(m)):
        evaluations += 1
        threshold = targets(m, rate, n)
        if bmdr >= threshold - delta:
            return rate, threshold, evaluations
    return None, None, evaluations


def _assign(table, ue: int, m: int, n: int, bmdr: float, delta: float, targets) -> tuple:
    rate, threshold, evaluations = _best_rate(table, m, n, bmdr, delta, targets)
    fallback = rate is None
    if fallback:
        rate = table.rates_for(m)[0]
        threshold = targets(m, rate, n)
    entry = table.entry(m, rate)
    assignment = UeAssignment(
        ue=ue, index=entry.index, m=m, rate=rate, n=n,
        bmdr=float(bmdr), target=float(threshold), fallback=fallback,
    )
    return assignment, evaluations


def select_mcs(pred, h_hat, table, eps: float, state: LaState, n_re: int, tables,
               rng=None, weights=None) -> McsSelection:
    """
    Select (m_i, r_i) for every UE by walking modulation orders down.

    All UEs start at the highest order k_max. Each pass predicts the BMDR of
    every UE under the current orders and lowers c_i for each UE whose BMDR
    misses even the easiest target of its order; the loop ends when a pass
    changes nothing. Each UE then takes the largest rate of its order that
    meets the criterion, or the smallest rate when none does.

    Args:
        pred: BmdrPredictor bound to the detector
        h_hat: whitened channel estimate (one or more REs)
        table: McsTable
        eps: target CER
        state: LaState holding delta_i; its modulation_index is updated
        n_re: REs per codeword
        tables: TableStore or TargetResolver
        rng: generator for Monte-Carlo predictors
        weights: RE multiplicities of h_hat

    Returns:
        McsSelection
    """
    num_ue = h_hat.num_ue
    if num_ue == 0 or h_hat.n_re == 0:
        raise InvalidArgument("MCS selection needs a non-empty channel set")
    if state.num_ue != num_ue:
        raise InvalidArgument(f"LA state has {state.num_ue} UEs, channel has {num_ue}")
    targets = _resolver(tables, eps)
    n_t = [ue.n_t for ue in h_hat.layout]

    def easiest_target(i, m):
        n = n_re * m * n_t[i]
        return min(targets(m, rate, n) for rate in table.rates_for(m))

    c = [table.k_max] * num_ue
    iterations = 0
    evaluations = 0
    trace = []
    while True:
        iterations += 1
        mods = [2 * ci for ci in c]
        bmdr = predict_bmdr(pred, mods, h_hat, rng=rng, weights=weights).value
        changed = False
        for i in range(num_ue):
            if c[i] == 1:
                continue
            evaluations += 1
            threshold = easiest_target(i, mods[i])
            reduce = bool(bmdr[i] < threshold - state.delta[i])
            trace.append({
                'iteration': iterations, 'ue': i, 'm': mods[i],
                'bmdr': float(bmdr[i]), 'threshold': threshold, 'reduced': reduce,
            })
            if reduce:
                c[i] -= 1
                changed = True
        if not changed:
            break

    assignments = []
    for i in range(num_ue):
        m = 2 * c[i]
        assignment, count = _assign(table, i, m, n_re * m * n_t[i], bmdr[i], state.delta[i], targets)
        evaluations += count
        assignments.append(assignment)
    state.modulation_index[:] = c

    return McsSelection(
        assignments=tuple(assignments),
        iterations=iterations,
        evaluations=evaluations,
        possibly_suboptimal=not pred.separable,
        trace=tuple(trace),
    )


def select_mcs_bruteforce(pred, h_hat, table, eps: float, state: LaState, n_re: int, tables,
                          rng=None, weights=None) -> McsSelection:
    """
    Exhaustive search over modulation vectors.

    Maximises the sum of m_i r_i where each UE takes its largest admissible
    rate and a UE without one contributes nothing (and transmits the lowest
    rate of its order). Ties go to the smallest modulation vector. Costs
    k_max^U predictions; meant for verification and small configurations.
    """
    num_ue = h_hat.num_ue
    targets = _resolver(tables, eps)
    n_t = [ue.n_t for ue in h_hat.layout]
    best_key, best = None, None
    evaluations = 0
    count = 0
    for c in product(range(1, table.k_max + 1), repeat=num_ue):
        count += 1
        mods = [2 * ci for ci in c]
        bmdr = predict_bmdr(pred, mods, h_hat, rng=rng, weights=weights).value
        assignments = []
        for i, m in enumerate(mods):
            assignment, used = _assign(table, i, m, n_re * m * n_t[i], bmdr[i], state.delta[i], targets)
            evaluations += used
            assignments.append(assignment)
        objective = sum((a.se for a in assignments if not a.fallback), Fraction(0))
        # maximise the objective, then prefer the smaller vector
        key = (objective, tuple(-ci for ci in c))
        if best_key is None or key > best_key:
            best_key, best = key, assignments
    return McsSelection(
        assignments=tuple(best),
        iterations=count,
        evaluations=evaluations,
        possibly_suboptimal=False,
    )


# ---------------------------------------------------------------------------
# LMMSE-EESM baseline
# ---------------------------------------------------------------------------

def select_mcs_eesm(sinr, layout, table, eps: float, state: LaState, n_re: int, snr_thresholds,
                    betas=None, weights=None) -> McsSelection:
    """
    Classical selection: the highest MCS whose EESM effective SINR, plus the
    UE's offset in dB, reaches the AWGN SNR at which that MCS meets eps.

    Args:
        sinr: (n_re, N) LMMSE post-equalization SINRs of the estimate
        layout: per-UE column layout
        table: McsTable
        eps: target CER
        state: LaState whose delta holds offsets in dB
        n_re: REs per codeword
        snr_thresholds: callable (m, rate, n) -> threshold in dB (inf when unreachable)
        betas: BetaTable, default beta = 1
        weights: RE multiplicities

    Returns:
        McsSelection (bmdr fields hold the effective SINR in dB)
    """
    assignments = []
    evaluations = 0
    for i, ue in enumerate(layout):
        values = np.asarray(sinr)[:, ue.columns]
        ue_weights = None if weights is None else np.repeat(np.asarray(weights, dtype=np.float64), ue.n_t)
        chosen = None
        for entry in reversed(table.entries):
            evaluations += 1
            beta = 1.0 if betas is None else betas.beta(entry.index)
            rho_bar, _ = esm_effective_sinr(values.reshape(-1), EsmConfig.eesm(beta), weights=ue_weights)
            rho_db = 10.0 * np.log10(max(rho_bar, 1e-30))
            n = entry.n_for(n_re, ue.n_t)
            threshold = snr_thresholds(entry.m, entry.rate, n)
            if rho_db + state.delta[i] >= threshold:
                chosen = (entry, rho_db, threshold, False)
                break
        if chosen is None:
            entry = table.lowest
            chosen = (entry, rho_db, snr_thresholds(entry.m, entry.rate, entry.n_for(n_re, ue.n_t)), True)
        entry, rho_db, threshold, fallback = chosen
        assignments.append(UeAssignment(
            ue=i, index=entry.index, m=entry.m, rate=entry.rate, n=entry.n_for(n_re, ue.n_t),
            bmdr=float(rho_db), target=float(threshold), fallback=fallback,
        ))
        state.modulation_index[i] = entry.modulation_index
    return McsSelection(
        assignments=tuple(assignments), iterations=1, evaluations=evaluations, possibly_suboptimal=False,
    )


# ---------------------------------------------------------------------------
# Detector selection
# ---------------------------------------------------------------------------

def _se_per_ue(result) -> Fraction:
    pairs = result.pairs if isinstance(result, McsSelection) else result
    pairs = list(pairs)
    if not pairs:
        raise InvalidArgument("A detector result needs at least one UE")
    return sum((int(m) * Fraction(r) for m, r in pairs), Fraction(0)) / len(pairs)


def _complexities(specs) -> list:
    return [float(s) if isinstance(s, Number) else s.complexity_for() for s in specs]


def _check_ordered(results, specs) -> list:
    if not results:
        raise InvalidArgument("Detector selection needs at least one detector")
    if len(results) != len(specs):
        raise InvalidArgument(f"{len(results)} results for {len(specs)} detectors")
    costs = _complexities(specs)
    if any(b < a for a, b in zip(costs, costs[1:])):
        raise InvalidArgument(f"Detectors must be ordered by non-decreasing complexity, got {costs}")
    return costs


def select_detector(results, specs) -> int:
    """
    Index of the least complex detector among those maximising the mean
    spectral efficiency (1/U) sum_i r_i m_i.

    Args:
        results: per detector, a McsSelection or a list of (m, rate) per UE
        specs: DetectorSpecs or complexity values, ordered by complexity

    Returns:
        detector index
    """
    _check_ordered(results, specs)
    se = [_se_per_ue(result) for result in results]
    best = max(se)
    return se.index(best)


def select_detector_weighted(results, specs, gamma: float, se_bound) -> int:
    """
    Index maximising gamma f1 + (1 - gamma) f2 with
    f1 = sum_i r_i m_i / (U r_max m_max) and f2 = -c_p / c_max.

    Args:
        results: per detector, a McsSelection or a list of (m, rate) per UE
        specs: DetectorSpecs or complexity values, ordered by complexity
        gamma: weight in [0, 1]
        se_bound: r_max * m_max of the MCS table

    Returns:
        detector index, ties to the lower index
    """
    if not 0.0 <= gamma <= 1.0:
        raise InvalidArgument(f"gamma must lie in [0, 1], got {gamma}")
    costs = _check_ordered(results, specs)
    if costs[-1] <= 0:
        raise InvalidArgument("The most complex detector needs a positive complexity")
    se_bound = Fraction(se_bound).limit_denominator(10 ** 6) if isinstance(se_bound, float) else Fraction(se_bound)
    scores = []
    for result, cost in zip(results, costs):
        f1 = float(_se_per_ue(result) / se_bound)
        f2 = -cost / costs[-1]
        scores.append(gamma * f1 + (1.0 - gamma) * f2)
    return int(np.argmax(scores))
