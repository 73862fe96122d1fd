"""
Closed-loop uplink simulation.

Every drop draws UE powers and runs a channel process for T slots. Per
slot the link adaptation of each active detector chooses MCSs from the
previous slot's channel estimate; the codewords then either go through
the full chain (encode, map, channel, detect, decode) or through the PHY
abstraction (predicted BMDR or effective SINR mapped to a CER). Decoding
outcomes feed the outer-loop offsets.

Drops are independent tasks: each one derives its random streams from
(seed, name, drop, ...) and the results are merged in drop order, so a
run does not depend on the number of workers.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from core.errors import ConfigurationError, InvalidArgument
from core.parallel import ordered_map
from core.rng import stream
from phy.services.bmdr import TableStore
from phy.services.channel import (
    ChannelProcess,
    condition_number_db,
    estimate,
    subband_of_re,
    transmit,
    whiten,
)
from phy.services.coding import crc24_check, decode_batch, encode, get_code, get_crc_bits, segment, split_payload
from phy.services.detect import lmmse_post_sinr, run_detector
from phy.services.modem import build_constellation, map_bits
from simulation.services.abstraction import (
    AwgnSnrMap,
    BetaTable,
    EsmConfig,
    abstract_bmdr,
    abstract_esm,
    estimate_throughput,
    map_cer,
)
from simulation.services.linkadapt import (
    LaState,
    TargetResolver,
    select_detector,
    select_detector_weighted,
    select_mcs,
    select_mcs_eesm,
    update_delta,
)
from simulation.services.metrics import compute_metrics
from simulation.services.tables import check_tables

logger = logging.getLogger(__name__)

MODES = ('full', 'abstract')


@dataclass(frozen=True, eq=False)
class UeSlot:
    """One UE's transport block in one slot, under one detector"""
    ue: int
    detector: int
    mcs_index: int
    m: int
    rate: Fraction
    n: int
    payload_bits: int
    ok: np.ndarray
    bmdr_pred: float
    delta: float
    fallback: bool
    p_hat: np.ndarray = None
    sinr_samples: tuple = ()

    @property
    def codewords(self) -> int:
        return self.ok.size

    def delivered_bits(self, mode: str = 'full') -> float:
        if mode == 'abstract':
            return float(np.sum(1.0 - self.p_hat) * self.payload_bits)
        return float(np.sum(self.ok) * self.payload_bits)

    @property
    def se(self) -> Fraction:
        return self.m * self.rate


@dataclass(frozen=True, eq=False)
class SlotResult:
    """
    All detectors' outcomes of one slot.

    ues holds one tuple of UeSlot per simulated detector; detector is the
    index the scheme selected, best_detector the one that delivered the
    most bits (only known when several detectors ran on the slot).
    """
    drop: int
    slot: int
    detector: int
    ues: tuple
    se_sums: tuple
    delivered: tuple
    best_detector: int = None
    condition_db: float = float('nan')
    trace: tuple = ()

    @property
    def chosen(self) -> tuple:
        return self.ues[self.detector]


@dataclass(eq=False)
class DropResult:
    drop: int
    powers: np.ndarray
    slots: list = field(default_factory=list)

    @property
    def num_ue(self) -> int:
        return self.powers.size

    def delivered_bits(self, mode: str = 'full') -> np.ndarray:
        bits = np.zeros(self.num_ue)
        for slot in self.slots:
            for ue in slot.chosen:
                bits[ue.ue] += ue.delivered_bits(mode)
        return bits

    def throughput(self, slots: int, t_slot: float, mode: str = 'full') -> np.ndarray:
        """TP_i in Mbps: delivered bits over the drop duration"""
        if mode == 'abstract':
            throughput = np.zeros(self.num_ue)
            for i in range(self.num_ue):
                blocks = [s.chosen[i] for s in self.slots]
                if blocks:
                    k_bits = np.concatenate([np.full(b.codewords, b.payload_bits) for b in blocks])
                    throughput[i] = estimate_throughput(k_bits, np.concatenate([b.p_hat for b in blocks]), slots, t_slot)
            return throughput
        return self.delivered_bits(mode) / (slots * t_slot) / 1e6

    def ue_cer(self, mode: str = 'full') -> np.ndarray:
        """Realized CER per UE, or the mean predicted CER for abstracted runs"""
        cer = np.full(self.num_ue, np.nan)
        for i in range(self.num_ue):
            if mode == 'abstract':
                values = [s.chosen[i].p_hat for s in self.slots]
                if values:
                    cer[i] = float(np.mean(np.concatenate(values)))
            else:
                outcomes = [s.chosen[i].ok for s in self.slots]
                if outcomes:
                    cer[i] = 1.0 - float(np.mean(np.concatenate(outcomes)))
        return cer

    def ue_bler(self, mode: str = 'full') -> np.ndarray:
        """Transport-block error rate per UE"""
        bler = np.full(self.num_ue, np.nan)
        for i in range(self.num_ue):
            if mode == 'abstract':
                blocks = [1.0 - np.prod(1.0 - s.chosen[i].p_hat) for s in self.slots]
            else:
                blocks = [0.0 if np.all(s.chosen[i].ok) else 1.0 for s in self.slots]
            if blocks:
                bler[i] = float(np.mean(blocks))
        return bler

    def mcs_indices(self) -> np.ndarray:
        return np.array([ue.mcs_index for s in self.slots for ue in s.chosen], dtype=np.int64)


@dataclass(eq=False)
class RunResult:
    mode: str
    config: object
    drops: list
    report: object
    store: TableStore = None
    table_fallbacks: list = field(default_factory=list)

    @property
    def slot_results(self) -> list:
        return [slot for drop in self.drops for slot in drop.slots]


# ---------------------------------------------------------------------------
# RE grouping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReGroups:
    """
    Representative REs of a transport block.

    The channel is constant within a subband, so each codeword is
    summarised by one RE per subband it touches, weighted by the number of
    its REs in that subband.
    """
    tb_index: np.ndarray
    tb_weights: np.ndarray
    cw_index: tuple
    cw_weights: tuple

    @classmethod
    def build(cls, n_re: int, codewords: int, n_subbands: int) -> 'ReGroups':
        total = n_re * codewords
        subband = subband_of_re(total, n_subbands)
        _, tb_index, tb_counts = np.unique(subband, return_index=True, return_counts=True)
        group = np.arange(total) // n_re
        _, first, counts = np.unique(group * n_subbands + subband, return_index=True, return_counts=True)
        owners = group[first]
        return cls(
            tb_index=tb_index,
            tb_weights=tb_counts.astype(np.float64),
            cw_index=tuple(first[owners == cw] for cw in range(codewords)),
            cw_weights=tuple(counts[owners == cw].astype(np.float64) for cw in range(codewords)),
        )


# ---------------------------------------------------------------------------
# Per-drop simulation
# ---------------------------------------------------------------------------

class _DropRunner:
    """Runs the slots of one drop; holds the per-detector LA state"""

    def __init__(self, cfg, store: TableStore, mode: str, drop: int, options: dict):
        self.cfg = cfg
        self.store = store
        self.mode = mode
        self.drop = drop
        self.options = options
        self.eesm = cfg.scheme == 'lmmse-eesm'
        self.groups = ReGroups.build(cfg.n_re, cfg.codewords_per_tb, cfg.channel.n_subbands)
        self.crc_bits = get_crc_bits()

        table = cfg.mcs_table
        if self.eesm:
            bound = cfg.olla.eesm_bound_db
            self.steps = (cfg.olla.eesm_step_ok_db, cfg.olla.eesm_step_fail_db)
            self.snr_map = AwgnSnrMap(store, cfg.target_cer)
            self.betas = BetaTable.from_csv(cfg.beta_table) if cfg.beta_table else BetaTable()
        else:
            bound = None
            self.steps = (cfg.olla.step_ok, cfg.olla.step_fail)
            self.targets = TargetResolver(store, cfg.target_cer)
        self.states = [LaState.initial(cfg.num_ue, table.k_max, bound) for _ in cfg.detectors]
        self.predictors = [cfg.predictor_for(spec) for spec in cfg.detectors]

    def _stream(self, *keys):
        return stream(self.cfg.seed, *keys)

    # -- link adaptation ----------------------------------------------------

    def _select(self, d: int, h_prev, slot: int):
        cfg = self.cfg
        reps = h_prev.select(self.groups.tb_index)
        weights = self.groups.tb_weights
        if self.eesm:
            return select_mcs_eesm(
                lmmse_post_sinr(reps), reps.layout, cfg.mcs_table, cfg.target_cer, self.states[d],
                cfg.n_re, self.snr_map, betas=self.betas, weights=weights,
            )
        selection = select_mcs(
            self.predictors[d], reps, cfg.mcs_table, cfg.target_cer, self.states[d], cfg.n_re,
            self.targets, rng=self._stream('predict', self.drop, slot, d, 'la'), weights=weights,
        )
        if selection.possibly_suboptimal:
            logger.debug("Drop %d slot %d: %s selection may be suboptimal", self.drop, slot, cfg.detectors[d].name)
        return selection

    def _choose_detector(self, selections) -> int:
        cfg = self.cfg
        if len(selections) == 1:
            return 0
        if cfg.gamma is None:
            return select_detector(selections, cfg.se_complexities)
        return select_detector_weighted(selections, cfg.se_complexities, cfg.gamma, cfg.mcs_table.se_bound)

    # -- data path ------------------------------------------------------------

    def _code(self, assignment):
        code = get_code(assignment.rate, assignment.n)
        payload = code.k - self.crc_bits
        if payload <= 0:
            raise ConfigurationError(
                f"Code {code.code_id} (k={code.k}) leaves no payload after a {self.crc_bits}-bit CRC"
            )
        return code, payload

    def _full_chain(self, d: int, selection, h_true, h_est, slot: int) -> list:
        """Transmit and decode every UE's transport block; returns (ok, payload, extra) per UE"""
        cfg = self.cfg
        codewords = cfg.codewords_per_tb
        data_rng = self._stream('data', self.drop, slot, d)
        blocks, symbols, constellations = [], [], []
        for assignment, ue in zip(selection.assignments, h_true.layout):
            code, payload = self._code(assignment)
            layout = segment(codewords * payload, code.k, self.crc_bits)
            tb = split_payload(data_rng.integers(0, 2, size=codewords * payload, dtype=np.uint8), layout)
            msg = np.asarray(tb.code_blocks, dtype=np.uint8)
            constellation = build_constellation(assignment.m)
            mapped = map_bits(encode(msg, code), constellation)
            symbols.append(mapped.reshape(codewords * cfg.n_re, ue.n_t))
            constellations.append(constellation)
            blocks.append((code, payload, msg))

        # the same noise stream for every detector keeps paired runs comparable
        y = transmit(h_true, np.concatenate(symbols, axis=1), cfg.channel_noise, self._stream('noise', self.drop, slot))
        h_white, y_white = whiten(h_est, y, cfg.receiver_noise)
        output = run_detector(cfg.detectors[d], y_white, h_white, constellations)

        outcomes = []
        for i, (code, payload, msg) in enumerate(blocks):
            msg_hat, success = decode_batch(output.llrs[i].reshape(codewords, code.n), code)
            ok = success & np.all(msg_hat == msg, axis=1)
            if self.crc_bits:
                ok &= crc24_check(msg_hat)
            outcomes.append((ok, payload))
        return outcomes

    def _abstract_chain(self, d: int, selection, h_white, slot: int) -> list:
        """Predicted CER per codeword; feedback drawn as Bernoulli outcomes"""
        cfg = self.cfg
        feedback = self._stream('feedback', self.drop, slot, d)
        predict_rng = self._stream('predict', self.drop, slot, d, 'abstract')
        per_cw = []
        for index, weights in zip(self.groups.cw_index, self.groups.cw_weights):
            reps = h_white.select(index)
            if self.eesm:
                per_cw.append((lmmse_post_sinr(reps), weights))
            else:
                bmdr = abstract_bmdr(self.predictors[d], selection.mods, reps, rng=predict_rng, weights=weights)
                per_cw.append(bmdr.value)

        outcomes = []
        for i, assignment in enumerate(selection.assignments):
            _, payload = self._code(assignment)
            p_hat = np.empty(cfg.codewords_per_tb)
            for cw, item in enumerate(per_cw):
                if self.eesm:
                    sinr, weights = item
                    columns = h_white.layout[i].columns
                    cfg_esm = EsmConfig.eesm(self.betas.beta(assignment.index))
                    p_hat[cw], _, _ = abstract_esm(
                        sinr[:, columns].reshape(-1), cfg_esm, assignment.m, assignment.rate, assignment.n,
                        self.snr_map, weights=np.repeat(weights, h_white.layout[i].n_t),
                    )
                else:
                    table = self.store.table_for(assignment.m, assignment.rate, assignment.n).value
                    p_hat[cw] = map_cer(table, float(item[i]))
            ok = feedback.random(p_hat.size) >= p_hat
            outcomes.append((ok, payload, p_hat))
        return outcomes

    def _sinr_samples(self, h_white, ue) -> tuple:
        samples = []
        for index, weights in zip(self.groups.cw_index, self.groups.cw_weights):
            sinr = lmmse_post_sinr(h_white.select(index))[:, ue.columns]
            samples.append((sinr.reshape(-1), np.repeat(weights, ue.n_t)))
        return tuple(samples)

    # -- slot loop ------------------------------------------------------------

    def run(self) -> DropResult:
        cfg = self.cfg
        powers = cfg.ue_powers(self._stream('pathloss', self.drop))
        process = ChannelProcess(cfg.channel, cfg.n_r, cfg.n_t_list, self._stream('channel', self.drop))
        result = DropResult(drop=self.drop, powers=powers)
        step_ok, step_fail = self.steps
        h_prev = None

        for slot in range(cfg.slots):
            h_true = process.step(powers, cfg.n_re_per_tb)
            h_est = estimate(h_true, cfg.channel_noise, self._stream('estimation', self.drop, slot))
            h_white, _ = whiten(h_est, None, cfg.receiver_noise)
            # the first slot has no history and adapts to its own estimate
            h_la = h_white if h_prev is None else h_prev

            selections = [self._select(d, h_la, slot) for d in range(len(cfg.detectors))]
            chosen = self._choose_detector(selections)

            per_detector, delivered = [], []
            for d, selection in enumerate(selections):
                if self.mode == 'full':
                    outcomes = [(ok, payload, None) for ok, payload in
                                self._full_chain(d, selection, h_true, h_est, slot)]
                else:
                    outcomes = self._abstract_chain(d, selection, h_white, slot)

                ues = []
                for assignment, (ok, payload, p_hat) in zip(selection.assignments, outcomes):
                    i = assignment.ue
                    for decoded in ok:
                        update_delta(self.states[d], i, bool(decoded), step_ok, step_fail)
                    samples = ()
                    if self.options.get('sinr_samples') and cfg.detectors[d].is_linear:
                        samples = self._sinr_samples(h_white, h_white.layout[i])
                    ues.append(UeSlot(
                        ue=i, detector=d, mcs_index=assignment.index, m=assignment.m, rate=assignment.rate,
                        n=assignment.n, payload_bits=payload, ok=np.asarray(ok, dtype=bool),
                        bmdr_pred=assignment.bmdr, delta=float(self.states[d].delta[i]),
                        fallback=assignment.fallback, p_hat=p_hat, sinr_samples=samples,
                    ))
                per_detector.append(tuple(ues))
                delivered.append(sum(u.delivered_bits(self.mode) for u in ues))

            trace = ()
            if self.options.get('trace'):
                trace = tuple(
                    dict(entry, detector=cfg.detectors[d].name)
                    for d, selection in enumerate(selections) for entry in selection.trace
                )
            with np.errstate(invalid='ignore'):
                condition = float(np.mean(condition_number_db(h_true.select(self.groups.tb_index))))
            result.slots.append(SlotResult(
                drop=self.drop,
                slot=slot,
                detector=chosen,
                ues=tuple(per_detector),
                se_sums=tuple(s.se_sum for s in selections),
                delivered=tuple(delivered),
                # first maximum, so ties go to the less complex detector
                best_detector=int(np.argmax(delivered)) if len(delivered) > 1 else None,
                condition_db=condition,
                trace=trace,
            ))
            h_prev = h_white

        logger.info(
            "Drop %d (%s, %s): %d slots, delivered %s bits",
            self.drop, self.mode, cfg.scheme, cfg.slots, np.round(result.delivered_bits(self.mode)).astype(int).tolist(),
        )
        return result


def _run_drop(task) -> DropResult:
    """Worker entry point; top-level so process pools can pickle it"""
    cfg, store, mode, drop, options = task
    return _DropRunner(cfg, store, mode, drop, options).run()


def prepare_tables(cfg, store: TableStore = None) -> tuple:
    """Load the table store for cfg and check it covers every MCS"""
    store = TableStore.from_directory(cfg.table_dir) if store is None else store
    scenario = str(cfg.path) if cfg.path is not None else None
    fallbacks = check_tables(store, cfg.mcs_table, cfg.n_re, cfg.n_t_list, scenario)
    return store, fallbacks


def run_simulation(cfg, mode: str = 'full', store: TableStore = None, workers: int = 1,
                   options: dict = None, drops=None) -> RunResult:
    """
    Run every drop of cfg.

    Args:
        cfg: SimConfig
        mode: 'full' or 'abstract'
        store: TableStore, default the tables in cfg.table_dir
        workers: processes for the drops
        options: {'trace': bool, 'sinr_samples': bool}
        drops: drop indices to run, default all

    Returns:
        RunResult holding the drops and their MetricsReport
    """
    if mode not in MODES:
        raise InvalidArgument(f"Unknown mode {mode!r}, expected one of {MODES}")
    store, fallbacks = prepare_tables(cfg, store)
    drops = range(cfg.drops) if drops is None else drops
    tasks = [(cfg, store, mode, drop, dict(options or {})) for drop in drops]
    logger.info("Running %d drop(s) of %s in %s mode on %d worker(s)", len(tasks), cfg.name, mode, workers)
    results = ordered_map(_run_drop, tasks, workers)
    report = compute_metrics(
        results, cfg.slots, cfg.t_slot, mode=mode, scheme=cfg.scheme,
        detector_names=[spec.name for spec in cfg.detectors],
    )
    return RunResult(mode=mode, config=cfg, drops=results, report=report, store=store, table_fallbacks=fallbacks)


def run_full_sim(cfg, store: TableStore = None, workers: int = 1, options: dict = None) -> RunResult:
    return run_simulation(cfg, 'full', store, workers, options)


def run_abstracted_sim(cfg, store: TableStore = None, workers: int = 1, options: dict = None) -> RunResult:
    return run_simulation(cfg, 'abstract', store, workers, options)
