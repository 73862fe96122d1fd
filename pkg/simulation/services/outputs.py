"""
Run outputs: plot-ready CSV files, the run manifest and the
SimulationRun registry row.

Files only contain values derived from (config, seed), so two runs that
differ in the number of workers write byte-identical CSVs.
"""
import json
import logging
from pathlib import Path

import numpy as np
from django.conf import settings
from django.db import DatabaseError

from core.csvio import write_csv
from simulation.models import SimulationRun
from simulation.services.metrics import normalized_error

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'run_manifest.json'


def default_output_dir(command: str, name: str, seed: int) -> Path:
    return Path(settings.LINKSIM_OUTPUT_DIR) / f"{command}_{name}_seed{seed}"


def _header_comment(run) -> list:
    cfg = run.config
    return [f"linksim {run.mode} run; scenario={cfg.name}; scheme={cfg.scheme}; seed={cfg.seed}"]


def write_metrics(run, out_dir: Path, prefix: str = '') -> list:
    """Per-UE throughput and error rates, the run summary and the distribution curves"""
    out_dir = Path(out_dir)
    cfg = run.config
    report = run.report
    comments = _header_comment(run)

    rows = []
    for drop in run.drops:
        throughput = drop.throughput(cfg.slots, cfg.t_slot, run.mode)
        cer = drop.ue_cer(run.mode)
        bler = drop.ue_bler(run.mode)
        with np.errstate(divide='ignore'):
            power_db = 10.0 * np.log10(drop.powers)
        for i in range(drop.num_ue):
            rows.append((drop.drop, i, power_db[i], throughput[i], cer[i], bler[i]))
    paths = [write_csv(
        out_dir / f'{prefix}metrics.csv',
        ['drop', 'ue', 'snr_db', 'throughput_mbps', 'cer', 'bler'], rows, comments,
    )]

    paths.append(write_csv(out_dir / f'{prefix}summary.csv', ['metric', 'value'], report.summary().items(), comments))

    x, fraction = report.cer_curve
    paths.append(write_csv(out_dir / f'{prefix}cer_cdf.csv', ['cer', 'fraction'], zip(x, fraction), comments))
    q, values = report.mcs_curve
    paths.append(write_csv(out_dir / f'{prefix}mcs_percentiles.csv', ['percentile', 'mcs_index'], zip(q, values), comments))

    if report.confusion is not None:
        names = report.detector_names
        rows = [[f'best_{name}'] + list(row) for name, row in zip(names, report.confusion)]
        paths.append(write_csv(
            out_dir / f'{prefix}confusion.csv', ['best\\selected'] + names, rows, comments,
        ))
    return paths


def write_slots(run, out_dir: Path, prefix: str = '') -> Path:
    """One row per (drop, slot, detector, UE)"""
    cfg = run.config
    names = [spec.name for spec in cfg.detectors]
    header = [
        'drop', 'slot', 'detector', 'selected', 'ue', 'mcs_index', 'm', 'rate', 'n', 'payload_bits',
        'codewords', 'decoded', 'bmdr_pred', 'delta', 'p_hat_mean', 'fallback', 'condition_db', 'best_detector',
    ]
    rows = []
    for slot in run.slot_results:
        best = names[slot.best_detector] if slot.best_detector is not None else ''
        for d, ues in enumerate(slot.ues):
            for ue in ues:
                rows.append([
                    slot.drop, slot.slot, names[d], d == slot.detector, ue.ue, ue.mcs_index, ue.m, ue.rate, ue.n,
                    ue.payload_bits, ue.codewords, int(np.sum(ue.ok)), ue.bmdr_pred, ue.delta,
                    None if ue.p_hat is None else float(np.mean(ue.p_hat)), ue.fallback, slot.condition_db, best,
                ])
    return write_csv(Path(out_dir) / f'{prefix}slots.csv', header, rows, _header_comment(run))


def write_abstraction(run, out_dir: Path, prefix: str = '') -> Path:
    """Per-codeword abstraction report of the selected detector"""
    header = ['drop', 'ue', 'tb', 'cb', 'metric', 'p_hat', 'tb_error']
    rows = []
    for slot in run.slot_results:
        for ue in slot.chosen:
            tb_error = 1.0 - float(np.prod(1.0 - ue.p_hat))
            for cb, p in enumerate(ue.p_hat):
                rows.append([slot.drop, ue.ue, slot.slot, cb, ue.bmdr_pred, p, tb_error])
    return write_csv(Path(out_dir) / f'{prefix}abstraction.csv', header, rows, _header_comment(run))


def write_la_trace(run, out_dir: Path) -> Path:
    """Modulation walk of every selection pass"""
    header = ['drop', 'slot', 'detector', 'iteration', 'ue', 'm', 'bmdr', 'threshold', 'reduced']
    rows = [
        [slot.drop, slot.slot, entry['detector'], entry['iteration'], entry['ue'], entry['m'],
         entry['bmdr'], entry['threshold'], entry['reduced']]
        for slot in run.slot_results for entry in slot.trace
    ]
    return write_csv(Path(out_dir) / 'la_trace.csv', header, rows, _header_comment(run))


def agreement(full_run, abstract_run) -> dict:
    """
    Per-UE agreement of a paired full/abstracted run.

    Returns:
        dict with per-UE rows and the 95th/99th percentile of the
        normalized throughput error
    """
    cfg = full_run.config
    rows = []
    for full, abstracted in zip(full_run.drops, abstract_run.drops):
        tp_full = full.throughput(cfg.slots, cfg.t_slot, 'full')
        tp_abs = abstracted.throughput(cfg.slots, cfg.t_slot, 'abstract')
        bler_full = full.ue_bler('full')
        bler_abs = abstracted.ue_bler('abstract')
        for i in range(full.num_ue):
            error = normalized_error([tp_full[i]], [tp_abs[i]])
            rows.append([
                full.drop, i, tp_full[i], tp_abs[i], bler_full[i], bler_abs[i],
                float(error[0]) if error.size else None,
            ])
    errors = np.array([row[-1] for row in rows if row[-1] is not None])
    summary = {
        'am_full_mbps': full_run.report.am,
        'am_abstract_mbps': abstract_run.report.am,
        'am_relative_difference': (
            abs(full_run.report.am - abstract_run.report.am) / full_run.report.am if full_run.report.am > 0 else None
        ),
        'gm_full_mbps': full_run.report.gm,
        'gm_abstract_mbps': abstract_run.report.gm,
        'error_p95': float(np.percentile(errors, 95)) if errors.size else None,
        'error_p99': float(np.percentile(errors, 99)) if errors.size else None,
    }
    return {'rows': rows, 'summary': summary}


def write_agreement(result: dict, out_dir: Path, comments=()) -> list:
    out_dir = Path(out_dir)
    header = ['drop', 'ue', 'tp_full_mbps', 'tp_abstract_mbps', 'bler_full', 'bler_abstract', 'normalized_error']
    return [
        write_csv(out_dir / 'agreement.csv', header, result['rows'], comments),
        write_csv(out_dir / 'agreement_summary.csv', ['metric', 'value'], result['summary'].items(), comments),
    ]


def write_manifest(out_dir: Path, command: str, config, seed: int, workers: int, files) -> Path:
    """run_manifest.json: what ran, with which inputs, and what it wrote"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        'command': command,
        'scenario': config.name,
        'scenario_path': str(config.path) if config.path else None,
        'seed': seed,
        'workers': workers,
        'config_hash': config.config_hash,
        'code_version': settings.LINKSIM_VERSION,
        'files': sorted(Path(f).name for f in files),
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n')
    return path


# ---------------------------------------------------------------------------
# Run registry
# ---------------------------------------------------------------------------

def start_run(command: str, config, seed: int, workers: int, out_dir: Path):
    """Create a SimulationRun row; None when the database is not migrated"""
    try:
        return SimulationRun.objects.create(
            command=command,
            scenario_name=config.name,
            scheme=getattr(config, 'scheme', ''),
            seed=seed,
            workers=workers,
            config_hash=config.config_hash,
            code_version=settings.LINKSIM_VERSION,
            output_dir=str(out_dir),
        )
    except DatabaseError as exc:
        logger.warning("Run not recorded in the database (%s); run python manage.py migrate", exc)
        return None


def finish_run(record, summary=None, files=(), error: str = None):
    if record is None:
        return
    try:
        if error is not None:
            record.mark_failed(error)
        else:
            record.mark_completed(_json_safe(summary or {}), [str(f) for f in files])
    except DatabaseError as exc:
        logger.warning("Could not update run %s: %s", record.pk, exc)


def _json_safe(summary: dict) -> dict:
    safe = {}
    for key, value in summary.items():
        if isinstance(value, (np.floating, float)):
            value = float(value)
            safe[key] = value if np.isfinite(value) else None
        elif isinstance(value, np.integer):
            safe[key] = int(value)
        else:
            safe[key] = value
    return safe
