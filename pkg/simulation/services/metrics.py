"""
Run metrics: per-UE throughput, its arithmetic and geometric means,
CER and MCS distributions, and detector-selection accuracy.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy import stats

from core.errors import InvalidArgument

logger = logging.getLogger(__name__)

MCS_PERCENTILES = (5, 10, 25, 50, 75, 90, 95)
CONFIDENCE_LEVEL = 0.9


def get_gm_floor() -> float:
    return float(settings.LINKSIM_GM_FLOOR_MBPS)


def arithmetic_mean(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InvalidArgument("Mean of an empty set")
    return float(values.mean())


def geometric_mean(values, floor: float = None) -> float:
    """exp(mean log x) with x floored, so a zero throughput does not collapse the mean; never above the AM"""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InvalidArgument("Mean of an empty set")
    floor = get_gm_floor() if floor is None else floor
    floored = float(np.exp(np.mean(np.log(np.maximum(values, floor)))))
    return min(floored, float(values.mean()))


def cdf_curve(values) -> tuple:
    """
    Empirical distribution: (x, fraction of values <= x) at every distinct value.
    """
    values = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    values = values[np.isfinite(values)]
    if values.size == 0:
        return np.zeros(0), np.zeros(0)
    points = np.unique(values)
    fractions = np.searchsorted(values, points, side='right') / values.size
    return points, fractions


def percentile_curve(values, q=MCS_PERCENTILES) -> tuple:
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise InvalidArgument("Percentiles of an empty set")
    return np.asarray(q, dtype=np.float64), np.percentile(values, q)


def confidence_interval(values, level: float = CONFIDENCE_LEVEL) -> tuple:
    """Student-t interval (low, high) of the mean; degenerate for fewer than two values"""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    if values.size < 2:
        return mean, mean
    half = stats.t.ppf(0.5 + level / 2.0, df=values.size - 1) * values.std(ddof=1) / np.sqrt(values.size)
    return mean - float(half), mean + float(half)


def confusion_matrix(selected, best, n_detectors: int) -> np.ndarray:
    """Fraction of slots with (best detector = row, selected detector = column)"""
    selected = np.asarray(selected, dtype=np.int64)
    best = np.asarray(best, dtype=np.int64)
    if selected.size == 0:
        raise InvalidArgument("Confusion matrix of an empty selection")
    matrix = np.zeros((n_detectors, n_detectors))
    np.add.at(matrix, (best, selected), 1.0)
    return matrix / selected.size


def normalized_error(reference, estimate) -> np.ndarray:
    """|reference - estimate| / reference where the reference is positive"""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    positive = reference > 0
    return np.abs(reference[positive] - estimate[positive]) / reference[positive]


@dataclass
class MetricsReport:
    """Summary of a run; per-UE arrays have one row per drop"""
    mode: str
    scheme: str
    detector_names: list
    throughput: np.ndarray
    cer: np.ndarray
    mcs_indices: np.ndarray
    am: float
    gm: float
    am_ci: tuple
    gm_ci: tuple
    cer_curve: tuple
    mcs_curve: tuple
    confusion: np.ndarray = None
    selection_accuracy: float = None
    detector_share: dict = field(default_factory=dict)

    @property
    def users(self) -> int:
        return self.throughput.size

    def summary(self) -> dict:
        data = {
            'mode': self.mode,
            'scheme': self.scheme,
            'users': self.users,
            'am_mbps': self.am,
            'gm_mbps': self.gm,
            'am_ci_low': self.am_ci[0],
            'am_ci_high': self.am_ci[1],
            'gm_ci_low': self.gm_ci[0],
            'gm_ci_high': self.gm_ci[1],
            'mean_cer': float(np.nanmean(self.cer)) if np.any(np.isfinite(self.cer)) else None,
        }
        if self.selection_accuracy is not None:
            data['selection_accuracy'] = self.selection_accuracy
        for name, share in self.detector_share.items():
            data[f'share_{name}'] = share
        return data


def compute_metrics(results, slots: int, t_slot: float, mode: str = 'full',
                    scheme: str = '', detector_names=()) -> MetricsReport:
    """
    Metrics over the drops of a run.

    Args:
        results: list of DropResult
        slots: slots per drop T
        t_slot: slot duration in seconds
        mode: 'full' (realized decodes) or 'abstract' (expected decodes)

    Returns:
        MetricsReport
    """
    if not results:
        raise InvalidArgument("Metrics need at least one drop")
    throughput = np.array([r.throughput(slots, t_slot, mode) for r in results])
    cer = np.array([r.ue_cer(mode) for r in results])
    mcs = np.concatenate([r.mcs_indices() for r in results])

    per_drop_am = [arithmetic_mean(tp) for tp in throughput]
    per_drop_gm = [geometric_mean(tp) for tp in throughput]

    selected, best = [], []
    counts = np.zeros(len(detector_names))
    for result in results:
        for slot in result.slots:
            counts[slot.detector] += 1
            if slot.best_detector is not None:
                selected.append(slot.detector)
                best.append(slot.best_detector)
    confusion = accuracy = None
    if selected and len(detector_names) > 1:
        confusion = confusion_matrix(selected, best, len(detector_names))
        accuracy = float(np.trace(confusion))
    share = {}
    if counts.sum():
        share = {name: float(c / counts.sum()) for name, c in zip(detector_names, counts)}

    report = MetricsReport(
        mode=mode,
        scheme=scheme,
        detector_names=list(detector_names),
        throughput=throughput,
        cer=cer,
        mcs_indices=mcs,
        am=arithmetic_mean(throughput),
        gm=geometric_mean(throughput),
        am_ci=confidence_interval(per_drop_am),
        gm_ci=confidence_interval(per_drop_gm),
        cer_curve=cdf_curve(cer),
        mcs_curve=percentile_curve(mcs),
        confusion=confusion,
        selection_accuracy=accuracy,
        detector_share=share,
    )
    logger.info("%s %s: AM %.4f Mbps, GM %.4f Mbps over %d users", mode, scheme, report.am, report.gm, report.users)
    return report
