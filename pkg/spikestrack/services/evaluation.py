"""One-pass evaluation: run the tracker from the first groundtruth box and score every frame."""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from spikestrack.core.config import TrackerConfig
from spikestrack.core.exceptions import SpikesError
from spikestrack.core.imaging import BoundingBox, Point, center_distance, overlap_ratio
from spikestrack.services.tracker import SpikesTracker
from spikestrack.utils.sequence_io import SequenceSpec, load_sequence

logger = logging.getLogger(__name__)

PRECISION_THRESHOLDS = np.arange(0, 51, dtype=np.float64)
SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 101)
RANKING_THRESHOLD = 20


@dataclass
class EvalCurves:
    precision: np.ndarray
    success: np.ndarray
    precision_at_20: float
    auc: float
    frames: int


@dataclass
class SequenceResult:
    name: str
    boxes: List[BoundingBox]
    errors: np.ndarray
    overlaps: np.ndarray
    curves: EvalCurves


@dataclass
class EvalReport:
    sequences: Dict[str, SequenceResult] = field(default_factory=dict)
    failures: Dict[str, str] = field(default_factory=dict)
    pooled: Optional[EvalCurves] = None


def cle(pred_center: Point, gt_center: Point) -> float:
    return center_distance(pred_center, gt_center)


def frame_scores(predictions: Sequence[BoundingBox], groundtruth: Sequence[BoundingBox]) -> Tuple[np.ndarray, np.ndarray]:
    """Center location errors and overlap ratios, frame by frame."""
    if len(predictions) != len(groundtruth):
        raise ValueError(f"{len(predictions)} predictions for {len(groundtruth)} groundtruth boxes")
    errors = np.array([cle(p.center, g.center) for p, g in zip(predictions, groundtruth)], dtype=np.float64)
    overlaps = np.array([overlap_ratio(p, g) for p, g in zip(predictions, groundtruth)], dtype=np.float64)
    return errors, overlaps


def compute_curves(errors: np.ndarray, overlaps: np.ndarray) -> EvalCurves:
    errors = np.asarray(errors, dtype=np.float64)
    overlaps = np.asarray(overlaps, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("Cannot compute curves without frames")
    precision = (errors[None, :] <= PRECISION_THRESHOLDS[:, None]).mean(axis=1)
    success = (overlaps[None, :] > SUCCESS_THRESHOLDS[:, None]).mean(axis=1)
    return EvalCurves(
        precision=precision,
        success=success,
        precision_at_20=float(precision[RANKING_THRESHOLD]),
        auc=float(success.mean()),
        frames=int(errors.size),
    )


def pool_results(results: Sequence[SequenceResult]) -> Optional[EvalCurves]:
    """Frame-weighted curves over all sequences."""
    if not results:
        return None
    return compute_curves(np.concatenate([r.errors for r in results]), np.concatenate([r.overlaps for r in results]))


def run_sequence(sequence: SequenceSpec, config: TrackerConfig, oracle: bool = False) -> SequenceResult:
    if oracle:
        boxes = list(sequence.groundtruth)
    else:
        tracker = SpikesTracker(config)
        boxes = [outcome.bbox for outcome in tracker.track(sequence.frames(), sequence.init_box)]
    errors, overlaps = frame_scores(boxes, sequence.groundtruth)
    curves = compute_curves(errors, overlaps)
    logger.info(f"Sequence {sequence.name}: precision@20 {curves.precision_at_20:.3f}, AUC {curves.auc:.3f}.")
    return SequenceResult(sequence.name, boxes, errors, overlaps, curves)


def _evaluate_one(entry: Union[str, SequenceSpec], config: TrackerConfig, oracle: bool,
                  one_indexed: bool) -> Tuple[str, Union[SequenceResult, str]]:
    name = entry.name if isinstance(entry, SequenceSpec) else str(entry)
    try:
        sequence = entry if isinstance(entry, SequenceSpec) else load_sequence(entry, one_indexed)
        name = sequence.name
        return name, run_sequence(sequence, config, oracle)
    except SpikesError as e:
        logger.error(f"Sequence {name} skipped: {e}")
        return name, str(e)


def run_ope(config: TrackerConfig, sequences: Sequence[Union[str, SequenceSpec]], oracle: bool = False,
            threads: int = 1, one_indexed: bool = False) -> EvalReport:
    """Evaluates every sequence independently; a failing sequence is reported, not fatal."""
    report = EvalReport()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda s: _evaluate_one(s, config, oracle, one_indexed), sequences))
    else:
        outcomes = [_evaluate_one(s, config, oracle, one_indexed) for s in sequences]

    for name, result in outcomes:
        if isinstance(result, SequenceResult):
            report.sequences[name] = result
        else:
            report.failures[name] = result
    report.pooled = pool_results(list(report.sequences.values()))
    if report.failures:
        logger.warning(f"{len(report.failures)} of {len(outcomes)} sequences failed to evaluate.")
    return report


def write_curves_csv(curves: EvalCurves, path: str):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "threshold", "value"])
        for t, v in zip(PRECISION_THRESHOLDS, curves.precision):
            writer.writerow(["precision", f"{t:g}", f"{v:.6f}"])
        for t, v in zip(SUCCESS_THRESHOLDS, curves.success):
            writer.writerow(["success", f"{t:.2f}", f"{v:.6f}"])


def write_summary_csv(report: EvalReport, path: str):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sequence", "precision_at_20", "auc"])
        for name, result in report.sequences.items():
            writer.writerow([name, f"{result.curves.precision_at_20:.6f}", f"{result.curves.auc:.6f}"])
        if report.pooled is not None:
            writer.writerow(["ALL", f"{report.pooled.precision_at_20:.6f}", f"{report.pooled.auc:.6f}"])
