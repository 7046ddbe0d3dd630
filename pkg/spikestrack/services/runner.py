"""Sequence-level jobs shared by the command line and the HTTP service."""
import csv
import logging
import math
import os
from typing import List, Optional, Sequence

from spikestrack.core.config import TrackerConfig
from spikestrack.core.imaging import BoundingBox
from spikestrack.models.trackingmodels import FrameRecord, ModelSnapshot
from spikestrack.services import evaluation
from spikestrack.services.keypoints import HarrisGradientBackend, KeypointBackend, write_keypoints_csv
from spikestrack.services.segmentation import SegmentationBackend, SegmentationPlan, SlicBackend, write_label_pgm
from spikestrack.services.spikes import build_spikes, write_spikes_jsonl
from spikestrack.services.tracker import SpikesTracker, plan_for
from spikestrack.utils import render
from spikestrack.utils.sequence_io import load_sequence, read_frame, write_boxes_csv

logger = logging.getLogger(__name__)

BOXES_FILE = "boxes.csv"
CURVES_FILE = "curves.csv"
SUMMARY_FILE = "summary.csv"
PLOT_FILE = "curves.svg"


def track_sequence(sequence_dir: str, config: TrackerConfig, output_dir: str,
                   init_box: Optional[BoundingBox] = None, overlay: bool = False,
                   snapshots: bool = False, one_indexed: bool = False,
                   keypoint_backend: Optional[KeypointBackend] = None,
                   segmenter: Optional[SegmentationBackend] = None) -> List[FrameRecord]:
    """Tracks one sequence and writes boxes.csv (plus overlays and model snapshots on request)."""
    sequence = load_sequence(sequence_dir, one_indexed, require_groundtruth=init_box is None)
    init_box = init_box or sequence.init_box
    os.makedirs(output_dir, exist_ok=True)
    overlay_dir = os.path.join(output_dir, "overlays")
    snapshot_dir = os.path.join(output_dir, "snapshots")
    if overlay:
        os.makedirs(overlay_dir, exist_ok=True)
    if snapshots:
        os.makedirs(snapshot_dir, exist_ok=True)

    logger.info(f"Tracking {sequence.name}: {len(sequence)} frames from box {init_box.as_tuple()}.")
    tracker = SpikesTracker(config, keypoint_backend, segmenter)
    records = []
    for frame in sequence.frames():
        outcome = tracker.start(frame, init_box) if frame.index == 0 else tracker.step(frame)
        b = outcome.bbox
        records.append(FrameRecord(frame=frame.index + 1, x=b.x, y=b.y, w=b.w, h=b.h,
                                   occluded=outcome.occluded, n_matches=outcome.n_valid_matches))
        if overlay:
            render.draw_outcome(frame, outcome, os.path.join(overlay_dir, f"{frame.index + 1:04d}.png"))
        if snapshots:
            snap = tracker.model.snapshot(frame.index, outcome.occluded)
            with open(os.path.join(snapshot_dir, f"model_{frame.index + 1:04d}.json"), "w") as handle:
                handle.write(snap.json(indent=2))

    write_boxes_csv(records, os.path.join(output_dir, BOXES_FILE))
    return records


def evaluate_sequences(sequence_dirs: Sequence[str], config: TrackerConfig, output_dir: str,
                       oracle: bool = False, threads: int = 1, svg: bool = False,
                       one_indexed: bool = False) -> evaluation.EvalReport:
    """Runs the one-pass evaluation and writes curves.csv and summary.csv."""
    report = evaluation.run_ope(config, sequence_dirs, oracle=oracle, threads=threads, one_indexed=one_indexed)
    os.makedirs(output_dir, exist_ok=True)
    if report.pooled is not None:
        evaluation.write_curves_csv(report.pooled, os.path.join(output_dir, CURVES_FILE))
    evaluation.write_summary_csv(report, os.path.join(output_dir, SUMMARY_FILE))
    if svg and report.pooled is not None:
        curves = {name: r.curves for name, r in report.sequences.items()}
        curves["ALL"] = report.pooled
        render.plot_curves(curves, os.path.join(output_dir, PLOT_FILE))
    return report


def snapshot_table(snapshot: ModelSnapshot, path: str):
    """One row per model SPiKeS: center, vote, persistence and predictive factor."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["center_x", "center_y", "vote_x", "vote_y", "omega", "phi"])
        for s in snapshot.spikes:
            writer.writerow([f"{s.center[0]:.4f}", f"{s.center[1]:.4f}", f"{s.vote[0]:.4f}", f"{s.vote[1]:.4f}",
                             f"{s.omega:.6f}", f"{s.phi:.6f}"])


def inspect_snapshot(snapshot_path: str, output_dir: str) -> str:
    snapshot = ModelSnapshot.parse_file(snapshot_path)
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, "spikes.csv")
    snapshot_table(snapshot, path)
    return path


def inspect_frame(frame_path: str, config: TrackerConfig, output_dir: str, box: Optional[BoundingBox] = None,
                  n_superpixels: int = 200, keypoint_backend: Optional[KeypointBackend] = None,
                  segmenter: Optional[SegmentationBackend] = None) -> List[str]:
    """Superpixel and keypoint diagnostics of a single image."""
    frame = read_frame(frame_path)
    if box is not None:
        plan = plan_for(frame.dims, box.dims, config)
    else:
        n = max(1, min(n_superpixels, frame.width * frame.height))
        plan = SegmentationPlan(n_superpixels=n, diameter=math.sqrt(frame.width * frame.height / n))
    segmenter = segmenter or SlicBackend(config.compactness, config.slic_iterations)
    segmentation = segmenter.segment(frame, plan)
    backend = keypoint_backend or HarrisGradientBackend.for_diameter(plan.diameter)
    described = backend.describe(frame, backend.detect(frame, config.max_keypoints))
    query = build_spikes(segmentation.superpixels, described.keypoints, config.radius_factor * plan.diameter)

    os.makedirs(output_dir, exist_ok=True)
    written = [
        os.path.join(output_dir, "structure.png"),
        os.path.join(output_dir, "labels.pgm"),
        os.path.join(output_dir, "keypoints.csv"),
        os.path.join(output_dir, "spikes.jsonl"),
    ]
    render.draw_structure(frame, segmentation.labels, described.keypoints, written[0], box)
    write_label_pgm(segmentation.labels, written[1])
    write_keypoints_csv(described.keypoints, written[2])
    write_spikes_jsonl(query, written[3], frame.index)
    logger.info(f"Inspected {frame_path}: {len(segmentation.superpixels)} superpixels, {len(described)} keypoints.")
    return written
