import logging
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image, ImageDraw  # noqa: E402
from skimage.segmentation import mark_boundaries  # noqa: E402

from spikestrack.core.imaging import BoundingBox, Frame  # noqa: E402
from spikestrack.services.evaluation import PRECISION_THRESHOLDS, SUCCESS_THRESHOLDS, EvalCurves  # noqa: E402

logger = logging.getLogger(__name__)

BOX_COLOR = (255, 220, 0)
OCCLUDED_COLOR = (255, 60, 60)
VOTE_COLOR = (0, 230, 255)
MATCH_COLOR = (255, 0, 200)
KEYPOINT_COLOR = (0, 255, 0)


def _box(draw: ImageDraw.ImageDraw, box: BoundingBox, color):
    draw.rectangle([box.x, box.y, box.x + box.w - 1, box.y + box.h - 1], outline=color, width=2)


def _cross(draw: ImageDraw.ImageDraw, x: float, y: float, color, size: int = 2):
    draw.line([x - size, y, x + size, y], fill=color)
    draw.line([x, y - size, x, y + size], fill=color)


def draw_outcome(frame: Frame, outcome, path: str):
    """Tracking overlay: estimated box, votes and the centers of matched query SPiKeS."""
    image = Image.fromarray(frame.pixels)
    draw = ImageDraw.Draw(image)
    for (x, y), _ in outcome.votes:
        _cross(draw, x, y, VOTE_COLOR)
    for x, y in outcome.matched_centers:
        draw.ellipse([x - 1.5, y - 1.5, x + 1.5, y + 1.5], fill=MATCH_COLOR)
    _box(draw, outcome.bbox, OCCLUDED_COLOR if outcome.occluded else BOX_COLOR)
    image.save(path, format="PNG")


def draw_structure(frame: Frame, labels: np.ndarray, keypoints: Sequence, path: str,
                   box: Optional[BoundingBox] = None):
    """Superpixel boundaries in black with keypoint markers."""
    marked = mark_boundaries(frame.pixels, labels, color=(0, 0, 0), mode="inner")
    image = Image.fromarray(np.clip(np.round(marked * 255.0), 0, 255).astype(np.uint8))
    draw = ImageDraw.Draw(image)
    for k in keypoints:
        _cross(draw, k.x, k.y, KEYPOINT_COLOR)
    if box is not None:
        _box(draw, box, BOX_COLOR)
    image.save(path, format="PNG")


def plot_curves(curves: Dict[str, EvalCurves], path: str):
    """Precision and success plots, one line per entry of `curves`, saved as SVG."""
    fig, (ax_p, ax_s) = plt.subplots(1, 2, figsize=(10, 4))
    for name, c in curves.items():
        ax_p.plot(PRECISION_THRESHOLDS, c.precision, label=f"{name} [{c.precision_at_20:.3f}]")
        ax_s.plot(SUCCESS_THRESHOLDS, c.success, label=f"{name} [{c.auc:.3f}]")
    ax_p.set_title("Precision plot")
    ax_p.set_xlabel("Location error threshold (px)")
    ax_p.set_ylabel("Precision")
    ax_s.set_title("Success plot")
    ax_s.set_xlabel("Overlap threshold")
    ax_s.set_ylabel("Success rate")
    for ax in (ax_p, ax_s):
        ax.set_ylim(0.0, 1.0)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.debug(f"Saved curves to {path}.")
