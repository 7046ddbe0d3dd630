import logging
import math
from dataclasses import dataclass, field
from typing import List, Protocol, Tuple

import numpy as np
from PIL import Image
from skimage.color import rgb2lab
from skimage.measure import label as connected_components

from spikestrack.core.imaging import Frame, hsv_bin_map, label_histograms

logger = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 10
DEFAULT_COMPACTNESS = 10.0
MIN_SUPERPIXEL_AREA = 16


@dataclass(frozen=True)
class SegmentationPlan:
    n_superpixels: int
    diameter: float


@dataclass
class Superpixel:
    id: int
    center: Tuple[float, float]
    pixels: np.ndarray  # flat indices row * width + col
    histogram: np.ndarray

    @property
    def area(self) -> int:
        return int(self.pixels.size)


@dataclass
class Segmentation:
    labels: np.ndarray  # (height, width) int32, values 0..n-1
    superpixels: List[Superpixel] = field(default_factory=list)

    @property
    def centers(self) -> np.ndarray:
        if not self.superpixels:
            return np.zeros((0, 2))
        return np.array([sp.center for sp in self.superpixels], dtype=np.float64)

    @property
    def histograms(self) -> np.ndarray:
        if not self.superpixels:
            return np.zeros((0, 0))
        return np.stack([sp.histogram for sp in self.superpixels])

    def label_at(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Superpixel id under continuous positions; -1 outside the label map."""
        h, w = self.labels.shape
        cols = np.floor(np.asarray(xs, dtype=np.float64)).astype(np.int64)
        rows = np.floor(np.asarray(ys, dtype=np.float64)).astype(np.int64)
        inside = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
        out = np.full(cols.shape, -1, dtype=np.int64)
        out[inside] = self.labels[rows[inside], cols[inside]]
        return out


def plan_segmentation(frame_dims: Tuple[int, int], bbox_dims: Tuple[float, float]) -> SegmentationPlan:
    """N = max(1, round(wh / (30 w_B h_B))) superpixels of diameter sqrt(wh / N)."""
    w, h = frame_dims
    bw, bh = bbox_dims
    n = max(1, int(round(w * h / (30.0 * bw * bh))))
    return SegmentationPlan(n_superpixels=n, diameter=math.sqrt(w * h / n))


def plan_for_box(frame_dims: Tuple[int, int], bbox_dims: Tuple[float, float],
                 per_box: int = 30) -> SegmentationPlan:
    """Plan with about `per_box` superpixels inside a box of the given dimensions."""
    w, h = frame_dims
    bw, bh = bbox_dims
    n = int(round(per_box * w * h / (bw * bh)))
    n = max(1, min(n, (w * h) // MIN_SUPERPIXEL_AREA))
    return SegmentationPlan(n_superpixels=n, diameter=math.sqrt(w * h / n))


def plan_for_diameter(frame_dims: Tuple[int, int], diameter: float) -> SegmentationPlan:
    """Plan for a sub-window that must keep the superpixel size of the full frame."""
    w, h = frame_dims
    n = max(1, int(round(w * h / (diameter * diameter))))
    return SegmentationPlan(n_superpixels=n, diameter=diameter)


def _grid(width: int, height: int, n: int) -> Tuple[int, int]:
    step = math.sqrt(width * height / n)
    nx = min(width, max(1, int(round(width / step))))
    ny = min(height, max(1, int(round(height / step))))
    return nx, ny


def _gradient_magnitude(lab: np.ndarray) -> np.ndarray:
    padded = np.pad(lab, ((1, 1), (1, 1), (0, 0)), mode="edge")
    dx = padded[1:-1, 2:] - padded[1:-1, :-2]
    dy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    return np.sum(dx * dx, axis=2) + np.sum(dy * dy, axis=2)


def _seed_clusters(lab: np.ndarray, nx: int, ny: int) -> np.ndarray:
    """Grid seeds moved to the lowest-gradient pixel of their 3x3 neighbourhood."""
    height, width = lab.shape[:2]
    grad = _gradient_magnitude(lab)
    rows = ((np.arange(ny) + 0.5) * height / ny).astype(np.int64)
    cols = ((np.arange(nx) + 0.5) * width / nx).astype(np.int64)
    seed_r, seed_c = np.meshgrid(rows, cols, indexing="ij")
    seed_r = seed_r.ravel()
    seed_c = seed_c.ravel()

    # center first so that flat regions keep the grid position
    offsets = [(0, 0)] + [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    candidates_r = np.stack([np.clip(seed_r + dr, 0, height - 1) for dr, _ in offsets])
    candidates_c = np.stack([np.clip(seed_c + dc, 0, width - 1) for _, dc in offsets])
    best = np.argmin(grad[candidates_r, candidates_c], axis=0)
    pick = np.arange(seed_r.size)
    r = candidates_r[best, pick]
    c = candidates_c[best, pick]

    clusters = np.empty((r.size, 5), dtype=np.float64)
    clusters[:, 0] = r
    clusters[:, 1] = c
    clusters[:, 2:] = lab[r, c]
    return clusters


def _candidate_labels(width: int, height: int, nx: int, ny: int) -> np.ndarray:
    """For every pixel, the ids of the clusters seeded in its own and the 8 adjacent grid cells.

    Rows are ordered by ascending cluster id so that argmin resolves ties to the lowest id.
    """
    gy = (np.arange(height) * ny // height)[:, None]
    gx = (np.arange(width) * nx // width)[None, :]
    cands = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            cy = gy + dy
            cx = gx + dx
            valid = (cy >= 0) & (cy < ny) & (cx >= 0) & (cx < nx)
            cands.append(np.where(valid, cy * nx + cx, -1))
    return np.stack([np.broadcast_to(c, (height, width)) for c in cands])


def _slic_labels(lab: np.ndarray, n: int, compactness: float, iterations: int) -> np.ndarray:
    height, width = lab.shape[:2]
    nx, ny = _grid(width, height, n)
    step = math.sqrt(width * height / (nx * ny))
    clusters = _seed_clusters(lab, nx, ny)
    n_clusters = clusters.shape[0]

    cands = _candidate_labels(width, height, nx, ny)
    valid = cands >= 0
    safe = np.where(valid, cands, 0)
    rows = np.arange(height, dtype=np.float32)[:, None]
    cols = np.arange(width, dtype=np.float32)[None, :]
    spatial_weight = (compactness / step) ** 2
    flat_lab = lab.reshape(-1, 3)
    flat_rows = np.repeat(np.arange(height, dtype=np.float64), width)
    flat_cols = np.tile(np.arange(width, dtype=np.float64), height)

    labels = np.zeros((height, width), dtype=np.int64)
    for _ in range(iterations):
        c = clusters.astype(np.float32)[safe]  # (9, h, w, 5)
        d_color = np.sum((lab[None, ...] - c[..., 2:]) ** 2, axis=-1)
        d_space = (rows[None, ...] - c[..., 0]) ** 2 + (cols[None, ...] - c[..., 1]) ** 2
        dist = np.where(valid, d_color + spatial_weight * d_space, np.inf)
        best = np.argmin(dist, axis=0)
        labels = np.take_along_axis(safe, best[None, ...], axis=0)[0]

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=n_clusters).astype(np.float64)
        filled = counts > 0
        sums = np.stack([
            np.bincount(flat, weights=flat_rows, minlength=n_clusters),
            np.bincount(flat, weights=flat_cols, minlength=n_clusters),
            np.bincount(flat, weights=flat_lab[:, 0], minlength=n_clusters),
            np.bincount(flat, weights=flat_lab[:, 1], minlength=n_clusters),
            np.bincount(flat, weights=flat_lab[:, 2], minlength=n_clusters),
        ], axis=1)
        clusters[filled] = sums[filled] / counts[filled, None]
    return labels


def enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Keeps the largest 4-connected piece of every label and merges the other pieces
    into the largest adjacent superpixel. Returns consecutive labels 0..n-1."""
    components = connected_components(labels, background=-1, connectivity=1)
    n_comp = int(components.max()) + 1
    sizes = np.bincount(components.ravel(), minlength=n_comp)
    owner = np.full(n_comp, -1, dtype=np.int64)
    owner[components.ravel()] = labels.ravel()

    # largest component of each label survives, lowest component id on ties
    order = np.lexsort((np.arange(n_comp), -sizes, owner))
    kept = np.zeros(n_comp, dtype=bool)
    seen = set()
    for comp in order:
        if comp == 0 or owner[comp] < 0:
            continue
        if owner[comp] not in seen:
            seen.add(owner[comp])
            kept[comp] = True

    orphans = [int(c) for c in np.nonzero(~kept)[0] if c != 0 and sizes[c] > 0]
    if orphans:
        pairs = np.concatenate([
            np.stack([components[:, :-1].ravel(), components[:, 1:].ravel()], axis=1),
            np.stack([components[:-1, :].ravel(), components[1:, :].ravel()], axis=1),
        ])
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        pairs = np.unique(np.concatenate([pairs, pairs[:, ::-1]]), axis=0)
        neighbours = {}
        for a, b in pairs:
            neighbours.setdefault(int(a), []).append(int(b))

        label_area = np.bincount(owner[kept], weights=sizes[kept], minlength=int(labels.max()) + 1)
        pending = sorted(orphans)
        while pending:
            progressed = False
            remaining = []
            for comp in pending:
                targets = [nb for nb in neighbours.get(comp, []) if kept[nb]]
                if not targets:
                    remaining.append(comp)
                    continue
                target = min(targets, key=lambda nb: (-label_area[owner[nb]], owner[nb]))
                owner[comp] = owner[target]
                kept[comp] = True
                label_area[owner[comp]] += sizes[comp]
                progressed = True
            if not progressed:
                # isolated orphans (no adjacent survivor) keep their own label
                for comp in remaining:
                    kept[comp] = True
                break
            pending = remaining

    merged = owner[components]
    _, consecutive = np.unique(merged, return_inverse=True)
    return consecutive.reshape(labels.shape).astype(np.int32)


def build_superpixels(frame: Frame, labels: np.ndarray) -> List[Superpixel]:
    n = int(labels.max()) + 1
    height, width = labels.shape
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=n)
    xs = np.bincount(flat, weights=np.tile(np.arange(width) + 0.5, height), minlength=n) / counts
    ys = np.bincount(flat, weights=np.repeat(np.arange(height) + 0.5, width), minlength=n) / counts
    hists = label_histograms(hsv_bin_map(frame.pixels), labels, n)
    order = np.argsort(flat, kind="stable")
    members = np.split(order, np.cumsum(counts)[:-1])
    return [
        Superpixel(id=i, center=(float(xs[i]), float(ys[i])), pixels=members[i], histogram=hists[i])
        for i in range(n)
    ]


def segment(frame: Frame, plan: SegmentationPlan, compactness: float = DEFAULT_COMPACTNESS,
            iterations: int = DEFAULT_ITERATIONS) -> Segmentation:
    """SLIC oversegmentation of a frame into about `plan.n_superpixels` connected regions."""
    n = min(plan.n_superpixels, frame.width * frame.height)
    if n <= 1:
        labels = np.zeros((frame.height, frame.width), dtype=np.int32)
    else:
        lab = rgb2lab(frame.pixels).astype(np.float32)
        labels = enforce_connectivity(_slic_labels(lab, n, compactness, iterations))
    superpixels = build_superpixels(frame, labels)
    logger.debug(f"Frame {frame.index}: {len(superpixels)} superpixels (planned {plan.n_superpixels}).")
    return Segmentation(labels=labels, superpixels=superpixels)


def write_label_pgm(labels: np.ndarray, path: str):
    """Writes the label map as a 16-bit PGM for inspection."""
    Image.fromarray(labels.astype(np.int32)).save(path, format="PPM")


class SegmentationBackend(Protocol):
    """Oversegmentation contract used by the tracker."""

    def segment(self, frame: Frame, plan: SegmentationPlan) -> Segmentation:
        ...


class SlicBackend:
    def __init__(self, compactness: float = DEFAULT_COMPACTNESS, iterations: int = DEFAULT_ITERATIONS):
        self.compactness = compactness
        self.iterations = iterations

    def segment(self, frame: Frame, plan: SegmentationPlan) -> Segmentation:
        return segment(frame, plan, self.compactness, self.iterations)
