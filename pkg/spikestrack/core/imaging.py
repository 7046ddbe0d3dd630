"""Frames, boxes and the HSV colour statistics shared by every stage of the tracker.

Coordinates are continuous pixels: pixel (col, row) covers [col, col+1) x [row, row+1)
and its center is (col + 0.5, row + 0.5). Region membership tests use pixel centers.
"""
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from skimage.color import rgb2hsv

from spikestrack.core.exceptions import EmptyRegion

HUE_BINS = 6
SAT_BINS = 6
VAL_BINS = 6
N_BINS = HUE_BINS * SAT_BINS * VAL_BINS

Point = Tuple[float, float]


@dataclass
class Frame:
    pixels: np.ndarray  # (height, width, 3) uint8, RGB
    index: int = 0

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"Frame pixels must have shape (h, w, 3), got {pixels.shape}")
        if pixels.shape[0] == 0 or pixels.shape[1] == 0:
            raise ValueError("Frame must have positive width and height")
        self.pixels = np.ascontiguousarray(pixels, dtype=np.uint8)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def dims(self) -> Tuple[int, int]:
        return self.width, self.height

    def crop(self, x0: int, y0: int, x1: int, y1: int) -> "Frame":
        return Frame(self.pixels[y0:y1, x0:x1], self.index)


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"BoundingBox needs positive dimensions, got {self.w}x{self.h}")

    @classmethod
    def from_center(cls, center: Point, dims: Tuple[float, float]) -> "BoundingBox":
        w, h = dims
        return cls(center[0] - w / 2.0, center[1] - h / 2.0, w, h)

    @property
    def center(self) -> Point:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @property
    def dims(self) -> Tuple[float, float]:
        return self.w, self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def inflate(self, factor: float) -> "BoundingBox":
        return BoundingBox.from_center(self.center, (self.w * factor, self.h * factor))

    def contains(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        return (xs >= self.x) & (xs < self.x + self.w) & (ys >= self.y) & (ys < self.y + self.h)

    def pixel_mask(self, width: int, height: int) -> np.ndarray:
        """Boolean (height, width) mask of the pixels whose centers fall inside the box."""
        cols = np.arange(width) + 0.5
        rows = np.arange(height) + 0.5
        inside_x = (cols >= self.x) & (cols < self.x + self.w)
        inside_y = (rows >= self.y) & (rows < self.y + self.h)
        return inside_y[:, None] & inside_x[None, :]

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.x, self.y, self.w, self.h


def rgb_to_hsv(r: int, g: int, b: int) -> Tuple[float, float, float]:
    """Hexcone HSV of one 8-bit RGB triple: hue in degrees [0, 360), s and v in [0, 1]."""
    h, s, v = hsv_array(np.array([[[r, g, b]]], dtype=np.uint8))[0, 0]
    return float(h), float(s), float(v)


def hsv_array(pixels: np.ndarray) -> np.ndarray:
    """Per-pixel HSV with hue in degrees; grey pixels (s = 0) get hue 0."""
    hsv = rgb2hsv(np.asarray(pixels, dtype=np.uint8)).astype(np.float64)
    hsv[..., 0] *= 360.0
    return hsv


def hsv_bin_map(pixels: np.ndarray) -> np.ndarray:
    """Histogram bin index of every pixel, floor(h/60)*36 + floor(6s)*6 + floor(6v)."""
    hsv = hsv_array(pixels)
    h_bin = np.minimum((hsv[..., 0] / 60.0).astype(np.int64), HUE_BINS - 1)
    s_bin = np.minimum((hsv[..., 1] * SAT_BINS).astype(np.int64), SAT_BINS - 1)
    v_bin = np.minimum((hsv[..., 2] * VAL_BINS).astype(np.int64), VAL_BINS - 1)
    return h_bin * (SAT_BINS * VAL_BINS) + s_bin * VAL_BINS + v_bin


def histogram(frame: Frame, region: Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Normalized 6x6x6 HSV histogram of a pixel region.

    `region` is either a boolean (height, width) mask or a (rows, cols) pair of index arrays.
    """
    if isinstance(region, tuple):
        rows, cols = (np.asarray(a, dtype=np.int64) for a in region)
    else:
        rows, cols = np.nonzero(np.asarray(region, dtype=bool))
    if rows.size == 0:
        raise EmptyRegion("Cannot build a histogram of an empty region")
    bins = hsv_bin_map(frame.pixels[rows, cols][None, ...])[0]
    counts = np.bincount(bins, minlength=N_BINS).astype(np.float64)
    return counts / counts.sum()


def label_histograms(bin_map: np.ndarray, labels: np.ndarray, n_labels: int) -> np.ndarray:
    """Normalized histograms of every label of a label map at once, shape (n_labels, 216)."""
    flat = labels.ravel().astype(np.int64) * N_BINS + bin_map.ravel()
    counts = np.bincount(flat, minlength=n_labels * N_BINS).astype(np.float64)
    counts = counts.reshape(n_labels, N_BINS)
    totals = counts.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        raise EmptyRegion("Label map contains a label without pixels")
    return counts / totals


def bhattacharyya(h_i: np.ndarray, h_j: np.ndarray) -> float:
    """Bhattacharyya distance sqrt(1 - BC), in [0, 1]."""
    bc = float(np.sum(np.sqrt(h_i * h_j)))
    return float(np.sqrt(min(1.0, max(0.0, 1.0 - bc))))


def bhattacharyya_matrix(hists_a: np.ndarray, hists_b: np.ndarray) -> np.ndarray:
    """All-pairs Bhattacharyya distances between two stacks of histograms."""
    bc = np.sqrt(hists_a) @ np.sqrt(hists_b).T
    return np.sqrt(np.clip(1.0 - bc, 0.0, 1.0))


def overlap_ratio(b1: BoundingBox, b2: BoundingBox) -> float:
    """Intersection over union of two boxes."""
    if b1 == b2:
        return 1.0
    ix = max(0.0, min(b1.x + b1.w, b2.x + b2.w) - max(b1.x, b2.x))
    iy = max(0.0, min(b1.y + b1.h, b2.y + b2.h) - max(b1.y, b2.y))
    inter = ix * iy
    if inter <= 0.0:
        return 0.0
    return min(1.0, inter / (b1.area + b2.area - inter))


def center_distance(a: Point, b: Point) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))
