import csv
import logging
import math
from dataclasses import dataclass, field
from typing import List, Protocol, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates, maximum_filter
from scipy.spatial.distance import cdist
from skimage.color import rgb2gray
from skimage.feature import corner_harris

from spikestrack.core.imaging import Frame

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

ORIENTATION_BINS = 36
ORIENTATION_RADIUS = 8
ORIENTATION_SIGMA = 4.0

DESCRIPTOR_WIDTH = 16  # samples per side of the rotated window
DESCRIPTOR_CELLS = 4
DESCRIPTOR_BINS = 8
DESCRIPTOR_LENGTH = DESCRIPTOR_CELLS * DESCRIPTOR_CELLS * DESCRIPTOR_BINS
DESCRIPTOR_CLIP = 0.2
# half diagonal of the rotated window plus one pixel of interpolation support
DESCRIPTOR_MARGIN = int(math.ceil(DESCRIPTOR_WIDTH / 2.0 * math.sqrt(2.0))) + 1

HARRIS_K = 0.05
HARRIS_SIGMA = 1.0
RELATIVE_THRESHOLD = 0.01
ABSOLUTE_THRESHOLD = 1e-6

SINGLE_CANDIDATE_CAP = 0.7


@dataclass
class Keypoint:
    x: float
    y: float
    orientation: float  # radians in [0, 2pi)
    response: float
    scale: float = 1.0

    @property
    def position(self) -> Tuple[float, float]:
        return self.x, self.y


@dataclass(frozen=True)
class KeypointMatch:
    index_a: int
    index_b: int
    distance: float


@dataclass
class DescribedKeypoints:
    keypoints: List[Keypoint]
    descriptors: np.ndarray  # (n, 128)
    dropped: List[int] = field(default_factory=list)

    @property
    def positions(self) -> np.ndarray:
        if not self.keypoints:
            return np.zeros((0, 2))
        return np.array([kp.position for kp in self.keypoints], dtype=np.float64)

    @property
    def orientations(self) -> np.ndarray:
        return np.array([kp.orientation for kp in self.keypoints], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.keypoints)


class KeypointBackend(Protocol):
    """Detector/descriptor contract used by the tracker."""

    def detect(self, frame: Frame, max_keypoints: int) -> List[Keypoint]:
        ...

    def describe(self, frame: Frame, keypoints: Sequence[Keypoint]) -> DescribedKeypoints:
        ...


def _gray(frame: Frame) -> np.ndarray:
    return rgb2gray(frame.pixels)


def _gradients(gray: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    smooth = gaussian_filter(gray, 1.0)
    gy, gx = np.gradient(smooth)
    return gx, gy


def _sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    # continuous positions are pixel-centered, array coordinates are not
    return map_coordinates(image, [ys - 0.5, xs - 0.5], order=1, mode="nearest")


def normalize_angle(theta):
    return np.mod(theta, TWO_PI)


def dominant_orientations(gx: np.ndarray, gy: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Peak of the smoothed, magnitude-weighted gradient orientation histogram around each point."""
    if positions.shape[0] == 0:
        return np.zeros(0)
    offsets = np.arange(-ORIENTATION_RADIUS, ORIENTATION_RADIUS + 1, dtype=np.float64)
    oy, ox = np.meshgrid(offsets, offsets, indexing="ij")
    inside = (ox ** 2 + oy ** 2) <= ORIENTATION_RADIUS ** 2
    ox, oy = ox[inside], oy[inside]
    weight = np.exp(-(ox ** 2 + oy ** 2) / (2.0 * ORIENTATION_SIGMA ** 2))

    xs = positions[:, 0:1] + ox[None, :]
    ys = positions[:, 1:2] + oy[None, :]
    sx = _sample(gx, xs.ravel(), ys.ravel()).reshape(xs.shape)
    sy = _sample(gy, xs.ravel(), ys.ravel()).reshape(xs.shape)
    magnitude = np.hypot(sx, sy) * weight[None, :]
    angle = normalize_angle(np.arctan2(sy, sx))
    bins = np.floor(angle * ORIENTATION_BINS / TWO_PI).astype(np.int64) % ORIENTATION_BINS

    n = positions.shape[0]
    hist = np.zeros((n, ORIENTATION_BINS))
    np.add.at(hist, (np.repeat(np.arange(n), bins.shape[1]), bins.ravel()), magnitude.ravel())
    hist = (6 * hist + 4 * (np.roll(hist, 1, axis=1) + np.roll(hist, -1, axis=1))
            + np.roll(hist, 2, axis=1) + np.roll(hist, -2, axis=1)) / 16.0

    peak = np.argmax(hist, axis=1)
    rows = np.arange(n)
    left = hist[rows, (peak - 1) % ORIENTATION_BINS]
    centre = hist[rows, peak]
    right = hist[rows, (peak + 1) % ORIENTATION_BINS]
    denom = left - 2.0 * centre + right
    shift = np.where(np.abs(denom) > 1e-12, 0.5 * (left - right) / np.where(denom == 0, 1, denom), 0.0)
    return normalize_angle((peak + 0.5 + shift) * TWO_PI / ORIENTATION_BINS)


class HarrisGradientBackend:
    """Single-octave Harris corners with a 4x4x8 rotated gradient-histogram descriptor.

    `cell_size` is the side of the blocks used for non-maximum suppression; the tracker
    sets it to half the superpixel diameter.
    """

    def __init__(self, cell_size: int = 4):
        self.cell_size = max(2, int(cell_size))

    @classmethod
    def for_diameter(cls, diameter: float) -> "HarrisGradientBackend":
        return cls(cell_size=max(2, int(round(diameter / 2.0))))

    def detect(self, frame: Frame, max_keypoints: int = 2000) -> List[Keypoint]:
        gray = _gray(frame)
        response = corner_harris(gray, method="k", k=HARRIS_K, sigma=HARRIS_SIGMA)
        peak = float(response.max())
        if peak <= ABSOLUTE_THRESHOLD:
            return []
        threshold = max(ABSOLUTE_THRESHOLD, RELATIVE_THRESHOLD * peak)
        local_max = (response == maximum_filter(response, size=3, mode="nearest")) & (response > threshold)

        rows, cols = self._block_maxima(np.where(local_max, response, -np.inf))
        if rows.size == 0:
            return []
        strengths = response[rows, cols]
        order = np.lexsort((cols, rows, -strengths))[:max_keypoints]
        rows, cols, strengths = rows[order], cols[order], strengths[order]

        positions = np.stack([cols + 0.5, rows + 0.5], axis=1).astype(np.float64)
        gx, gy = _gradients(gray)
        orientations = dominant_orientations(gx, gy, positions)
        keypoints = [
            Keypoint(x=float(px), y=float(py), orientation=float(th), response=float(s))
            for (px, py), th, s in zip(positions, orientations, strengths)
        ]
        logger.debug(f"Frame {frame.index}: detected {len(keypoints)} keypoints.")
        return keypoints

    def _block_maxima(self, masked: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        c = self.cell_size
        h, w = masked.shape
        ph, pw = -h % c, -w % c
        padded = np.pad(masked, ((0, ph), (0, pw)), constant_values=-np.inf)
        ny, nx = padded.shape[0] // c, padded.shape[1] // c
        blocks = padded.reshape(ny, c, nx, c).transpose(0, 2, 1, 3).reshape(ny, nx, c * c)
        best = np.argmax(blocks, axis=2)
        best_value = np.take_along_axis(blocks, best[..., None], axis=2)[..., 0]
        by, bx = np.nonzero(np.isfinite(best_value))
        offset = best[by, bx]
        return by * c + offset // c, bx * c + offset % c

    def describe(self, frame: Frame, keypoints: Sequence[Keypoint]) -> DescribedKeypoints:
        """Descriptors for the keypoints far enough from the border for a full window."""
        keep, dropped = [], []
        for i, kp in enumerate(keypoints):
            if (DESCRIPTOR_MARGIN <= kp.x - 0.5 <= frame.width - 1 - DESCRIPTOR_MARGIN
                    and DESCRIPTOR_MARGIN <= kp.y - 0.5 <= frame.height - 1 - DESCRIPTOR_MARGIN):
                keep.append(i)
            else:
                dropped.append(i)
        if dropped:
            logger.debug(f"Frame {frame.index}: dropped {len(dropped)} keypoints too close to the border.")
        if not keep:
            return DescribedKeypoints([], np.zeros((0, DESCRIPTOR_LENGTH)), dropped)

        kept = [keypoints[i] for i in keep]
        gx, gy = _gradients(_gray(frame))
        descriptors = describe_at(gx, gy, kept)
        norms = np.linalg.norm(descriptors, axis=1)
        flat = norms <= 1e-12
        if np.any(flat):
            dropped.extend(keep[i] for i in np.nonzero(flat)[0])
            kept = [kp for kp, f in zip(kept, flat) if not f]
            descriptors = descriptors[~flat]
        return DescribedKeypoints(kept, descriptors, sorted(dropped))


def describe_at(gx: np.ndarray, gy: np.ndarray, keypoints: Sequence[Keypoint]) -> np.ndarray:
    n = len(keypoints)
    half = DESCRIPTOR_WIDTH / 2.0
    grid = np.arange(DESCRIPTOR_WIDTH, dtype=np.float64) - half + 0.5
    v, u = np.meshgrid(grid, grid, indexing="ij")  # v along keypoint y axis, u along x axis
    u, v = u.ravel(), v.ravel()
    cell = (np.floor((v + half) / (DESCRIPTOR_WIDTH / DESCRIPTOR_CELLS)).astype(np.int64) * DESCRIPTOR_CELLS
            + np.floor((u + half) / (DESCRIPTOR_WIDTH / DESCRIPTOR_CELLS)).astype(np.int64))
    weight = np.exp(-(u ** 2 + v ** 2) / (2.0 * half ** 2))

    pos = np.array([[kp.x, kp.y] for kp in keypoints], dtype=np.float64)
    theta = np.array([kp.orientation for kp in keypoints], dtype=np.float64)
    cos_t, sin_t = np.cos(theta)[:, None], np.sin(theta)[:, None]
    xs = pos[:, 0:1] + cos_t * u[None, :] - sin_t * v[None, :]
    ys = pos[:, 1:2] + sin_t * u[None, :] + cos_t * v[None, :]
    sx = _sample(gx, xs.ravel(), ys.ravel()).reshape(xs.shape)
    sy = _sample(gy, xs.ravel(), ys.ravel()).reshape(xs.shape)

    magnitude = np.hypot(sx, sy) * weight[None, :]
    angle = normalize_angle(np.arctan2(sy, sx) - theta[:, None])
    position = angle * DESCRIPTOR_BINS / TWO_PI
    lower = np.floor(position).astype(np.int64)
    frac = position - lower
    lower %= DESCRIPTOR_BINS
    upper = (lower + 1) % DESCRIPTOR_BINS

    desc = np.zeros((n, DESCRIPTOR_CELLS * DESCRIPTOR_CELLS, DESCRIPTOR_BINS))
    kp_idx = np.repeat(np.arange(n), u.size)
    cell_idx = np.tile(cell, n)
    np.add.at(desc, (kp_idx, cell_idx, lower.ravel()), (magnitude * (1.0 - frac)).ravel())
    np.add.at(desc, (kp_idx, cell_idx, upper.ravel()), (magnitude * frac).ravel())
    desc = desc.reshape(n, DESCRIPTOR_LENGTH)
    return _normalize_descriptors(desc)


def _normalize_descriptors(desc: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(desc, axis=1, keepdims=True)
    desc = np.divide(desc, norms, out=np.zeros_like(desc), where=norms > 0)
    desc = np.minimum(desc, DESCRIPTOR_CLIP)
    norms = np.linalg.norm(desc, axis=1, keepdims=True)
    return np.divide(desc, norms, out=np.zeros_like(desc), where=norms > 0)


def renormalize(desc: np.ndarray) -> np.ndarray:
    """L2-normalizes descriptor rows (used after blending)."""
    norms = np.linalg.norm(desc, axis=-1, keepdims=True)
    return np.divide(desc, norms, out=np.zeros_like(desc), where=norms > 0)


def detect(frame: Frame, max_keypoints: int = 2000, cell_size: int = 4) -> List[Keypoint]:
    return HarrisGradientBackend(cell_size).detect(frame, max_keypoints)


def describe(frame: Frame, keypoints: Sequence[Keypoint]) -> DescribedKeypoints:
    return HarrisGradientBackend().describe(frame, keypoints)


def match(set_a: np.ndarray, set_b: np.ndarray, ratio: float = 0.75,
          single_cap: float = SINGLE_CANDIDATE_CAP) -> List[KeypointMatch]:
    """Nearest-neighbour matching with Lowe's ratio test, pruned to one match per element of set_b."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    set_a = np.asarray(set_a, dtype=np.float64)
    set_b = np.asarray(set_b, dtype=np.float64)
    if set_a.shape[0] == 0 or set_b.shape[0] == 0:
        return []

    dist = cdist(set_a, set_b)
    rows = np.arange(dist.shape[0])
    nearest = np.argmin(dist, axis=1)
    d1 = dist[rows, nearest]
    if set_b.shape[0] == 1:
        accepted = d1 < single_cap
    else:
        others = dist.copy()
        others[rows, nearest] = np.inf
        d2 = others.min(axis=1)
        accepted = d1 < ratio * d2

    a_idx = rows[accepted]
    b_idx = nearest[accepted]
    d_acc = d1[accepted]
    # one-to-one: smallest distance per element of set_b, lowest index_a on ties
    order = np.lexsort((a_idx, d_acc, b_idx))
    _, first = np.unique(b_idx[order], return_index=True)
    chosen = np.sort(order[first], kind="stable")
    return [KeypointMatch(int(a_idx[i]), int(b_idx[i]), float(d_acc[i])) for i in chosen]


def write_keypoints_csv(keypoints: Sequence[Keypoint], path: str):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y", "orientation", "response"])
        for kp in keypoints:
            writer.writerow([f"{kp.x:.3f}", f"{kp.y:.3f}", f"{kp.orientation:.6f}", f"{kp.response:.6g}"])
