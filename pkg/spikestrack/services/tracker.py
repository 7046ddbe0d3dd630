"""Part-based tracking with SPiKeS: initialization, matching, center voting, occlusion test and update.

The model keeps its geometry relative to the target center. A model SPiKeS is stored as its vote
vector v (its center is the last target center minus v) and every foreground keypoint as its offset
to the target center, so the structure of a model SPiKeS is always derived from the current pool.
"""
import copy
import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from spikestrack.core.config import TrackerConfig
from spikestrack.core.exceptions import EmptyModel, NoMatches
from spikestrack.core.imaging import BoundingBox, Frame, Point
from spikestrack.models.trackingmodels import ModelSnapshot, ModelSpikesRecord
from spikestrack.services import keypoints as kp
from spikestrack.services.segmentation import (
    Segmentation,
    SegmentationBackend,
    SegmentationPlan,
    SlicBackend,
    plan_for_box,
    plan_for_diameter,
    plan_segmentation,
)
from spikestrack.services.spikes import ScoreMatrix, SimilarityScore, Spikes, attach, build_spikes_at, score_matrix

logger = logging.getLogger(__name__)

BAND_FACTOR = 2.0


@dataclass(eq=False)
class KeypointPool:
    """Capped pool of keypoints with their descriptors and persistence."""

    positions: np.ndarray  # (n, 2)
    orientations: np.ndarray
    descriptors: np.ndarray  # (n, 128)
    omega: np.ndarray
    cap: int

    @classmethod
    def empty(cls, cap: int) -> "KeypointPool":
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros((0, kp.DESCRIPTOR_LENGTH)), np.zeros(0), cap)

    def __len__(self) -> int:
        return int(self.omega.size)

    def append(self, positions: np.ndarray, orientations: np.ndarray, descriptors: np.ndarray, omega: float):
        if positions.shape[0] == 0:
            return
        self.positions = np.vstack([self.positions, positions])
        self.orientations = np.concatenate([self.orientations, orientations])
        self.descriptors = np.vstack([self.descriptors, descriptors])
        self.omega = np.concatenate([self.omega, np.full(positions.shape[0], omega)])

    def keep(self, index: np.ndarray):
        self.positions = self.positions[index]
        self.orientations = self.orientations[index]
        self.descriptors = self.descriptors[index]
        self.omega = self.omega[index]

    def evict(self) -> int:
        """Drops the lowest-persistence entries above the cap; older entries go first on ties."""
        excess = len(self) - self.cap
        if excess <= 0:
            return 0
        self.keep(_survivors(self.omega, excess))
        return excess


def _survivors(weights: np.ndarray, excess: int) -> np.ndarray:
    order = np.argsort(weights, kind="stable")
    return np.sort(order[excess:])


@dataclass(eq=False)
class Model:
    votes: np.ndarray  # (m, 2), target center minus SPiKeS center
    histograms: np.ndarray  # (m, 216)
    omega: np.ndarray
    phi: np.ndarray
    age: np.ndarray
    fg: KeypointPool  # positions are offsets to the target center
    bg: KeypointPool  # positions are frame coordinates
    bbox_dims: Tuple[float, float]
    diameter: float
    radius: float
    max_spikes: int
    last_centers: np.ndarray  # rows x_{t-1}, x_{t-2}

    @property
    def center(self) -> np.ndarray:
        return self.last_centers[0]

    @property
    def motion(self) -> float:
        return float(np.linalg.norm(self.last_centers[0] - self.last_centers[1]))

    def __len__(self) -> int:
        return int(self.omega.size)

    def spike_centers(self, reference: Optional[np.ndarray] = None) -> np.ndarray:
        reference = self.center if reference is None else np.asarray(reference, dtype=np.float64)
        return reference[None, :] - self.votes

    def spikes(self) -> List[Spikes]:
        """Model SPiKeS placed at the last target center, structured by the foreground pool."""
        positions = self.fg.positions + self.center[None, :]
        tree = cKDTree(positions) if len(self.fg) else None
        return [
            attach(c, h, positions, self.fg.orientations, self.radius, tree)
            for c, h in zip(self.spike_centers(), self.histograms)
        ]

    def digest(self) -> str:
        h = hashlib.sha256()
        arrays = [self.votes, self.histograms, self.omega, self.phi, self.age, self.last_centers,
                  self.fg.positions, self.fg.orientations, self.fg.descriptors, self.fg.omega,
                  self.bg.positions, self.bg.orientations, self.bg.descriptors, self.bg.omega]
        for a in arrays:
            a = np.ascontiguousarray(a)
            h.update(str(a.shape).encode())
            h.update(a.tobytes())
        h.update(repr((self.bbox_dims, self.diameter, self.radius, self.max_spikes)).encode())
        return h.hexdigest()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Model):
            return NotImplemented
        return self.digest() == other.digest()

    def snapshot(self, frame_index: int, occluded: bool = False) -> ModelSnapshot:
        centers = self.spike_centers()
        return ModelSnapshot(
            frame=frame_index,
            occluded=occluded,
            bbox_dims=self.bbox_dims,
            diameter=self.diameter,
            last_centers=[(float(c[0]), float(c[1])) for c in self.last_centers],
            spikes=[
                ModelSpikesRecord(
                    center=(float(centers[i, 0]), float(centers[i, 1])),
                    vote=(float(self.votes[i, 0]), float(self.votes[i, 1])),
                    omega=float(self.omega[i]),
                    phi=float(self.phi[i]),
                    age=int(self.age[i]),
                )
                for i in range(len(self))
            ],
            fg_pool_size=len(self.fg),
            bg_pool_size=len(self.bg),
            digest=self.digest(),
        )


@dataclass
class MatchPair:
    model_index: int
    query_index: int
    score: SimilarityScore
    displacement: float


@dataclass
class FrameOutcome:
    frame_index: int
    center: Point
    bbox: BoundingBox
    occluded: bool
    n_valid_matches: int
    votes: List[Tuple[Point, float]] = field(default_factory=list)
    matched_centers: List[Point] = field(default_factory=list)
    fallback: bool = False


@dataclass
class Observation:
    """Everything extracted from one frame (or from a window of it), in frame coordinates."""

    segmentation: Segmentation
    offset: Tuple[int, int]
    keypoints: kp.DescribedKeypoints
    query: List[Spikes]

    @property
    def positions(self) -> np.ndarray:
        return self.keypoints.positions

    def superpixel_at(self, positions: np.ndarray) -> np.ndarray:
        if positions.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        return self.segmentation.label_at(positions[:, 0] - self.offset[0], positions[:, 1] - self.offset[1])


def plan_for(frame_dims: Tuple[int, int], bbox_dims: Tuple[float, float], config: TrackerConfig) -> SegmentationPlan:
    if config.segmentation_rule == "literal":
        return plan_segmentation(frame_dims, bbox_dims)
    return plan_for_box(frame_dims, bbox_dims, config.superpixels_per_box)


def _window(frame: Frame, window: Optional[BoundingBox]) -> Tuple[Frame, Tuple[int, int]]:
    if window is None:
        return frame, (0, 0)
    x0 = max(0, int(math.floor(window.x)))
    y0 = max(0, int(math.floor(window.y)))
    x1 = min(frame.width, int(math.ceil(window.x + window.w)))
    y1 = min(frame.height, int(math.ceil(window.y + window.h)))
    if x1 - x0 < 2 or y1 - y0 < 2:
        return frame, (0, 0)
    return frame.crop(x0, y0, x1, y1), (x0, y0)


def _describe_view(view: Frame, backend: kp.KeypointBackend, max_keypoints: int) -> kp.DescribedKeypoints:
    return backend.describe(view, backend.detect(view, max_keypoints))


def observe(frame: Frame, diameter: float, radius: float, config: TrackerConfig,
            window: Optional[BoundingBox] = None, keypoint_backend: Optional[kp.KeypointBackend] = None,
            segmenter: Optional[SegmentationBackend] = None) -> Observation:
    """Segments the frame, detects and describes keypoints and builds the query SPiKeS.

    Without explicit backends, SLIC and Harris corners sized from `diameter` are used.
    """
    view, offset = _window(frame, window)
    plan = plan_for_diameter(view.dims, diameter)
    keypoint_backend = keypoint_backend or kp.HarrisGradientBackend.for_diameter(diameter)
    segmenter = segmenter or SlicBackend(config.compactness, config.slic_iterations)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            seg_future = pool.submit(segmenter.segment, view, plan)
            kp_future = pool.submit(_describe_view, view, keypoint_backend, config.max_keypoints)
            segmentation, described = seg_future.result(), kp_future.result()
    else:
        segmentation = segmenter.segment(view, plan)
        described = _describe_view(view, keypoint_backend, config.max_keypoints)

    ox, oy = offset
    if ox or oy:
        for k in described.keypoints:
            k.x += ox
            k.y += oy
        for sp in segmentation.superpixels:
            sp.center = (sp.center[0] + ox, sp.center[1] + oy)

    query = build_spikes_at(segmentation.superpixels, described.positions, described.orientations, radius)
    logger.debug(
        f"Frame {frame.index}: {len(query)} query SPiKeS, {len(described)} described keypoints, offset {offset}."
    )
    return Observation(segmentation=segmentation, offset=offset, keypoints=described, query=query)


def init(frame: Frame, bbox: BoundingBox, config: Optional[TrackerConfig] = None,
         keypoint_backend: Optional[kp.KeypointBackend] = None,
         segmenter: Optional[SegmentationBackend] = None) -> Model:
    """Builds the model from the superpixels covering the initial box and the keypoints around it."""
    config = config or TrackerConfig()
    plan = plan_for(frame.dims, bbox.dims, config)
    radius = config.radius_factor * plan.diameter
    obs = observe(frame, plan.diameter, radius, config, keypoint_backend=keypoint_backend, segmenter=segmenter)

    inside = bbox.pixel_mask(frame.width, frame.height).ravel()
    selected = [sp for sp in obs.segmentation.superpixels if inside[sp.pixels].mean() >= config.foreground_overlap]
    if not selected:
        raise EmptyModel(
            f"No superpixel overlaps the initial box by {config.foreground_overlap:.0%} "
            f"(box {bbox.as_tuple()}, {len(obs.segmentation.superpixels)} superpixels)"
        )

    center = np.array(bbox.center, dtype=np.float64)
    votes = center[None, :] - np.array([sp.center for sp in selected], dtype=np.float64)
    histograms = np.stack([sp.histogram for sp in selected])

    described = obs.keypoints
    positions = described.positions
    labels = obs.superpixel_at(positions)
    in_fg = np.isin(labels, [sp.id for sp in selected])
    band = bbox.inflate(BAND_FACTOR)
    in_bg = band.contains(positions[:, 0], positions[:, 1]) & ~bbox.contains(positions[:, 0], positions[:, 1])

    fg = KeypointPool.empty(config.fg_pool_cap)
    fg_idx = np.nonzero(in_fg)[0][: config.fg_pool_cap]
    fg.append(positions[fg_idx] - center, described.orientations[fg_idx], described.descriptors[fg_idx], 1.0)
    bg = KeypointPool.empty(config.bg_pool_cap)
    bg_idx = np.nonzero(in_bg)[0][: config.bg_pool_cap]
    bg.append(positions[bg_idx], described.orientations[bg_idx], described.descriptors[bg_idx], 1.0)

    m = len(selected)
    model = Model(
        votes=votes,
        histograms=histograms,
        omega=np.ones(m),
        phi=np.ones(m),
        age=np.zeros(m, dtype=np.int64),
        fg=fg,
        bg=bg,
        bbox_dims=bbox.dims,
        diameter=plan.diameter,
        radius=radius,
        max_spikes=config.model_size_factor * m,
        last_centers=np.stack([center, center]),
    )
    logger.info(
        f"Model initialized: {m} SPiKeS, {len(fg)} foreground and {len(bg)} background keypoints, "
        f"superpixel diameter {plan.diameter:.1f}px."
    )
    return model


def global_matches(model: Model, obs: Observation, config: TrackerConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Matches the union of both pools against the frame keypoints once.

    Returns (foreground pool index, frame index) and (background pool index, frame index) rows.
    """
    pool = np.vstack([model.fg.descriptors, model.bg.descriptors])
    found = kp.match(pool, obs.keypoints.descriptors, config.theta_lo, config.single_match_cap)
    rows = np.array([(m.index_a, m.index_b) for m in found], dtype=np.int64).reshape(-1, 2)
    n_fg = len(model.fg)
    is_fg = rows[:, 0] < n_fg
    bg_rows = rows[~is_fg].copy()
    bg_rows[:, 0] -= n_fg
    return rows[is_fg], bg_rows


def select_pairs(scores: ScoreMatrix, displacement: np.ndarray, motion: float, theta_c: float,
                 lambda_1: float, lambda_2: float) -> List[MatchPair]:
    """Nearest query per model SPiKeS, best model per query, then score and motion rejection."""
    z = scores.total
    if z.size == 0:
        return []
    rows = np.arange(z.shape[0])
    best_q = np.argmax(z, axis=1)
    best_z = z[rows, best_q]
    order = np.lexsort((rows, -best_z, best_q))
    _, first = np.unique(best_q[order], return_index=True)
    winners = np.sort(order[first])

    base = math.exp(-theta_c)
    limit = motion + lambda_2
    pairs, weak, moved = [], 0, 0
    for i in winners:
        j = int(best_q[i])
        n_kp = int(scores.n_kp[i, j])
        if z[i, j] <= base + (lambda_1 if n_kp > 0 else 0.0):
            weak += 1
            continue
        if displacement[i, j] >= limit:
            moved += 1
            continue
        score = SimilarityScore(float(z[i, j]), float(scores.color[i, j]), float(scores.structure[i, j]), n_kp)
        pairs.append(MatchPair(int(i), j, score, float(displacement[i, j])))
    logger.debug(f"Pair selection: {len(pairs)} kept, {weak} below score gate, {moved} beyond motion gate.")
    return pairs


def match_model(model: Model, query: Sequence[Spikes], fg_matches: np.ndarray,
                config: TrackerConfig) -> List[MatchPair]:
    if len(model) == 0 or not query:
        return []
    scores = score_matrix(model.spikes(), query, fg_matches, config.theta_c, model.radius, config.scoring_mode)
    displacement = cdist(model.spike_centers(), np.stack([q.center for q in query]))
    return select_pairs(scores, displacement, model.motion, config.theta_c, config.lambda_1,
                        config.lambda_2_factor * model.diameter)


def vote_points(pairs: Sequence[MatchPair], model: Model, query: Sequence[Spikes]) -> np.ndarray:
    return np.array([query[p.query_index].center + model.votes[p.model_index] for p in pairs],
                    dtype=np.float64).reshape(-1, 2)


def estimate_location(pairs: Sequence[MatchPair], model: Model,
                      query: Sequence[Spikes]) -> Tuple[np.ndarray, List[Tuple[Point, float]]]:
    """Weighted mean of the votes, with weights omega * phi."""
    if not pairs:
        raise NoMatches("No valid SPiKeS pair to vote for the target center")
    points = vote_points(pairs, model, query)
    idx = np.array([p.model_index for p in pairs])
    weights = model.omega[idx] * model.phi[idx]
    center = (weights[:, None] * points).sum(axis=0) / weights.sum()
    votes = [((float(x), float(y)), float(w)) for (x, y), w in zip(points, weights)]
    return center, votes


def detect_occlusion(bbox: BoundingBox, frame_positions: np.ndarray, bg_matches: np.ndarray, theta_o: int) -> bool:
    """True when more than theta_o keypoints inside the box matched the background pool."""
    if bg_matches.shape[0] == 0:
        return False
    matched = frame_positions[bg_matches[:, 1]]
    return int(bbox.contains(matched[:, 0], matched[:, 1]).sum()) > theta_o


def _circular_blend(old: np.ndarray, new: np.ndarray, alpha: float) -> np.ndarray:
    x = (1.0 - alpha) * np.cos(old) + alpha * np.cos(new)
    y = (1.0 - alpha) * np.sin(old) + alpha * np.sin(new)
    return kp.normalize_angle(np.arctan2(y, x))


def update_model(model: Model, pairs: Sequence[MatchPair], obs: Observation, fg_matches: np.ndarray,
                 bg_matches: np.ndarray, center: np.ndarray, config: TrackerConfig) -> Model:
    """Returns the updated copy of the model; the input model is left untouched."""
    new = copy.deepcopy(model)
    center = np.asarray(center, dtype=np.float64)
    query = obs.query
    described = obs.keypoints
    frame_pos = described.positions
    n_frame = frame_pos.shape[0]

    m_idx = np.array([p.model_index for p in pairs], dtype=np.int64)
    q_idx = np.array([p.query_index for p in pairs], dtype=np.int64)
    q_centers = np.array([query[j].center for j in q_idx], dtype=np.float64).reshape(-1, 2)
    points = vote_points(pairs, model, query)

    # blend appearance and votes of matched SPiKeS
    if m_idx.size:
        q_hists = np.stack([query[j].histogram for j in q_idx])
        blended = (1.0 - config.alpha_f) * new.histograms[m_idx] + config.alpha_f * q_hists
        new.histograms[m_idx] = blended / blended.sum(axis=1, keepdims=True)
        new.votes[m_idx] = (1.0 - config.alpha_v) * new.votes[m_idx] + config.alpha_v * (center - q_centers)

        refs = np.concatenate([query[j].keypoint_refs for j in q_idx])
        blend = fg_matches[np.isin(fg_matches[:, 1], refs)]
        if blend.shape[0]:
            k, f = blend[:, 0], blend[:, 1]
            a = config.alpha_f
            new.fg.positions[k] = (1.0 - a) * new.fg.positions[k] + a * (frame_pos[f] - center)
            new.fg.descriptors[k] = kp.renormalize((1.0 - a) * new.fg.descriptors[k] + a * described.descriptors[f])
            new.fg.orientations[k] = _circular_blend(new.fg.orientations[k], described.orientations[f], a)

    # persistence and predictive factors
    matched = np.zeros(len(new), dtype=bool)
    matched[m_idx] = True
    new.omega = (1.0 - config.beta) * new.omega + config.beta * matched
    if m_idx.size:
        new.phi[m_idx] += np.exp(-np.sum((points - center) ** 2, axis=1))
        if config.phi_cap is not None:
            new.phi = np.minimum(new.phi, config.phi_cap)
    new.age += 1
    for pool, rows in ((new.fg, fg_matches), (new.bg, bg_matches)):
        hit = np.zeros(len(pool), dtype=bool)
        hit[rows[:, 0]] = True
        pool.omega = (1.0 - config.beta) * pool.omega + config.beta * hit

    # insertion from inside the estimated box only
    bbox = BoundingBox.from_center((center[0], center[1]), model.bbox_dims)
    if n_frame:
        labels = obs.superpixel_at(frame_pos)
        in_box = bbox.contains(frame_pos[:, 0], frame_pos[:, 1])
        known = np.zeros(n_frame, dtype=bool)
        known[fg_matches[:, 1]] = True
        known[bg_matches[:, 1]] = True

        matched_sp = [query[j].superpixel_id for j in q_idx]
        fresh = np.isin(labels, matched_sp) & in_box & ~known
        new.fg.append(frame_pos[fresh] - center, described.orientations[fresh], described.descriptors[fresh],
                      config.omega_min)

        hosting = np.unique(labels[fg_matches[:, 1]]) if fg_matches.shape[0] else np.zeros(0, dtype=np.int64)
        taken = set(int(j) for j in q_idx)
        born = [int(j) for j in hosting
                if j >= 0 and int(j) not in taken and bool(bbox.contains(query[j].center[0], query[j].center[1]))]
        if born:
            c = np.array([query[j].center for j in born], dtype=np.float64)
            new.votes = np.vstack([new.votes, center - c])
            new.histograms = np.vstack([new.histograms, np.stack([query[j].histogram for j in born])])
            new.omega = np.concatenate([new.omega, np.full(len(born), config.omega_min)])
            new.phi = np.concatenate([new.phi, np.ones(len(born))])
            new.age = np.concatenate([new.age, np.zeros(len(born), dtype=np.int64)])

        band = bbox.inflate(BAND_FACTOR)
        in_band = band.contains(frame_pos[:, 0], frame_pos[:, 1]) & ~in_box & ~known
        new.bg.append(frame_pos[in_band], described.orientations[in_band], described.descriptors[in_band],
                      config.omega_min)
    else:
        fresh, born, in_band = np.zeros(0, dtype=bool), [], np.zeros(0, dtype=bool)

    # deletion of the weakest entries
    dropped = 0
    if len(new) > new.max_spikes:
        keep = _survivors(new.omega, len(new) - new.max_spikes)
        dropped = len(new) - keep.size
        new.votes, new.histograms = new.votes[keep], new.histograms[keep]
        new.omega, new.phi, new.age = new.omega[keep], new.phi[keep], new.age[keep]
    fg_dropped = new.fg.evict()
    bg_dropped = new.bg.evict()

    new.last_centers = np.stack([center, model.last_centers[0]])
    logger.debug(
        f"Update: {m_idx.size} matched, {len(born)} SPiKeS born, {dropped} evicted; "
        f"K^f +{int(fresh.sum())}/-{fg_dropped}, K^b +{int(in_band.sum())}/-{bg_dropped}."
    )
    return new


def track_frame(model: Model, frame: Frame, config: Optional[TrackerConfig] = None,
                keypoint_backend: Optional[kp.KeypointBackend] = None,
                segmenter: Optional[SegmentationBackend] = None) -> Tuple[FrameOutcome, Model]:
    """Locates the target in one frame and returns the outcome with the next model."""
    config = config or TrackerConfig()
    window = None
    if config.search_window:
        dims = (model.bbox_dims[0] * config.search_window_scale, model.bbox_dims[1] * config.search_window_scale)
        window = BoundingBox.from_center((model.center[0], model.center[1]), dims)
    obs = observe(frame, model.diameter, model.radius, config, window, keypoint_backend, segmenter)
    fg_matches, bg_matches = global_matches(model, obs, config)
    pairs = match_model(model, obs.query, fg_matches, config)

    try:
        center, votes = estimate_location(pairs, model, obs.query)
    except NoMatches:
        guess = 2.0 * model.last_centers[0] - model.last_centers[1]
        logger.warning(f"Frame {frame.index}: no valid match, constant-velocity fallback to "
                       f"({guess[0]:.1f}, {guess[1]:.1f}).")
        point = (float(guess[0]), float(guess[1]))
        outcome = FrameOutcome(frame.index, point, BoundingBox.from_center(point, model.bbox_dims),
                               occluded=True, n_valid_matches=0, fallback=True)
        return outcome, model

    point = (float(center[0]), float(center[1]))
    bbox = BoundingBox.from_center(point, model.bbox_dims)
    occluded = detect_occlusion(bbox, obs.positions, bg_matches, config.theta_o)
    outcome = FrameOutcome(
        frame_index=frame.index,
        center=point,
        bbox=bbox,
        occluded=occluded,
        n_valid_matches=len(pairs),
        votes=votes,
        matched_centers=[(float(obs.query[p.query_index].center[0]), float(obs.query[p.query_index].center[1]))
                         for p in pairs],
    )
    logger.info(f"Frame {frame.index}: center ({point[0]:.1f}, {point[1]:.1f}), {len(pairs)} matches, "
                f"occluded={occluded}.")
    if occluded:
        return outcome, model
    return outcome, update_model(model, pairs, obs, fg_matches, bg_matches, center, config)


class SpikesTracker:
    """Stateful wrapper running `track_frame` over a sequence."""

    def __init__(self, config: Optional[TrackerConfig] = None,
                 keypoint_backend: Optional[kp.KeypointBackend] = None,
                 segmenter: Optional[SegmentationBackend] = None):
        self.config = config or TrackerConfig()
        self.keypoint_backend = keypoint_backend
        self.segmenter = segmenter
        self.model: Optional[Model] = None

    def start(self, frame: Frame, bbox: BoundingBox) -> FrameOutcome:
        self.model = init(frame, bbox, self.config, self.keypoint_backend, self.segmenter)
        return FrameOutcome(frame.index, bbox.center, bbox, occluded=False, n_valid_matches=len(self.model))

    def step(self, frame: Frame) -> FrameOutcome:
        if self.model is None:
            raise RuntimeError("Tracker used before start()")
        outcome, self.model = track_frame(self.model, frame, self.config, self.keypoint_backend, self.segmenter)
        return outcome

    def track(self, frames: Iterable[Frame], init_box: BoundingBox) -> Iterator[FrameOutcome]:
        for i, frame in enumerate(frames):
            yield self.start(frame, init_box) if i == 0 else self.step(frame)
