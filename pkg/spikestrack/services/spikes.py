import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.spatial import cKDTree

from spikestrack.core.imaging import bhattacharyya, bhattacharyya_matrix
from spikestrack.models.trackingmodels import SpikesRecord
from spikestrack.services.keypoints import Keypoint
from spikestrack.services.segmentation import Superpixel

logger = logging.getLogger(__name__)


@dataclass
class Spikes:
    """A superpixel plus the keypoints within radius R of its center.

    `keypoint_refs` index into whatever keypoint list the structure was built from
    (frame keypoints for a query, the foreground pool for the model).
    """

    center: np.ndarray
    histogram: np.ndarray
    keypoint_refs: np.ndarray
    edges: np.ndarray  # (n, 2), keypoint position minus center
    orientations: np.ndarray  # (n,) orientation of each referenced keypoint
    radius: float
    superpixel: Optional[Superpixel] = None

    @property
    def superpixel_id(self) -> int:
        return -1 if self.superpixel is None else self.superpixel.id

    def __len__(self) -> int:
        return int(self.keypoint_refs.size)


@dataclass
class SimilarityScore:
    total: float
    color_part: float
    structure_part: float
    n_kp_matches: int


@dataclass
class ScoreMatrix:
    total: np.ndarray  # (n_model, n_query)
    color: np.ndarray
    structure: np.ndarray
    n_kp: np.ndarray


def _attached(tree: Optional[cKDTree], positions: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    if tree is None:
        return np.zeros(0, dtype=np.int64)
    near = np.asarray(tree.query_ball_point(center, r=radius), dtype=np.int64)
    if near.size == 0:
        return near
    near.sort()
    dist = np.linalg.norm(positions[near] - center, axis=1)
    return near[dist < radius]


def attach(center, histogram, positions: np.ndarray, orientations: np.ndarray, radius: float,
           tree: Optional[cKDTree] = None, superpixel: Optional[Superpixel] = None) -> Spikes:
    center = np.asarray(center, dtype=np.float64)
    if tree is None and positions.shape[0]:
        tree = cKDTree(positions)
    refs = _attached(tree, positions, center, radius)
    return Spikes(
        center=center,
        histogram=histogram,
        keypoint_refs=refs,
        edges=positions[refs] - center if refs.size else np.zeros((0, 2)),
        orientations=orientations[refs] if refs.size else np.zeros(0),
        radius=radius,
        superpixel=superpixel,
    )


def build_spikes(superpixels: Sequence[Superpixel], keypoints: Sequence[Keypoint], radius: float) -> List[Spikes]:
    """One SPiKeS per superpixel; keypoint n is attached to superpixel s iff |x_n - x_s| < radius."""
    positions = np.array([kp.position for kp in keypoints], dtype=np.float64).reshape(-1, 2)
    orientations = np.array([kp.orientation for kp in keypoints], dtype=np.float64)
    return build_spikes_at(superpixels, positions, orientations, radius)


def build_spikes_at(superpixels: Sequence[Superpixel], positions: np.ndarray, orientations: np.ndarray,
                    radius: float) -> List[Spikes]:
    if radius <= 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    orientations = np.asarray(orientations, dtype=np.float64).reshape(-1)
    tree = cKDTree(positions) if positions.shape[0] else None
    return [attach(sp.center, sp.histogram, positions, orientations, radius, tree, sp) for sp in superpixels]


def reorient_edge(edge, orientation: float) -> np.ndarray:
    """Rotates an edge by -orientation, into the keypoint's canonical frame."""
    e = np.asarray(edge, dtype=np.float64)
    c, s = math.cos(orientation), math.sin(orientation)
    return np.stack([e[..., 0] * c + e[..., 1] * s, -e[..., 0] * s + e[..., 1] * c], axis=-1)


def _reorient_many(edges: np.ndarray, orientations: np.ndarray) -> np.ndarray:
    c, s = np.cos(orientations), np.sin(orientations)
    return np.stack([edges[:, 0] * c + edges[:, 1] * s, -edges[:, 0] * s + edges[:, 1] * c], axis=1)


def gamma(e_m, theta_m: float, e_n, theta_n: float, radius: float) -> float:
    diff = reorient_edge(e_m, theta_m) - reorient_edge(e_n, theta_n)
    return math.exp(-math.hypot(diff[0], diff[1]) / (2.0 * radius))


SCORING_MODES = ("full", "color_only", "structure_only")


def _check_mode(mode: str):
    if mode not in SCORING_MODES:
        raise ValueError(f"scoring mode must be one of {SCORING_MODES}, got {mode!r}")


def similarity(s_i: Spikes, s_j: Spikes, kp_matches: Iterable[Tuple[int, int]], theta_c: float,
               mode: str = "full") -> SimilarityScore:
    """Color term exp(-d) plus the keypoint structure term, gated on color distance < theta_c.

    `kp_matches` pairs a keypoint reference of `s_i` with one of `s_j`. `mode` drops the
    structure term ("color_only") or the color term and its gate ("structure_only").
    """
    _check_mode(mode)
    d = bhattacharyya(s_i.histogram, s_j.histogram)
    if mode != "structure_only" and d >= theta_c:
        return SimilarityScore(0.0, 0.0, 0.0, 0)

    terms = []
    if mode != "color_only":
        matched: Set[Tuple[int, int]] = set(kp_matches)
        slot_i = {int(r): k for k, r in enumerate(s_i.keypoint_refs)}
        slot_j = {int(r): k for k, r in enumerate(s_j.keypoint_refs)}
        for m, n in matched:
            if m in slot_i and n in slot_j:
                a, b = slot_i[m], slot_j[n]
                terms.append(gamma(s_i.edges[a], s_i.orientations[a], s_j.edges[b], s_j.orientations[b],
                                   s_i.radius))
    z_c = 0.0 if mode == "structure_only" else math.exp(-d)
    # fsum is exactly rounded, so the result does not depend on iteration order
    z_k = math.fsum(terms)
    return SimilarityScore(z_c + z_k, z_c, z_k, len(terms))


def _membership(spikes: Sequence[Spikes]) -> Tuple[np.ndarray, ...]:
    """Flattened (owner, ref, edge, orientation) rows of every SPiKeS, sorted by ref."""
    if not spikes or sum(len(s) for s in spikes) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 2)), np.zeros(0)
    owner = np.concatenate([np.full(len(s), i, dtype=np.int64) for i, s in enumerate(spikes)])
    refs = np.concatenate([s.keypoint_refs for s in spikes]).astype(np.int64)
    edges = np.concatenate([s.edges.reshape(-1, 2) for s in spikes])
    orient = np.concatenate([s.orientations for s in spikes])
    order = np.argsort(refs, kind="stable")
    return owner[order], refs[order], edges[order], orient[order]


def score_matrix(model: Sequence[Spikes], query: Sequence[Spikes], kp_matches: np.ndarray,
                 theta_c: float, radius: float, mode: str = "full") -> ScoreMatrix:
    """Similarity of every (model, query) pair at once.

    `kp_matches` is an (n, 2) array of (model keypoint ref, query keypoint ref) rows.
    Agrees with `similarity` (same `mode`) up to summation rounding.
    """
    _check_mode(mode)
    n_m, n_q = len(model), len(query)
    if n_m == 0 or n_q == 0:
        empty = np.zeros((n_m, n_q))
        return ScoreMatrix(empty, empty.copy(), empty.copy(), np.zeros((n_m, n_q), dtype=np.int64))

    dist = bhattacharyya_matrix(np.stack([s.histogram for s in model]), np.stack([s.histogram for s in query]))
    if mode == "structure_only":
        gate = np.ones_like(dist, dtype=bool)
        color = np.zeros_like(dist)
    else:
        gate = dist < theta_c
        color = np.where(gate, np.exp(-dist), 0.0)
    structure = np.zeros((n_m, n_q))
    n_kp = np.zeros((n_m, n_q), dtype=np.int64)

    kp_matches = np.asarray(kp_matches, dtype=np.int64).reshape(-1, 2)
    if kp_matches.shape[0] and mode != "color_only":
        own_a, refs_a, edges_a, orient_a = _membership(model)
        own_b, refs_b, edges_b, orient_b = _membership(query)
        start_a = np.searchsorted(refs_a, kp_matches[:, 0], side="left")
        count_a = np.searchsorted(refs_a, kp_matches[:, 0], side="right") - start_a
        start_b = np.searchsorted(refs_b, kp_matches[:, 1], side="left")
        count_b = np.searchsorted(refs_b, kp_matches[:, 1], side="right") - start_b

        per_match = count_a * count_b
        total = int(per_match.sum())
        if total:
            match_id = np.repeat(np.arange(kp_matches.shape[0]), per_match)
            local = np.arange(total) - np.repeat(np.cumsum(per_match) - per_match, per_match)
            ia = start_a[match_id] + local // count_b[match_id]
            ib = start_b[match_id] + local % count_b[match_id]
            diff = _reorient_many(edges_a[ia], orient_a[ia]) - _reorient_many(edges_b[ib], orient_b[ib])
            g = np.exp(-np.hypot(diff[:, 0], diff[:, 1]) / (2.0 * radius))
            np.add.at(structure, (own_a[ia], own_b[ib]), g)
            np.add.at(n_kp, (own_a[ia], own_b[ib]), 1)

    structure = np.where(gate, structure, 0.0)
    n_kp = np.where(gate, n_kp, 0)
    return ScoreMatrix(color + structure, color, structure, n_kp)


def write_spikes_jsonl(spikes: Sequence[Spikes], path: str, frame_index: int = 0):
    with open(path, "w") as handle:
        for s in spikes:
            record = SpikesRecord(
                frame=frame_index,
                superpixel=s.superpixel_id,
                center=(float(s.center[0]), float(s.center[1])),
                edges=[(float(e[0]), float(e[1])) for e in s.edges],
            )
            handle.write(record.json() + "\n")
    logger.debug(f"Wrote {len(spikes)} SPiKeS to {path}.")
