import copy

import numpy as np
import pytest

from spikestrack.core.config import TrackerConfig
from spikestrack.core.exceptions import EmptyModel, NoMatches
from spikestrack.core.imaging import N_BINS, BoundingBox, Frame
from spikestrack.models.trackingmodels import ModelSnapshot, ScenarioKind, ScenarioSpec
from spikestrack.services import synthdata
from spikestrack.services.keypoints import DESCRIPTOR_LENGTH, DescribedKeypoints, HarrisGradientBackend, Keypoint
from spikestrack.services.segmentation import Segmentation, SlicBackend, Superpixel
from spikestrack.services.spikes import SimilarityScore, Spikes
from spikestrack.services.tracker import (
    KeypointPool,
    MatchPair,
    Model,
    Observation,
    SpikesTracker,
    detect_occlusion,
    estimate_location,
    init,
    plan_for,
    track_frame,
    update_model,
)
from tests.helpers import uniform_frame

NO_MATCHES = np.zeros((0, 2), dtype=np.int64)


def _hist():
    h = np.zeros(N_BINS)
    h[0] = 1.0
    return h


def _model(votes, omega=None, phi=None, center=(10.0, 10.0), max_spikes=None, bbox_dims=(20.0, 20.0)):
    votes = np.asarray(votes, dtype=np.float64).reshape(-1, 2)
    m = votes.shape[0]
    return Model(
        votes=votes,
        histograms=np.tile(_hist(), (m, 1)),
        omega=np.ones(m) if omega is None else np.asarray(omega, dtype=np.float64),
        phi=np.ones(m) if phi is None else np.asarray(phi, dtype=np.float64),
        age=np.zeros(m, dtype=np.int64),
        fg=KeypointPool.empty(10),
        bg=KeypointPool.empty(10),
        bbox_dims=bbox_dims,
        diameter=5.0,
        radius=10.0,
        max_spikes=max_spikes or 3 * m,
        last_centers=np.array([center, center], dtype=np.float64),
    )


def _query_spikes(j, center):
    return Spikes(
        center=np.asarray(center, dtype=np.float64),
        histogram=_hist(),
        keypoint_refs=np.zeros(0, dtype=np.int64),
        edges=np.zeros((0, 2)),
        orientations=np.zeros(0),
        radius=10.0,
        superpixel=Superpixel(id=j, center=center, pixels=np.array([0]), histogram=_hist()),
    )


def _observation(query, labels=None, keypoints=()):
    labels = np.zeros((20, 20), dtype=np.int32) if labels is None else labels
    descriptors = np.full((len(keypoints), DESCRIPTOR_LENGTH), 1.0 / np.sqrt(DESCRIPTOR_LENGTH))
    return Observation(
        segmentation=Segmentation(labels=labels),
        offset=(0, 0),
        keypoints=DescribedKeypoints(list(keypoints), descriptors),
        query=query,
    )


def _pair(i, j):
    return MatchPair(i, j, SimilarityScore(1.0, 1.0, 0.0, 0), 0.0)


def test_single_vote_lands_on_the_center():
    model = _model([(10.0, 5.0)])
    center, votes = estimate_location([_pair(0, 0)], model, [_query_spikes(0, (90.0, 95.0))])
    assert center == pytest.approx(np.array([100.0, 100.0]))
    assert votes == [((100.0, 100.0), 1.0)]


def test_votes_average_with_persistence_weights():
    query = [_query_spikes(0, (90.0, 100.0)), _query_spikes(1, (110.0, 100.0))]
    pairs = [_pair(0, 0), _pair(1, 1)]
    center, _ = estimate_location(pairs, _model([(0.0, 0.0), (0.0, 0.0)]), query)
    assert center == pytest.approx(np.array([100.0, 100.0]))
    center, _ = estimate_location(pairs, _model([(0.0, 0.0), (0.0, 0.0)], omega=[1.0, 3.0]), query)
    assert center == pytest.approx(np.array([105.0, 100.0]))


def test_location_is_invariant_to_weight_scale():
    query = [_query_spikes(0, (90.0, 100.0)), _query_spikes(1, (110.0, 97.0))]
    pairs = [_pair(0, 0), _pair(1, 1)]
    base, _ = estimate_location(pairs, _model([(1.0, 2.0), (-3.0, 0.5)], omega=[0.4, 0.9]), query)
    scaled, _ = estimate_location(pairs, _model([(1.0, 2.0), (-3.0, 0.5)], omega=[2.8, 6.3]), query)
    assert scaled == pytest.approx(base, abs=1e-9)


def test_no_pairs_raises():
    with pytest.raises(NoMatches):
        estimate_location([], _model([(0.0, 0.0)]), [])


@pytest.mark.parametrize("inside, flagged", [(0, False), (3, False), (4, True)])
def test_occlusion_needs_more_than_theta_o_background_matches(inside, flagged):
    bbox = BoundingBox(0, 0, 10, 10)
    positions = np.array([[5.0, 5.0]] * inside + [[50.0, 50.0]] * 3, dtype=np.float64).reshape(-1, 2)
    bg_matches = np.stack([np.arange(len(positions)), np.arange(len(positions))], axis=1)
    assert detect_occlusion(bbox, positions, bg_matches, 3) is flagged


def test_unmatched_persistence_decays():
    model = _model([(0.0, 0.0)])
    new = update_model(model, [], _observation([_query_spikes(0, (10.0, 10.0))]), NO_MATCHES, NO_MATCHES,
                       np.array([10.0, 10.0]), TrackerConfig())
    assert new.omega[0] == pytest.approx(0.9)
    assert model.omega[0] == 1.0


def test_exact_vote_adds_one_to_phi():
    model = _model([(2.0, 1.0)])
    query = [_query_spikes(0, (8.0, 9.0))]
    new = update_model(model, [_pair(0, 0)], _observation(query), NO_MATCHES, NO_MATCHES,
                       np.array([10.0, 10.0]), TrackerConfig())
    assert new.phi[0] == pytest.approx(2.0, abs=1e-12)
    assert new.omega[0] == pytest.approx(1.0)
    assert new.votes[0] == pytest.approx(np.array([2.0, 1.0]))


def test_vote_missing_by_three_pixels_adds_almost_nothing():
    model = _model([(2.0, 1.0)])
    query = [_query_spikes(0, (8.0, 9.0))]
    new = update_model(model, [_pair(0, 0)], _observation(query), NO_MATCHES, NO_MATCHES,
                       np.array([13.0, 10.0]), TrackerConfig())
    assert new.phi[0] == pytest.approx(1.0 + np.exp(-9.0), abs=1e-12)


def test_phi_cap_bounds_the_predictive_factor():
    model = _model([(2.0, 1.0)], phi=[4.5])
    query = [_query_spikes(0, (8.0, 9.0))]
    new = update_model(model, [_pair(0, 0)], _observation(query), NO_MATCHES, NO_MATCHES,
                       np.array([10.0, 10.0]), TrackerConfig(phi_cap=5.0))
    assert new.phi[0] == 5.0


def test_persistence_dynamics_over_many_frames():
    cfg = TrackerConfig()
    model = _model([(2.0, 1.0), (0.0, 0.0)], omega=[0.1, 1.0])
    query = [_query_spikes(0, (8.0, 9.0))]
    obs = _observation(query)
    center = np.array([10.0, 10.0])
    phis = []
    for frame in range(200):
        model = update_model(model, [_pair(0, 0)], obs, NO_MATCHES, NO_MATCHES, center, cfg)
        phis.append(model.phi[0])
        if frame == 19:
            assert model.omega[1] == pytest.approx(0.9 ** 20, abs=1e-9)
    assert model.omega[0] == pytest.approx(1.0, abs=1e-6)
    assert all(b >= a for a, b in zip(phis, phis[1:]))
    assert model.age.tolist() == [200, 200]


def test_weakest_spikes_evicted_when_a_new_one_is_born():
    model = _model([(0.0, 0.0), (3.0, 3.0)], omega=[1.0, 0.1], max_spikes=2)
    model.fg.append(np.array([[5.5, 0.5]]), np.array([0.0]), np.full((1, DESCRIPTOR_LENGTH), 0.1), 1.0)
    labels = np.zeros((20, 20), dtype=np.int32)
    labels[:, 10:] = 1
    query = [_query_spikes(0, (10.0, 10.0)), _query_spikes(1, (15.0, 10.0))]
    obs = _observation(query, labels, [Keypoint(15.5, 10.5, 0.0, 1.0)])

    new = update_model(model, [_pair(0, 0)], obs, np.array([[0, 0]]), NO_MATCHES, np.array([10.0, 10.0]),
                       TrackerConfig())
    assert len(new) == 2
    assert new.omega == pytest.approx(np.array([1.0, 0.1]))
    assert new.votes[1] == pytest.approx(np.array([-5.0, 0.0]))
    assert new.fg.omega[0] == pytest.approx(1.0)


def test_pool_eviction_prefers_lowest_persistence_then_oldest():
    pool = KeypointPool.empty(2)
    pool.append(np.zeros((3, 2)), np.zeros(3), np.zeros((3, DESCRIPTOR_LENGTH)), 0.5)
    pool.omega = np.array([0.5, 0.2, 0.2])
    pool.positions = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert pool.evict() == 1
    assert pool.positions[:, 0].tolist() == [0.0, 2.0]


def test_update_leaves_the_input_model_untouched():
    model = _model([(2.0, 1.0), (0.0, 0.0)])
    before = copy.deepcopy(model)
    update_model(model, [_pair(0, 0)], _observation([_query_spikes(0, (8.0, 9.0))]), NO_MATCHES, NO_MATCHES,
                 np.array([10.0, 10.0]), TrackerConfig())
    assert model == before


def test_init_on_a_tiny_box_in_a_flat_frame_raises():
    with pytest.raises(EmptyModel):
        init(uniform_frame(64, 64), BoundingBox(30, 30, 3, 3))


@pytest.fixture(scope="module")
def scenario_frames():
    spec = ScenarioSpec(kind=ScenarioKind.TRANSLATE, frames=2, width=160, height=120, target_size=(40, 40),
                        target_grain=5, background_grain=10, motion=(5.0, 0.0))
    return spec, synthdata.frames(spec)


def test_init_selects_target_superpixels(scenario_frames):
    spec, frames = scenario_frames
    box = synthdata.target_box(spec, 0)
    model = init(frames[0], box)

    assert len(model) > 0
    assert model.max_spikes == 3 * len(model)
    centers = model.spike_centers()
    assert box.contains(centers[:, 0], centers[:, 1]).mean() >= 0.9
    assert box.inflate(1.3).contains(centers[:, 0], centers[:, 1]).all()
    assert model.center == pytest.approx(np.array(box.center))

    assert len(model.bg) > 0
    bg = model.bg.positions
    assert not box.contains(bg[:, 0], bg[:, 1]).any()
    fg = model.fg.positions + model.center
    assert len(model.fg) > 0
    assert box.inflate(1.5).contains(fg[:, 0], fg[:, 1]).all()


def test_tracking_the_initial_frame_again_stays_put(scenario_frames):
    spec, frames = scenario_frames
    box = synthdata.target_box(spec, 0)
    model = init(frames[0], box)
    outcome, updated = track_frame(model, Frame(frames[0].pixels, 1))

    assert np.hypot(outcome.center[0] - box.center[0], outcome.center[1] - box.center[1]) <= 1.0
    assert outcome.n_valid_matches >= 0.8 * len(model)
    assert not outcome.occluded
    assert updated is not model


def test_translation_by_five_pixels(scenario_frames):
    spec, frames = scenario_frames
    box = synthdata.target_box(spec, 0)
    model = init(frames[0], box)
    outcome, _ = track_frame(model, frames[1])
    assert outcome.center[0] - box.center[0] == pytest.approx(5.0, abs=1.5)
    assert outcome.center[1] == pytest.approx(box.center[1], abs=1.5)


def test_unrecognizable_frame_falls_back_and_freezes_the_model(scenario_frames):
    spec, frames = scenario_frames
    model = init(frames[0], synthdata.target_box(spec, 0))
    digest = model.digest()
    blank = uniform_frame(spec.height, spec.width, color=(30, 60, 200))
    outcome, same = track_frame(model, Frame(blank.pixels, 1))

    assert outcome.fallback and outcome.occluded
    assert outcome.n_valid_matches == 0
    assert same is model
    assert model.digest() == digest
    assert outcome.center == pytest.approx(tuple(model.center))


def test_search_window_tracking(scenario_frames):
    spec, frames = scenario_frames
    box = synthdata.target_box(spec, 0)
    tracker = SpikesTracker(TrackerConfig(search_window=True))
    tracker.start(frames[0], box)
    outcome = tracker.step(frames[1])
    assert outcome.center[0] - box.center[0] == pytest.approx(5.0, abs=2.0)


def test_snapshot_round_trip(scenario_frames):
    spec, frames = scenario_frames
    model = init(frames[0], synthdata.target_box(spec, 0))
    snap = model.snapshot(0)
    restored = ModelSnapshot.parse_raw(snap.json())
    assert restored.digest == model.digest()
    assert len(restored.spikes) == len(model)
    assert restored.fg_pool_size == len(model.fg)


def test_tracker_requires_start():
    with pytest.raises(RuntimeError):
        SpikesTracker().step(uniform_frame(10, 10))


class RecordingKeypoints:
    """Harris backend that counts detect/describe calls."""

    def __init__(self, diameter):
        self.inner = HarrisGradientBackend.for_diameter(diameter)
        self.detected = 0
        self.described = 0

    def detect(self, frame, max_keypoints):
        self.detected += 1
        return self.inner.detect(frame, max_keypoints)

    def describe(self, frame, keypoints):
        self.described += 1
        return self.inner.describe(frame, keypoints)


class RecordingSegmenter:
    def __init__(self):
        self.inner = SlicBackend()
        self.plans = []

    def segment(self, frame, plan):
        self.plans.append(plan)
        return self.inner.segment(frame, plan)


class NoKeypoints:
    def detect(self, frame, max_keypoints):
        return []

    def describe(self, frame, keypoints):
        return DescribedKeypoints([], np.zeros((0, DESCRIPTOR_LENGTH)))


def test_tracker_uses_the_injected_backends(scenario_frames):
    spec, frames = scenario_frames
    box = synthdata.target_box(spec, 0)
    keypoints = RecordingKeypoints(plan_for(frames[0].dims, box.dims, TrackerConfig()).diameter)
    segmenter = RecordingSegmenter()
    tracker = SpikesTracker(TrackerConfig(), keypoint_backend=keypoints, segmenter=segmenter)
    tracker.start(frames[0], box)
    outcome = tracker.step(frames[1])

    assert keypoints.detected == keypoints.described == 2
    assert len(segmenter.plans) == 2
    assert segmenter.plans[0].diameter == pytest.approx(tracker.model.diameter)
    assert outcome.center[0] - box.center[0] == pytest.approx(5.0, abs=1.5)


def test_init_without_keypoints_keeps_empty_pools(scenario_frames):
    spec, frames = scenario_frames
    box = synthdata.target_box(spec, 0)
    model = init(frames[0], box, keypoint_backend=NoKeypoints())
    reference = init(frames[0], box)

    assert len(model) == len(reference)
    assert len(model.fg) == 0
    assert len(model.bg) == 0
    assert len(reference.fg) > 0
