import json
import os

import numpy as np
import pytest

from spikestrack.core.exceptions import SpecError
from spikestrack.models.trackingmodels import ScenarioKind, ScenarioSpec
from spikestrack.services import synthdata
from spikestrack.services.keypoints import detect
from spikestrack.utils.sequence_io import GROUNDTRUTH_FILE, load_sequence


def test_translation_groundtruth_is_arithmetic(tmp_path):
    spec = ScenarioSpec(kind=ScenarioKind.TRANSLATE, frames=30, motion=(3.0, 0.0))
    sequence = synthdata.generate(spec, str(tmp_path / "translate"))
    xs = [b.x for b in sequence.groundtruth]
    assert np.diff(xs).tolist() == [3.0] * 29
    assert {b.y for b in sequence.groundtruth} == {sequence.groundtruth[0].y}
    assert {b.dims for b in sequence.groundtruth} == {(60.0, 60.0)}

    loaded = load_sequence(str(tmp_path / "translate"))
    assert [b.as_tuple() for b in loaded.groundtruth] == [b.as_tuple() for b in sequence.groundtruth]


def test_generation_is_deterministic(tmp_path):
    spec = ScenarioSpec(kind=ScenarioKind.CLUTTER, frames=4, width=120, height=90, target_size=(30, 30),
                        motion=(2.0, 1.0))
    first = str(tmp_path / "first")
    second = str(tmp_path / "second")
    synthdata.generate(spec, first)
    synthdata.generate(spec, second)
    for name in sorted(os.listdir(first)):
        with open(os.path.join(first, name), "rb") as a, open(os.path.join(second, name), "rb") as b:
            assert a.read() == b.read(), name


def test_different_seeds_differ():
    a = synthdata.frames(ScenarioSpec(frames=2, seed=1, width=64, height=48, target_size=(16, 16)))
    b = synthdata.frames(ScenarioSpec(frames=2, seed=2, width=64, height=48, target_size=(16, 16)))
    assert not np.array_equal(a[0].pixels, b[0].pixels)


@pytest.mark.parametrize("k", [0, 5, 10, 15])
def test_deformed_groundtruth_is_the_rendered_extent(k):
    spec = ScenarioSpec(kind=ScenarioKind.DEFORM, frames=20)
    scene = synthdata.build_scene(spec)
    _, mask = synthdata.render(spec, scene, k)
    rows, cols = np.nonzero(mask)
    box = synthdata.target_box(spec, k)
    assert box.as_tuple() == (cols.min(), rows.min(), cols.max() - cols.min() + 1, rows.max() - rows.min() + 1)


def test_deformation_changes_the_width():
    spec = ScenarioSpec(kind=ScenarioKind.DEFORM, frames=20)
    widths = {synthdata.target_box(spec, k).w for k in range(20)}
    assert min(widths) == 60.0
    assert max(widths) > 60.0


def test_illumination_follows_the_gain_ramp():
    spec = ScenarioSpec(kind=ScenarioKind.ILLUM, frames=50)
    frames = synthdata.frames(spec)
    base = frames[0].pixels.astype(np.float64).mean()
    for k in (10, 25, 49):
        ratio = frames[k].pixels.astype(np.float64).mean() / base
        assert ratio == pytest.approx(synthdata.gain(spec, k), rel=0.02)


def test_occluder_hides_the_target_mid_sweep(tmp_path):
    spec = ScenarioSpec(kind=ScenarioKind.OCCLUDE, frames=30)
    scene = synthdata.build_scene(spec)
    for k in range(12, 19):
        assert synthdata.target_visibility(spec, k, scene) < 0.3
    assert synthdata.target_visibility(spec, 0, scene) == 1.0
    assert synthdata.target_visibility(spec, 29, scene) == 1.0

    synthdata.generate(spec, str(tmp_path / "occ"))
    with open(tmp_path / "occ" / synthdata.MANIFEST_FILE) as handle:
        manifest = json.load(handle)
    assert len(manifest["occluder"]) == 30
    assert manifest["occluder"][12]["x"] < manifest["occluder"][18]["x"]
    assert manifest["spec"]["kind"] == "occlude"


def test_target_carries_enough_keypoints():
    spec = ScenarioSpec(kind=ScenarioKind.TRANSLATE, frames=2)
    frame = synthdata.frames(spec)[0]
    box = synthdata.target_box(spec, 0)
    on_target = [k for k in detect(frame) if box.contains(k.x, k.y)]
    assert len(on_target) >= 10


def test_target_leaving_the_frame_is_rejected(tmp_path):
    spec = ScenarioSpec(kind=ScenarioKind.TRANSLATE, frames=30, start=(200, 90), motion=(5.0, 0.0))
    with pytest.raises(SpecError):
        synthdata.generate(spec, str(tmp_path / "bad"))
    assert not os.path.exists(tmp_path / "bad" / GROUNDTRUTH_FILE)


def test_scenario_file_round_trip(tmp_path):
    spec = ScenarioSpec(kind=ScenarioKind.ILLUM, frames=12, gain_end=1.3)
    path = tmp_path / "scenario.json"
    path.write_text(spec.json())
    assert synthdata.load_scenario(str(path)) == spec


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(frames=1)
    with pytest.raises(ValueError):
        ScenarioSpec(kind="spin")
