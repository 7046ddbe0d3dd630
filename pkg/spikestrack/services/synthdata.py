"""Deterministic synthetic sequences with exact groundtruth.

A textured target (warm hues) moves over a textured background (cool hues). Positions are whole
pixels, so the emitted groundtruth is the exact extent of the rendered target mask.
"""
import json
import logging
import math
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import zoom
from skimage.color import hsv2rgb

from spikestrack.core.exceptions import SpecError
from spikestrack.core.imaging import BoundingBox, Frame
from spikestrack.models.trackingmodels import ScenarioKind, ScenarioSpec
from spikestrack.utils.sequence_io import (
    GROUNDTRUTH_FILE,
    SequenceSpec,
    write_frame,
    write_groundtruth,
)

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
OCCLUDER_GAP = 4

# hue in turns, saturation and value ranges
TARGET_PALETTE = ((0.0, 60.0 / 360.0), (0.5, 1.0), (0.25, 0.65))
BACKGROUND_PALETTE = ((180.0 / 360.0, 300.0 / 360.0), (0.4, 0.9), (0.2, 0.6))
PLAIN_BACKGROUND = (220.0 / 360.0, 0.5, 0.5)


def value_noise(rng: np.random.Generator, shape: Tuple[int, int], grain: int, octaves: int = 2) -> np.ndarray:
    """Blocky value noise mixed with bilinear octaves, scaled to [0, 1]."""
    h, w = shape
    gy, gx = math.ceil(h / grain) + 1, math.ceil(w / grain) + 1
    blocky = np.kron(rng.random((gy, gx)), np.ones((grain, grain)))[:h, :w]
    smooth = np.zeros((h, w))
    for octave in range(octaves):
        step = max(2, grain * (2 ** (octave + 1)))
        coarse = rng.random((math.ceil(h / step) + 2, math.ceil(w / step) + 2))
        smooth += zoom(coarse, step, order=1)[:h, :w] / (2 ** octave)
    smooth = (smooth - smooth.min()) / max(smooth.max() - smooth.min(), 1e-12)
    return 0.65 * blocky + 0.35 * smooth


def texture(rng: np.random.Generator, shape: Tuple[int, int], grain: int, palette) -> np.ndarray:
    (h0, h1), (s0, s1), (v0, v1) = palette
    hsv = np.stack([
        h0 + (h1 - h0) * value_noise(rng, shape, grain),
        s0 + (s1 - s0) * value_noise(rng, shape, grain),
        v0 + (v1 - v0) * value_noise(rng, shape, grain),
    ], axis=-1)
    return hsv2rgb(np.clip(hsv, 0.0, 1.0))


@dataclass
class Scene:
    background: np.ndarray  # float RGB in [0, 1]
    target: np.ndarray
    occluder: np.ndarray
    distractors: List[Tuple[int, int, np.ndarray]]


def build_scene(spec: ScenarioSpec) -> Scene:
    rng = np.random.default_rng(spec.seed)
    shape = (spec.height, spec.width)
    if spec.plain_background:
        background = np.broadcast_to(hsv2rgb(np.array([[PLAIN_BACKGROUND]]))[0, 0], shape + (3,)).copy()
    else:
        background = texture(rng, shape, spec.background_grain, BACKGROUND_PALETTE)
    tw, th = spec.target_size
    target = texture(rng, (th, tw), spec.target_grain, TARGET_PALETTE)
    ow, oh = spec.occluder_size
    occluder = texture(rng, (oh, ow), spec.background_grain // 2 or 1, BACKGROUND_PALETTE)

    distractors = []
    if spec.kind == ScenarioKind.CLUTTER:
        for _ in range(spec.distractors):
            dw, dh = max(8, tw // 2), max(8, th // 2)
            x = int(rng.integers(0, max(1, spec.width - dw)))
            y = int(rng.integers(0, max(1, spec.height - dh)))
            distractors.append((x, y, texture(rng, (dh, dw), spec.target_grain, TARGET_PALETTE)))
    return Scene(background, target, occluder, distractors)


def start_position(spec: ScenarioSpec) -> Tuple[int, int]:
    if spec.start is not None:
        return spec.start
    tw, th = spec.target_size
    dx, dy = spec.displacement
    span = spec.frames - 1
    return (int(round((spec.width - tw) / 2.0 - dx * span / 2.0)),
            int(round((spec.height - th) / 2.0 - dy * span / 2.0)))


def target_origin(spec: ScenarioSpec, k: int) -> Tuple[int, int]:
    x0, y0 = start_position(spec)
    dx, dy = spec.displacement
    return x0 + int(round(dx * k)), y0 + int(round(dy * k))


def row_shifts(spec: ScenarioSpec, k: int) -> np.ndarray:
    """Horizontal shift of every target row (shear wobble), zero for rigid kinds."""
    th = spec.target_size[1]
    if spec.kind != ScenarioKind.DEFORM:
        return np.zeros(th, dtype=np.int64)
    shear = spec.wobble * math.sin(2.0 * math.pi * k / spec.wobble_period)
    return np.round(shear * (np.arange(th) - (th - 1) / 2.0)).astype(np.int64)


def target_box(spec: ScenarioSpec, k: int) -> BoundingBox:
    x, y = target_origin(spec, k)
    shifts = row_shifts(spec, k)
    tw, th = spec.target_size
    return BoundingBox(float(x + shifts.min()), float(y), float(tw + shifts.max() - shifts.min()), float(th))


def occluder_origin(spec: ScenarioSpec, k: int) -> Optional[Tuple[int, int]]:
    """Occluder top-left: parked left of the target, then sweeping across it to the right."""
    if spec.kind != ScenarioKind.OCCLUDE:
        return None
    tx, ty = target_origin(spec, k)
    tw, th = spec.target_size
    ow, oh = spec.occluder_size
    first, last = spec.occluder_frames
    left = tx - ow - OCCLUDER_GAP
    right = tx + tw + OCCLUDER_GAP
    t = min(1.0, max(0.0, (k - first) / max(1, last - first)))
    return int(round(left + t * (right - left))), ty + th // 2 - oh // 2


def _paste(canvas: np.ndarray, patch: np.ndarray, x: int, y: int):
    h, w = patch.shape[:2]
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(canvas.shape[1], x + w), min(canvas.shape[0], y + h)
    if x1 > x0 and y1 > y0:
        canvas[y0:y1, x0:x1] = patch[y0 - y:y1 - y, x0 - x:x1 - x]


def _target_layer(spec: ScenarioSpec, scene: Scene, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Target rendered on a full-frame canvas, with its coverage mask."""
    layer = np.zeros_like(scene.background)
    mask = np.zeros(scene.background.shape[:2], dtype=bool)
    x, y = target_origin(spec, k)
    tw = spec.target_size[0]
    for r, shift in enumerate(row_shifts(spec, k)):
        row = y + r
        if 0 <= row < spec.height:
            c0, c1 = max(0, x + shift), min(spec.width, x + shift + tw)
            if c1 > c0:
                layer[row, c0:c1] = scene.target[r, c0 - (x + shift):c1 - (x + shift)]
                mask[row, c0:c1] = True
    return layer, mask


def render(spec: ScenarioSpec, scene: Scene, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Frame k as uint8 RGB, and the mask of visible target pixels."""
    canvas = scene.background.copy()
    for x, y, patch in scene.distractors:
        _paste(canvas, patch, x, y)
    layer, mask = _target_layer(spec, scene, k)
    canvas[mask] = layer[mask]

    visible = mask.copy()
    origin = occluder_origin(spec, k)
    if origin is not None:
        _paste(canvas, scene.occluder, origin[0], origin[1])
        cover = np.zeros_like(mask)
        _paste(cover, np.ones(scene.occluder.shape[:2], dtype=bool), origin[0], origin[1])
        visible &= ~cover

    if spec.kind == ScenarioKind.ILLUM:
        canvas = canvas * gain(spec, k)
    return np.clip(np.round(canvas * 255.0), 0, 255).astype(np.uint8), visible


def gain(spec: ScenarioSpec, k: int) -> float:
    return spec.gain_start + (spec.gain_end - spec.gain_start) * k / (spec.frames - 1)


def validate(spec: ScenarioSpec):
    """Every non-occlusion scenario must keep the whole target inside the frame."""
    tw, th = spec.target_size
    if tw > spec.width or th > spec.height:
        raise SpecError(f"target {tw}x{th} does not fit a {spec.width}x{spec.height} frame")
    if spec.kind == ScenarioKind.OCCLUDE:
        return
    for k in range(spec.frames):
        box = target_box(spec, k)
        if box.x < 0 or box.y < 0 or box.x + box.w > spec.width or box.y + box.h > spec.height:
            raise SpecError(f"frame {k}: target box {box.as_tuple()} leaves the {spec.width}x{spec.height} frame")


def target_visibility(spec: ScenarioSpec, k: int, scene: Optional[Scene] = None) -> float:
    scene = scene or build_scene(spec)
    _, visible = render(spec, scene, k)
    _, mask = _target_layer(spec, scene, k)
    return float(visible.sum()) / max(1, int(mask.sum()))


def frames(spec: ScenarioSpec) -> List[Frame]:
    """Renders the whole scenario in memory."""
    validate(spec)
    scene = build_scene(spec)
    return [Frame(render(spec, scene, k)[0], k) for k in range(spec.frames)]


def generate(spec: ScenarioSpec, output_dir: str) -> SequenceSpec:
    """Writes numbered PNG frames, the groundtruth file and a manifest to `output_dir`."""
    validate(spec)
    os.makedirs(output_dir, exist_ok=True)
    scene = build_scene(spec)
    paths, boxes = [], []
    for k in range(spec.frames):
        pixels, _ = render(spec, scene, k)
        path = os.path.join(output_dir, f"{k + 1:04d}.png")
        write_frame(Frame(pixels, k), path)
        paths.append(path)
        boxes.append(target_box(spec, k))
    write_groundtruth(boxes, os.path.join(output_dir, GROUNDTRUTH_FILE))

    manifest = {
        "spec": json.loads(spec.json()),
        "groundtruth": [list(b.as_tuple()) for b in boxes],
    }
    if spec.kind == ScenarioKind.OCCLUDE:
        ow, oh = spec.occluder_size
        manifest["occluder"] = [
            {"frame": k, "x": origin[0], "y": origin[1], "w": ow, "h": oh}
            for k, origin in ((k, occluder_origin(spec, k)) for k in range(spec.frames))
        ]
    with open(os.path.join(output_dir, MANIFEST_FILE), "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)

    logger.info(f"Generated {spec.kind.value} scenario: {spec.frames} frames in {output_dir}.")
    return SequenceSpec(name=os.path.basename(os.path.normpath(output_dir)), frame_paths=paths, groundtruth=boxes)


def load_scenario(path: str) -> ScenarioSpec:
    return ScenarioSpec.parse_file(path)
