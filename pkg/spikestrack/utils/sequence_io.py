import csv
import logging
import os
import re
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Set

import numpy as np
from PIL import Image

from spikestrack.core.exceptions import SequenceLoadError
from spikestrack.core.imaging import BoundingBox, Frame

logger = logging.getLogger(__name__)

GROUNDTRUTH_FILE = "groundtruth_rect.txt"
FRAME_EXTENSIONS = (".png", ".jpg", ".jpeg")
_SEPARATORS = re.compile(r"[,\t ]+")
_NUMBERED = re.compile(r"^(\d+)\.(png|jpe?g)$", re.IGNORECASE)


@dataclass
class SequenceSpec:
    name: str
    frame_paths: List[str]
    groundtruth: List[BoundingBox]

    @property
    def init_box(self) -> BoundingBox:
        return self.groundtruth[0]

    def __len__(self) -> int:
        return len(self.frame_paths)

    def frames(self) -> Iterator[Frame]:
        for i, path in enumerate(self.frame_paths):
            yield read_frame(path, i)


def frame_directory(sequence_dir: str) -> str:
    """Frames live either directly in the sequence directory or in its `img/` subdirectory."""
    img = os.path.join(sequence_dir, "img")
    return img if os.path.isdir(img) else sequence_dir


def list_frames(sequence_dir: str) -> List[str]:
    if not os.path.isdir(sequence_dir):
        raise SequenceLoadError(f"Sequence directory not found: {sequence_dir}")
    directory = frame_directory(sequence_dir)
    numbered = []
    for name in os.listdir(directory):
        match = _NUMBERED.match(name)
        if match:
            numbered.append((int(match.group(1)), name))
    if not numbered:
        raise SequenceLoadError(f"No numbered PNG/JPG frames in {directory}")
    numbered.sort()
    return [os.path.join(directory, name) for _, name in numbered]


def read_frame(path: str, index: int = 0) -> Frame:
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("RGB"))
    except (OSError, ValueError) as e:
        raise SequenceLoadError(f"Cannot read frame {path}: {e}") from e
    return Frame(pixels, index)


def write_frame(frame: Frame, path: str):
    Image.fromarray(frame.pixels).save(path, format="PNG")


def parse_groundtruth(text: str, one_indexed: bool = False, source: str = "groundtruth") -> List[BoundingBox]:
    """One `x,y,w,h` box per line, separated by commas, tabs or spaces."""
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = [f for f in _SEPARATORS.split(line) if f]
        if len(fields) != 4:
            raise SequenceLoadError(f"{source}:{lineno}: expected 4 values, got {len(fields)}")
        try:
            x, y, w, h = (float(f) for f in fields)
        except ValueError as e:
            raise SequenceLoadError(f"{source}:{lineno}: {e}") from e
        if w <= 0 or h <= 0:
            raise SequenceLoadError(f"{source}:{lineno}: box needs positive dimensions")
        if one_indexed:
            x, y = x - 1.0, y - 1.0
        boxes.append(BoundingBox(x, y, w, h))
    return boxes


def parse_box(text: str) -> BoundingBox:
    """Parses an `x,y,w,h` command-line box."""
    fields = [f for f in _SEPARATORS.split(text.strip()) if f]
    if len(fields) != 4:
        raise ValueError(f"expected x,y,w,h, got {text!r}")
    x, y, w, h = (float(f) for f in fields)
    return BoundingBox(x, y, w, h)


def load_sequence(sequence_dir: str, one_indexed: bool = False, require_groundtruth: bool = True) -> SequenceSpec:
    frames = list_frames(sequence_dir)
    gt_path = os.path.join(sequence_dir, GROUNDTRUTH_FILE)
    groundtruth: List[BoundingBox] = []
    if os.path.isfile(gt_path):
        with open(gt_path) as handle:
            groundtruth = parse_groundtruth(handle.read(), one_indexed, gt_path)
        if len(groundtruth) != len(frames):
            raise SequenceLoadError(
                f"{sequence_dir}: {len(frames)} frames but {len(groundtruth)} groundtruth boxes"
            )
    elif require_groundtruth:
        raise SequenceLoadError(f"Missing {GROUNDTRUTH_FILE} in {sequence_dir}")
    if require_groundtruth and len(frames) < 2:
        raise SequenceLoadError(f"{sequence_dir}: a sequence needs at least 2 frames")
    name = os.path.basename(os.path.normpath(sequence_dir))
    logger.debug(f"Loaded sequence {name}: {len(frames)} frames.")
    return SequenceSpec(name=name, frame_paths=frames, groundtruth=groundtruth)


def read_sequence_list(path: str) -> List[str]:
    """Sequence directories, one per line; relative entries resolve against the list file."""
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path) as handle:
        for line in handle:
            line = line.split("#", 1)[0].strip()
            if line:
                entries.append(line if os.path.isabs(line) else os.path.join(base, line))
    return entries


def read_tag_file(path: str) -> Dict[str, Set[str]]:
    """`sequence tag1 tag2 ...` lines."""
    tags: Dict[str, Set[str]] = {}
    with open(path) as handle:
        for line in handle:
            fields = [f for f in _SEPARATORS.split(line.split("#", 1)[0].strip()) if f]
            if fields:
                tags.setdefault(fields[0], set()).update(fields[1:])
    return tags


def filter_by_tag(sequence_dirs: Sequence[str], tags: Dict[str, Set[str]], tag: Optional[str]) -> List[str]:
    if tag is None:
        return list(sequence_dirs)
    return [d for d in sequence_dirs if tag in tags.get(os.path.basename(os.path.normpath(d)), set())]


def write_groundtruth(boxes: Sequence[BoundingBox], path: str):
    with open(path, "w") as handle:
        for b in boxes:
            handle.write(f"{_num(b.x)},{_num(b.y)},{_num(b.w)},{_num(b.h)}\n")


def write_boxes_csv(records, path: str):
    """Per-frame tracking output: frame,x,y,w,h,occluded,n_matches."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["frame", "x", "y", "w", "h", "occluded", "n_matches"])
        for r in records:
            writer.writerow([r.frame, f"{r.x:.3f}", f"{r.y:.3f}", f"{r.w:.3f}", f"{r.h:.3f}",
                             int(r.occluded), r.n_matches])


def _num(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else f"{value:.3f}"
