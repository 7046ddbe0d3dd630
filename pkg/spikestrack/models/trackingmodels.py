from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, validator

SNAPSHOT_VERSION = 1


class ScenarioKind(str, Enum):
    TRANSLATE = "translate"
    DEFORM = "deform"
    OCCLUDE = "occlude"
    ILLUM = "illum"
    CLUTTER = "clutter"


class ScenarioSpec(BaseModel):
    """A synthetic sequence: a textured target moving over a textured background."""

    kind: ScenarioKind = ScenarioKind.TRANSLATE
    frames: int = 30
    seed: int = 7
    width: int = 320
    height: int = 240
    target_size: Tuple[int, int] = (60, 60)
    target_grain: int = 6
    background_grain: int = 12
    plain_background: bool = False
    start: Optional[Tuple[int, int]] = None  # top-left; defaults to the frame center
    motion: Optional[Tuple[float, float]] = None  # per-frame displacement; see `displacement`
    occluder_size: Tuple[int, int] = (170, 80)
    occluder_frames: Tuple[int, int] = (10, 20)
    gain_start: float = 1.0
    gain_end: float = 1.5
    wobble: float = 0.15
    wobble_period: int = 20
    distractors: int = 3

    @validator("frames")
    def at_least_two_frames(cls, v):
        if v < 2:
            raise ValueError(f"frames must be >= 2, got {v}")
        return v

    @validator("width", "height", "target_grain", "background_grain", "wobble_period")
    def positive(cls, v, field):
        if v <= 0:
            raise ValueError(f"{field.name} must be > 0, got {v}")
        return v

    @validator("target_size", "occluder_size")
    def positive_size(cls, v, field):
        if v[0] <= 0 or v[1] <= 0:
            raise ValueError(f"{field.name} must be positive, got {v}")
        return v

    @validator("gain_start", "gain_end")
    def positive_gain(cls, v, field):
        if v <= 0:
            raise ValueError(f"{field.name} must be > 0, got {v}")
        return v

    @validator("distractors")
    def non_negative(cls, v):
        if v < 0:
            raise ValueError(f"distractors must be >= 0, got {v}")
        return v

    @property
    def displacement(self) -> Tuple[float, float]:
        """The occlusion scenario keeps its target still unless told otherwise."""
        if self.motion is not None:
            return self.motion
        return (0.0, 0.0) if self.kind == ScenarioKind.OCCLUDE else (3.0, 0.0)


class FrameRecord(BaseModel):
    frame: int
    x: float
    y: float
    w: float
    h: float
    occluded: bool
    n_matches: int


class SpikesRecord(BaseModel):
    frame: int
    superpixel: int
    center: Tuple[float, float]
    edges: List[Tuple[float, float]]


class ModelSpikesRecord(BaseModel):
    center: Tuple[float, float]
    vote: Tuple[float, float]
    omega: float
    phi: float
    age: int


class ModelSnapshot(BaseModel):
    version: int = SNAPSHOT_VERSION
    frame: int
    occluded: bool = False
    bbox_dims: Tuple[float, float]
    diameter: float
    last_centers: List[Tuple[float, float]]
    spikes: List[ModelSpikesRecord]
    fg_pool_size: int
    bg_pool_size: int
    digest: str


class TrackJobRequest(BaseModel):
    sequence_dir: str
    init_box: Optional[Tuple[float, float, float, float]] = None
    config: Dict[str, str] = Field(default_factory=dict)
    output_dir: Optional[str] = None
    overlay: bool = False


class EvalJobRequest(BaseModel):
    sequence_dirs: List[str]
    config: Dict[str, str] = Field(default_factory=dict)
    oracle: bool = False
    output_dir: Optional[str] = None

    @validator("sequence_dirs")
    def not_empty(cls, v):
        if not v:
            raise ValueError("sequence_dirs must not be empty")
        return v


class JobStatus(BaseModel):
    job_id: str
    status: str
    detail: Optional[str] = None
    files: List[str] = []
