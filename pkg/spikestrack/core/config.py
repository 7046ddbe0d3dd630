import os
import logging
from io import StringIO
from typing import Any, Dict, Literal, Mapping, Optional

from dotenv import load_dotenv, dotenv_values
from pydantic import BaseModel, Extra, ValidationError, validator

from spikestrack.core.exceptions import ConfigError

load_dotenv()

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


class Config:
    LOG_LEVEL = os.getenv("SPIKES_LOG_LEVEL", "INFO")
    LOG_FILE = os.getenv("SPIKES_LOG_FILE")
    THREADS = int(os.getenv("SPIKES_THREADS", 1))
    RESULTS_DIR = os.getenv("SPIKES_RESULTS_DIR", "results")
    WEBHOOK_URL = os.getenv("SPIKES_WEBHOOK_URL")
    REDIS_URL = os.getenv("SPIKES_REDIS_URL", "redis://localhost:6379/0")
    JOB_TTL = int(os.getenv("SPIKES_JOB_TTL", 7 * 24 * 3600))
    RATE_LIMIT = os.getenv("SPIKES_RATE_LIMIT", "5/minute")


config = Config()


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None):
    """Sets up root logging once for an entry point (CLI or HTTP service)."""
    handlers = [logging.StreamHandler()]
    log_file = log_file or config.LOG_FILE
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=(level or config.LOG_LEVEL).upper(),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def _open_unit(name: str, value: float) -> float:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must be in (0, 1), got {value}")
    return value


def _half_open_unit(name: str, value: float) -> float:
    if not 0.0 < value <= 1.0:
        raise ValueError(f"{name} must be in (0, 1], got {value}")
    return value


def _at_least(name: str, value: float, bound: float) -> float:
    if value < bound:
        raise ValueError(f"{name} must be >= {bound}, got {value}")
    return value


def _positive(name: str, value: float) -> float:
    if value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    return value


class TrackerConfig(BaseModel):
    """Every tunable of the tracker, with the published parameter values as defaults."""

    theta_c: float = 0.7
    theta_lo: float = 0.75
    lambda_1: float = 1.0
    lambda_2_factor: float = 4.0
    theta_o: int = 3
    alpha_f: float = 0.1
    alpha_v: float = 0.1
    beta: float = 0.1
    omega_min: float = 0.1
    radius_factor: float = 2.0
    superpixels_per_box: int = 30
    model_size_factor: int = 3
    fg_pool_cap: int = 1000
    bg_pool_cap: int = 1000
    compactness: float = 10.0
    slic_iterations: int = 10
    foreground_overlap: float = 0.6
    max_keypoints: int = 2000
    single_match_cap: float = 0.7
    phi_cap: Optional[float] = None
    segmentation_rule: Literal["per_box", "literal"] = "per_box"
    scoring_mode: Literal["full", "color_only", "structure_only"] = "full"
    search_window: bool = False
    search_window_scale: float = 3.0
    threads: int = 1

    class Config:
        extra = Extra.forbid
        validate_assignment = True

    @validator("theta_c", "theta_lo")
    def open_unit_interval(cls, v, field):
        return _open_unit(field.name, v)

    @validator("alpha_f", "alpha_v", "beta", "omega_min", "foreground_overlap")
    def half_open_unit_interval(cls, v, field):
        return _half_open_unit(field.name, v)

    @validator("fg_pool_cap", "bg_pool_cap", "superpixels_per_box", "model_size_factor",
               "slic_iterations", "max_keypoints", "threads")
    def at_least_one(cls, v, field):
        return _at_least(field.name, v, 1)

    @validator("lambda_1", "theta_o")
    def non_negative(cls, v, field):
        return _at_least(field.name, v, 0)

    @validator("lambda_2_factor", "radius_factor", "compactness", "single_match_cap")
    def strictly_positive(cls, v, field):
        return _positive(field.name, v)

    @validator("search_window_scale")
    def window_scale(cls, v, field):
        return _at_least(field.name, v, 1.0)

    @validator("phi_cap", pre=True)
    def optional_cap(cls, v, field):
        if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none")):
            return None
        return _at_least(field.name, float(v), 1.0)

    def to_text(self) -> str:
        """Serializes to the flat `key = value` format read by `load_tracker_config`."""
        lines = ["# spikestrack tracker configuration"]
        for name in self.__fields__:
            lines.append(f"{name} = {_format_value(getattr(self, name))}")
        return "\n".join(lines) + "\n"


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def build_tracker_config(values: Optional[Mapping[str, Any]] = None) -> TrackerConfig:
    """Validates a mapping of overrides, raising ConfigError naming the offending field."""
    values = dict(values or {})
    unknown = sorted(set(values) - set(TrackerConfig.__fields__))
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    try:
        return TrackerConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        field = str(first["loc"][0]) if first.get("loc") else "config"
        raise ConfigError(field, first["msg"]) from e


def parse_tracker_config(text: str) -> TrackerConfig:
    """Parses configuration text; see `load_tracker_config`."""
    raw = dotenv_values(stream=StringIO(text), interpolate=False)
    return _from_raw(raw)


def load_tracker_config(path: Optional[str]) -> TrackerConfig:
    """Loads a `key = value` file with `#` comments; no path means all defaults."""
    if path is None:
        return TrackerConfig()
    if not os.path.isfile(path):
        raise ConfigError("config", f"file not found: {path}")
    raw = dotenv_values(path, interpolate=False)
    return _from_raw(raw)


def _from_raw(raw: Mapping[str, Optional[str]]) -> TrackerConfig:
    values: Dict[str, Any] = {}
    for key, value in raw.items():
        if value is None:
            raise ConfigError(key, "expected 'key = value'")
        values[key.strip()] = value.strip()
    return build_tracker_config(values)
