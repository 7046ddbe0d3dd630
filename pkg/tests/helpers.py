import numpy as np

from spikestrack.core.imaging import Frame
from spikestrack.services import synthdata


def textured_pixels(height: int, width: int, seed: int = 0, grain: int = 4) -> np.ndarray:
    rng = np.random.default_rng(seed)
    rgb = synthdata.texture(rng, (height, width), grain, synthdata.TARGET_PALETTE)
    return np.round(rgb * 255.0).astype(np.uint8)


def uniform_frame(height: int, width: int, color=(90, 120, 200)) -> Frame:
    pixels = np.empty((height, width, 3), dtype=np.uint8)
    pixels[...] = color
    return Frame(pixels)
