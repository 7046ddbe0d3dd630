import pytest

from spikestrack.core.imaging import Frame
from spikestrack.models.trackingmodels import ScenarioKind, ScenarioSpec
from spikestrack.services import synthdata
from tests.helpers import textured_pixels


@pytest.fixture
def textured_frame() -> Frame:
    return Frame(textured_pixels(96, 96, seed=3))


@pytest.fixture
def small_spec() -> ScenarioSpec:
    """A short, small scenario that keeps tracking tests fast."""
    return ScenarioSpec(kind=ScenarioKind.TRANSLATE, frames=5, seed=7, width=160, height=120,
                        target_size=(40, 40), target_grain=5, background_grain=10, motion=(2.0, 0.0))


@pytest.fixture
def small_sequence(tmp_path, small_spec):
    directory = tmp_path / "seq_small"
    synthdata.generate(small_spec, str(directory))
    return directory
