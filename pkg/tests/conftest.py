import numpy as np
import pytest

from sensefuse.geometry import Rect, StaticMap, WorldPoint
from sensefuse.measurement import Cov2, WorldDetection
from sensefuse.scenario import Scenario, ScenarioConfig, build_scenario


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_scenario() -> Scenario:
    return build_scenario(ScenarioConfig())


@pytest.fixture
def unit_map() -> StaticMap:
    return StaticMap((Rect(0.0, 0.0, 10.0, 10.0),), Rect(-50.0, -50.0, 50.0, 50.0))


def make_detection(
    x: float, y: float, source_se: str = "se-0", is_clutter_truth: bool = False
) -> WorldDetection:
    return WorldDetection(
        point=WorldPoint(x, y),
        cov=Cov2(1.0, 0.0, 1.0),
        source_se=source_se,
        is_clutter_truth=is_clutter_truth,
    )
