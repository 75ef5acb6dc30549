import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

warnings.filterwarnings("ignore", message="The TBB threading layer")

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def circle_frames(model, count, phase=0.0):
    th = phase + 2 * np.pi * np.arange(count) / count
    return [model.frame_at(model.point(t)) for t in th]
