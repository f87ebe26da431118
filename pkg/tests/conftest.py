import os

import hypothesis
import numpy as np
import pytest

from corrspec.core import ClockSpec

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=500, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def spec():
    return ClockSpec()


@pytest.fixture
def ideal():
    return ClockSpec.ideal()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
