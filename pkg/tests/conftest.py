import copy

import pytest

from jjtune import twin
from jjtune.config import load_config


@pytest.fixture(scope="session")
def default_config():
    return load_config()


@pytest.fixture
def ld1(default_config):
    """Low-dose-1 variant with drop and hazard disabled (clean dynamics)."""
    variant = copy.deepcopy(default_config.variant("low_dose_1"))
    variant.drop = twin.DropModel()
    variant.hazard = twin.FailureModel()
    return variant


@pytest.fixture
def ld1_full(default_config):
    """Low-dose-1 variant as shipped (drop and hazard enabled)."""
    return copy.deepcopy(default_config.variant("low_dose_1"))


@pytest.fixture
def hd1(default_config):
    variant = copy.deepcopy(default_config.variant("high_dose_1"))
    variant.hazard = twin.FailureModel()
    return variant
