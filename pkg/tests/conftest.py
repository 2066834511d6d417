import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# Training-backed tests blow the default 200ms deadline; disable it globally
# and keep example counts modest so the suite stays desk-scale.
settings.register_profile(
    "lsnpc",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("lsnpc")


@pytest.fixture
def rng():
    return np.random.default_rng(7)
