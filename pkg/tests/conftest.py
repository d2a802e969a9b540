import numpy as np
import pytest

from twrelay import ChannelState, sample_states


@pytest.fixture(scope="session")
def seed7_states():
    """The 1000-state reciprocal Rayleigh draw used by the seeded regressions."""
    return sample_states(1000, 7)


@pytest.fixture
def unit_state():
    return ChannelState(1.0, 1.0, 1.0, 1.0)


@pytest.fixture
def rand_state():
    """Factory: one reciprocal state with exponential(1) gains from `rng`."""

    def make(rng: np.random.Generator) -> ChannelState:
        g1, g2 = rng.exponential(1.0, size=2)
        return ChannelState(float(g1), float(g2), float(g1), float(g2))

    return make
