import numpy as np
import pytest
from hypothesis import settings, strategies as st

from ellipstab.poly import random_polynomial

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def rpoly(seed, nvars, degrees, density=0.5, mode="exact", **kw):
    return random_polynomial(np.random.default_rng(seed), nvars, degrees, density, mode, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
