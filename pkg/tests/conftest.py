import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mirtcf.data import ResponseMatrix
from mirtcf.model import ModelSpec, ParameterSet

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_matrix(rng, m, n, p_obs=1.0):
    dense = (rng.random((m, n)) < 0.5).astype(float)
    dense[rng.random((m, n)) >= p_obs] = np.nan
    return ResponseMatrix.from_dense(dense)


def random_params(rng, spec: ModelSpec, m, n, scale=1.0):
    return ParameterSet(rng.normal(0, scale, (m, spec.person_cols)), rng.normal(0, scale, (n, spec.item_cols)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
