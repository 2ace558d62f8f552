import numpy as np
import pytest

from lib.objectives import (
    QuadraticObjective,
    StochasticOracle,
    build_suite,
    make_logistic_suite,
    make_quadratic_suite,
    make_synthetic_classification,
)
from lib.topology import averaging_matrix, generate_graph, metropolis_weights


@pytest.fixture
def ring5():
    return metropolis_weights(generate_graph("ring", 5))


@pytest.fixture
def quad_suite5():
    return make_quadratic_suite(5, 3, mu=1.0, lip=4.0, seed=11)


@pytest.fixture
def logistic_ds():
    return make_synthetic_classification(200, 5, seed=4)


@pytest.fixture
def logistic_suite4(logistic_ds):
    return make_logistic_suite(logistic_ds, 4, seed=2)


@pytest.fixture
def single_quadratic():
    """n = 1, f = 1/2 (x - 3)^2."""
    return build_suite([QuadraticObjective(a=[[1.0]], b=[3.0])])


@pytest.fixture
def halves_suite():
    """Two agents with f_i = 1/2 x^2 (p = 1)."""
    return build_suite([QuadraticObjective(a=[[1.0]], b=[0.0]) for _ in range(2)])


@pytest.fixture
def exact_oracle():
    def make(suite, **kwargs):
        return StochasticOracle(suite, mode="exact", **kwargs)
    return make


@pytest.fixture
def uniform2():
    return averaging_matrix(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
