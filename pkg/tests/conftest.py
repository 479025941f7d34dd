import numpy as np
import pytest

from spdsliced import EmpiricalSpdMeasure, RngState, wishart_stack


@pytest.fixture
def nprng():
    return np.random.default_rng(20240717)


def random_sym(rng, d, scale=1.0):
    z = rng.standard_normal((d, d))
    return scale * 0.5 * (z + z.T)


def random_spd(rng, d, dof=None):
    dof = dof or 4 * d
    g = rng.standard_normal((dof, d))
    return g.T @ g / dof


def wishart_measure(seed, n, d, dof=None, scale=None):
    dof = dof or 3 * d
    return EmpiricalSpdMeasure(wishart_stack(RngState(seed), n, d, dof, scale=scale))
