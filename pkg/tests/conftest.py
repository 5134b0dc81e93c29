import numpy as np
import pytest

from dance import RiskSpec, RiskView, synth_logistic, window
from dance.solver import resolve_spec


def make_view(n=256, d=30, seed=0, c=0.1, gamma=0.5, margin=1.0):
    ds = synth_logistic(n, d, seed, margin)
    spec = resolve_spec(RiskSpec(c=c, gamma=gamma), ds)
    return RiskView(spec, window(ds, n))


@pytest.fixture
def view30():
    return make_view()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
