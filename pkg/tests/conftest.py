from importlib import resources

import numpy as np
import pytest

from rltconic.poly import parse_problem


def load_eq4():
    text = resources.files("rltconic.data").joinpath("paper_eq4.pop").read_text(encoding="utf-8")
    return parse_problem(text)


@pytest.fixture
def eq4():
    return load_eq4()


def sample_box(prob, rng, k):
    lo, hi = np.asarray(prob.lower), np.asarray(prob.upper)
    return lo + rng.uniform(size=(k, prob.n)) * (hi - lo)
